"""Deterministic desk-scale vineyard simulator.

Generates two plant rows around an analytic centerline (straight or a
circular arc), renders limited-FOV depth clouds against the plant points
and the ground plane, integrates the rover with the exact unicycle
update, and closes the loop with the mission supervisor. Everything is
driven by a single seed, so identical inputs give bit-identical logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ControlInput, Point2, QuatPose, heading_of, pose_from, wrap_angle
from .nmpc import NmpcConfig, NmpcController, SolverStatus
from .pipeline import PerceptionStatus, PipelineConfig, process
from .supervisor import (APPROACH_DONE_TOL, Detection, FallbackConfig,
                         MissionSupervisor, Mode)


@dataclass
class ObstacleSpec:
    x: float = 0.0
    y: float = 0.0
    radius: float = 0.1


@dataclass
class WorldSpec:
    row_length: float = 20.0          # measured traversal span, m
    intra_row_space: float = 1.5      # lateral distance between rows, m
    curvature: float = 0.0            # 1/m; 0 = straight
    plant_spacing: float = 0.75       # m along the row
    plant_radius: float = 0.2         # canopy radius, m
    plant_height: float = 2.0         # m
    canopy_points_per_plant: int = 220
    pergola: bool = False             # overhead canopy above the crop band
    noise_sigma: float = 0.0          # depth noise along the ray, m
    seed: int = 0
    extra_obstacles: list[ObstacleSpec] = field(default_factory=list)
    canopy_overhang: float = 0.0      # plants continue this far past row_length

    def validate(self, path: str = "world") -> list[str]:
        errs = []
        if not self.row_length > 0:
            errs.append(f"{path}.row_length: must be > 0")
        if not self.intra_row_space > 0:
            errs.append(f"{path}.intra_row_space: must be > 0")
        if not self.plant_spacing > 0:
            errs.append(f"{path}.plant_spacing: must be > 0")
        if self.noise_sigma < 0:
            errs.append(f"{path}.noise_sigma: must be >= 0")
        if self.canopy_overhang < 0:
            errs.append(f"{path}.canopy_overhang: must be >= 0")
        if abs(self.curvature) > 0:
            if 1.0 / abs(self.curvature) <= self.intra_row_space:
                errs.append(f"{path}.curvature: turn radius must exceed the row spacing")
        return errs


@dataclass
class CameraSpec:
    h_fov: float = math.radians(87.0)
    v_fov: float = math.radians(58.0)
    max_range: float = 6.0
    rays_h: int = 160
    rays_v: int = 90
    mount_height: float = 0.4

    def validate(self, path: str = "camera") -> list[str]:
        errs = []
        if not 0.0 < self.h_fov < math.pi:
            errs.append(f"{path}.h_fov: must be in (0, pi) radians")
        if not 0.0 < self.v_fov < math.pi:
            errs.append(f"{path}.v_fov: must be in (0, pi) radians")
        if not self.max_range > 0:
            errs.append(f"{path}.max_range: must be > 0")
        if self.rays_h < 2 or self.rays_v < 2:
            errs.append(f"{path}.rays_h/rays_v: must be >= 2")
        return errs


@dataclass
class LidarSpec:
    """Planar-sweep variant: full-circle azimuth, a few elevation rings."""

    v_fov: float = math.radians(30.0)
    max_range: float = 12.0
    rays_h: int = 720
    rings: int = 16
    mount_height: float = 0.5


@dataclass
class TargetSpec:
    x: float = 0.0
    y: float = 0.0
    standoff: float = 0.5
    detection_range: float = 4.0

    def validate(self, path: str = "target") -> list[str]:
        errs = []
        if not self.standoff > 0:
            errs.append(f"{path}.standoff: must be > 0")
        if not self.detection_range > 0:
            errs.append(f"{path}.detection_range: must be > 0")
        return errs


@dataclass(frozen=True)
class Centerline:
    """Analytic reference path starting at the origin heading +x."""

    length: float
    curvature: float = 0.0

    def point(self, s: float) -> tuple[float, float]:
        k = self.curvature
        if abs(k) < 1e-12:
            return (s, 0.0)
        return (math.sin(k * s) / k, (1.0 - math.cos(k * s)) / k)

    def tangent_angle(self, s: float) -> float:
        return self.curvature * s

    def normal(self, s: float) -> tuple[float, float]:
        t = self.tangent_angle(s)
        return (-math.sin(t), math.cos(t))

    def project(self, x: float, y: float) -> tuple[float, float]:
        """Arc-length coordinate and signed lateral offset (positive left)."""
        k = self.curvature
        if abs(k) < 1e-12:
            return (x, y)
        vx = x
        vy = y - 1.0 / k
        phi = math.atan2(k * vx, -k * vy)
        s = phi / k
        r = math.hypot(vx, vy)
        lateral = (1.0 - abs(k) * r) / k
        return (s, lateral)


@dataclass
class World:
    spec: WorldSpec
    centerline: Centerline
    points: np.ndarray        # (N, 3) world frame
    stems: np.ndarray         # (M, 2) collision circle centers
    stem_radii: np.ndarray    # (M,)


def generate_world(spec: WorldSpec) -> World:
    """Plant two rows of seeded-random canopy clusters around the centerline."""
    rng = np.random.default_rng(spec.seed)
    planted = spec.row_length + spec.canopy_overhang
    line = Centerline(planted, spec.curvature)
    half = spec.intra_row_space / 2.0

    points: list[np.ndarray] = []
    stems: list[tuple[float, float]] = []
    radii: list[float] = []

    s_values = np.arange(0.0, planted + 1e-9, spec.plant_spacing)
    for side in (1.0, -1.0):
        for s in s_values:
            cx, cy = line.point(s)
            nx, ny = line.normal(s)
            sx = cx + side * half * nx
            sy = cy + side * half * ny
            stems.append((sx, sy))
            radii.append(spec.plant_radius)
            u = rng.random((spec.canopy_points_per_plant, 3))
            r = spec.plant_radius * np.sqrt(u[:, 0])
            phi = 2.0 * math.pi * u[:, 1]
            z = spec.plant_height * (1.0 - u[:, 2])
            points.append(np.column_stack([sx + r * np.cos(phi),
                                           sy + r * np.sin(phi), z]))

    if spec.pergola:
        # Overhead canopy spanning the corridor, above the usable crop band.
        per_step = max(10, spec.canopy_points_per_plant // 2)
        for s in s_values:
            cx, cy = line.point(s)
            nx, ny = line.normal(s)
            u = rng.random((per_step, 2))
            lat = (u[:, 0] - 0.5) * spec.intra_row_space
            z = 2.2 + 0.6 * u[:, 1]
            points.append(np.column_stack([cx + lat * nx, cy + lat * ny, z]))

    for obs in spec.extra_obstacles:
        count = max(60, int(300 * obs.radius))
        u = rng.random((count, 3))
        r = obs.radius * np.sqrt(u[:, 0])
        phi = 2.0 * math.pi * u[:, 1]
        z = 0.2 + 0.6 * u[:, 2]
        points.append(np.column_stack([obs.x + r * np.cos(phi),
                                       obs.y + r * np.sin(phi), z]))
        stems.append((obs.x, obs.y))
        radii.append(obs.radius)

    cloud = np.vstack(points) if points else np.zeros((0, 3))
    return World(spec=spec, centerline=line, points=cloud,
                 stems=np.array(stems, dtype=float).reshape(-1, 2),
                 stem_radii=np.array(radii, dtype=float))


def export_world_xyz(world: World, path: str) -> None:
    from .cloud_io import write_cloud
    write_cloud(path, world.points)


def _to_rover_frame(points: np.ndarray, pose: QuatPose) -> np.ndarray:
    theta = heading_of(pose)
    c, s = math.cos(theta), math.sin(theta)
    dx = points[:, 0] - pose.x1
    dy = points[:, 1] - pose.x2
    out = np.empty_like(points)
    out[:, 0] = c * dx + s * dy
    out[:, 1] = -s * dx + c * dy
    out[:, 2] = points[:, 2]
    return out


def _raycast(local_points: np.ndarray, mount: float, az_lo: float, n_az: int,
             d_az: float, el_lo: float, n_el: int, d_el: float,
             max_range: float, hit_radius: float, wrap_az: bool,
             with_ground: bool, noise_sigma: float,
             rng: np.random.Generator | None) -> np.ndarray:
    """Shared depth renderer: nearest hit per ray, points as small disks."""
    rel = local_points.copy()
    rel[:, 2] -= mount
    rho = np.linalg.norm(rel, axis=1)
    near = (rho > 0.05) & (rho <= max_range + hit_radius)
    rel = rel[near]
    rho = rho[near]
    az = np.arctan2(rel[:, 1], rel[:, 0])
    el = np.arctan2(rel[:, 2], np.hypot(rel[:, 0], rel[:, 1]))

    # Continuous ray indices: ray i sits at az_lo + (i + 0.5) * d_az.
    ci = (az - az_lo) / d_az - 0.5
    cj = (el - el_lo) / d_el - 0.5
    delta = np.arcsin(np.minimum(1.0, hit_radius / np.maximum(rho, hit_radius)))
    si = np.minimum(np.ceil(delta / d_az).astype(int), 4)
    sj = np.minimum(np.ceil(delta / d_el).astype(int), 4)
    i0 = np.round(ci).astype(int)
    j0 = np.round(cj).astype(int)

    max_si = int(si.max()) if len(si) else 0
    max_sj = int(sj.max()) if len(sj) else 0
    flat_ids: list[np.ndarray] = []
    flat_rho: list[np.ndarray] = []
    for di in range(-max_si, max_si + 1):
        for dj in range(-max_sj, max_sj + 1):
            mask = (np.abs(di) <= si) & (np.abs(dj) <= sj)
            if not mask.any():
                continue
            ii = i0[mask] + di
            jj = j0[mask] + dj
            rr = rho[mask]
            if wrap_az:
                ii = np.mod(ii, n_az)
                ok = (jj >= 0) & (jj < n_el)
            else:
                ok = (ii >= 0) & (ii < n_az) & (jj >= 0) & (jj < n_el)
            if not ok.any():
                continue
            flat_ids.append(ii[ok] * n_el + jj[ok])
            flat_rho.append(rr[ok])

    img = np.full(n_az * n_el, np.inf)
    if flat_ids:
        ids = np.concatenate(flat_ids)
        rr = np.concatenate(flat_rho)
        order = np.lexsort((rr, ids))
        ids = ids[order]
        rr = rr[order]
        first = np.ones(len(ids), dtype=bool)
        first[1:] = ids[1:] != ids[:-1]
        img[ids[first]] = rr[first]

    az_centers = az_lo + (np.arange(n_az) + 0.5) * d_az
    el_centers = el_lo + (np.arange(n_el) + 0.5) * d_el
    if with_ground:
        sin_el = np.sin(el_centers)
        with np.errstate(divide="ignore"):
            ground = np.where(sin_el < 0.0, mount / -sin_el, np.inf)
        img = np.minimum(img.reshape(n_az, n_el), ground[None, :]).ravel()

    hit = img <= max_range
    if not hit.any():
        return np.zeros((0, 3))
    ray_i, ray_j = np.divmod(np.nonzero(hit)[0], n_el)
    ranges = img[hit]
    if noise_sigma > 0.0 and rng is not None:
        ranges = ranges + rng.normal(0.0, noise_sigma, size=len(ranges))
    a = az_centers[ray_i]
    e = el_centers[ray_j]
    cos_e = np.cos(e)
    return np.column_stack([ranges * cos_e * np.cos(a),
                            ranges * cos_e * np.sin(a),
                            mount + ranges * np.sin(e)])


def render_cloud(world: World, pose: QuatPose, cam: CameraSpec,
                 rng: np.random.Generator | None = None,
                 hit_radius: float = 0.025, with_ground: bool = True
                 ) -> np.ndarray:
    """Rover-frame depth cloud from the camera's limited field of view.

    By default rays that miss every world point but tilt downward return
    the ground plane, like a real depth camera staring at open dirt; pass
    with_ground=False for point-only returns (no hits give an empty cloud).
    """
    local = _to_rover_frame(world.points, pose)
    return _raycast(local, cam.mount_height,
                    -cam.h_fov / 2.0, cam.rays_h, cam.h_fov / cam.rays_h,
                    -cam.v_fov / 2.0, cam.rays_v, cam.v_fov / cam.rays_v,
                    cam.max_range, hit_radius, wrap_az=False,
                    with_ground=with_ground,
                    noise_sigma=world.spec.noise_sigma, rng=rng)


def render_lidar(world: World, pose: QuatPose, lidar: LidarSpec,
                 rng: np.random.Generator | None = None,
                 hit_radius: float = 0.025) -> np.ndarray:
    """360-degree planar-sweep variant; feeds the same pipeline."""
    local = _to_rover_frame(world.points, pose)
    return _raycast(local, lidar.mount_height,
                    -math.pi, lidar.rays_h, 2.0 * math.pi / lidar.rays_h,
                    -lidar.v_fov / 2.0, lidar.rings, lidar.v_fov / lidar.rings,
                    lidar.max_range, hit_radius, wrap_az=True, with_ground=True,
                    noise_sigma=world.spec.noise_sigma, rng=rng)


def step_rover(pose: QuatPose, u: ControlInput, dt: float) -> QuatPose:
    """Exact unicycle update under zero-order-hold inputs."""
    theta = heading_of(pose)
    if abs(u.omega) < 1e-12:
        return pose_from(pose.x1 + u.v * dt * math.cos(theta),
                         pose.x2 + u.v * dt * math.sin(theta),
                         theta)
    theta2 = theta + u.omega * dt
    x = pose.x1 + u.v / u.omega * (math.sin(theta2) - math.sin(theta))
    y = pose.x2 - u.v / u.omega * (math.cos(theta2) - math.cos(theta))
    return pose_from(x, y, wrap_angle(theta2))


@dataclass(frozen=True)
class TickRecord:
    t: float
    pose: QuatPose
    command: ControlInput
    mode: Mode
    perception_status: PerceptionStatus
    solver_status: SolverStatus | None
    note: str = ""


@dataclass
class RunLog:
    records: list[TickRecord]
    world_spec: WorldSpec
    completed: bool = False
    collision: bool = False
    collision_note: str = ""

    @property
    def collisions(self) -> int:
        return 1 if self.collision else 0


def _check_collision(world: World, pose: QuatPose) -> str | None:
    if len(world.stems) == 0:
        return None
    d = np.hypot(world.stems[:, 0] - pose.x1, world.stems[:, 1] - pose.x2)
    hit = d < world.stem_radii
    if hit.any():
        i = int(np.argmin(np.where(hit, d, np.inf)))
        return (f"rover center {d[i]:.3f} m from stem at "
                f"({world.stems[i, 0]:.2f}, {world.stems[i, 1]:.2f})")
    return None


def run_scenario(world: World, start_pose: QuatPose, camera: CameraSpec,
                 pipeline_cfg: PipelineConfig, nmpc_cfg: NmpcConfig,
                 fallback_cfg: FallbackConfig | None = None,
                 targets: list[TargetSpec] | None = None,
                 max_ticks: int = 400) -> RunLog:
    """Closed loop: render, perceive, supervise, step; stop at end of row,
    collision, or the tick budget."""
    controller = NmpcController(nmpc_cfg)
    supervisor = MissionSupervisor(controller, fallback_cfg or FallbackConfig())
    noise_rng = np.random.default_rng([world.spec.seed, 1])
    pose = start_pose
    pending = list(targets or [])
    log = RunLog(records=[], world_spec=replace(world.spec))

    for k in range(max_ticks):
        t = k * nmpc_cfg.dt
        cloud = render_cloud(world, pose, camera, noise_rng)
        perception = process(cloud, pipeline_cfg)

        detection = None
        theta = heading_of(pose)
        for tgt in list(pending):
            dist = math.hypot(tgt.x - pose.x1, tgt.y - pose.x2)
            if dist <= tgt.standoff + APPROACH_DONE_TOL:
                pending.remove(tgt)
                continue
            bearing = wrap_angle(math.atan2(tgt.y - pose.x2, tgt.x - pose.x1) - theta)
            if dist <= tgt.detection_range and abs(bearing) <= camera.h_fov / 2.0:
                c, s = math.cos(theta), math.sin(theta)
                dx, dy = tgt.x - pose.x1, tgt.y - pose.x2
                detection = Detection(Point2(c * dx + s * dy, -s * dx + c * dy),
                                      tgt.standoff)
                break

        cmd, info = supervisor.tick(pose, perception, detection)
        log.records.append(TickRecord(t, pose, cmd, info.mode,
                                      info.perception_status, info.solver_status,
                                      info.note))
        if info.mode is Mode.END_OF_ROW:
            log.completed = True
            break
        pose = step_rover(pose, cmd, nmpc_cfg.dt)
        hit = _check_collision(world, pose)
        if hit is not None:
            log.collision = True
            log.collision_note = hit
            break
    return log
