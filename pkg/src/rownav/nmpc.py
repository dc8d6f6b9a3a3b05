"""Receding-horizon controller for corridor following.

The prediction model is a unicycle whose heading lives in the half-angle
pair (x3, x4), which makes the dynamics polynomial in the state. The
finite-horizon problem is transcribed by single shooting over the input
sequence: the running cost combines a centering paraboloid and a heading
alignment term plus a quadratic penalty on input changes, the terminal
term rewards distance traveled along the row direction, and clearance
around obstacle points is enforced as a hard constraint.

Obstacle constraints are handled with an exterior quadratic penalty whose
weight grows geometrically until the worst violation drops below the
solver tolerance; input box bounds are kept by projection inside the
L-BFGS-B inner step, so returned inputs satisfy them exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import minimize

from .core import ControlInput, QuatPose
from .pipeline import LaneModel

# Headings closer than this to +-90 deg make the rover-slope tangent
# blow up; such states are the fallback controller's job, not the NMPC's.
EPS_TAN = 1e-3

# Max heading change per RK4 substep. A single step at the rated bounds
# (0.5 rad/s * 0.7 s) would leave ~3e-6 error against the closed-form arc;
# substepping keeps it below 1e-8.
_MAX_HEADING_PER_SUBSTEP = 0.1


class DegenerateCorridor(ValueError):
    """Raised when the two border lines meet at the queried depth."""


class NearPerpendicular(ValueError):
    """Raised when the heading is within EPS_TAN of +-90 deg."""


class InfeasibleError(RuntimeError):
    """Raised by control_step when no iterate satisfies the constraints."""


class SolverStatus(Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


@dataclass
class NmpcConfig:
    v_max: float = 0.4                # m/s
    omega_max: float = 0.5            # rad/s
    dt: float = 0.7                   # control period, s
    horizon_n: int = 5                # steps; horizon time = n * dt
    K_lane: float = 1.0
    K_orient: float = 1.0
    K_travel: float = 1.0
    r_weight_v: float = 0.1           # (m/s)^-2
    r_weight_omega: float = 1.0       # (rad/s)^-2
    R_safe: float = 0.3               # obstacle clearance radius, m
    solver_max_iter: int = 8          # outer penalty rounds
    solver_tol: float = 1e-3          # max allowed constraint violation, m^2
    penalty_init: float = 10.0
    penalty_growth: float = 10.0

    def validate(self, path: str = "nmpc") -> list[str]:
        errs = []
        for name in ("v_max", "omega_max", "dt"):
            if not getattr(self, name) > 0:
                errs.append(f"{path}.{name}: must be > 0")
        if self.horizon_n < 2:
            errs.append(f"{path}.horizon_n: must be >= 2")
        for name in ("K_lane", "K_orient", "K_travel",
                     "r_weight_v", "r_weight_omega", "R_safe"):
            if getattr(self, name) < 0:
                errs.append(f"{path}.{name}: must be >= 0")
        if not self.solver_tol > 0:
            errs.append(f"{path}.solver_tol: must be > 0")
        if self.solver_max_iter < 1:
            errs.append(f"{path}.solver_max_iter: must be >= 1")
        if self.penalty_init <= 0 or self.penalty_growth <= 1:
            errs.append(f"{path}.penalty_init/penalty_growth: need init > 0, growth > 1")
        return errs


@dataclass(frozen=True)
class ControlSequence:
    inputs: tuple[ControlInput, ...]           # length n
    predicted_states: tuple[QuatPose, ...]     # length n + 1
    cost: float
    max_constraint_violation: float            # m^2, 0 when feasible
    iterations: int
    status: SolverStatus


def dynamics(state: QuatPose, u: ControlInput) -> tuple[float, float, float, float]:
    """State derivative of the half-angle unicycle model."""
    return (u.v * (state.x3 * state.x3 - state.x4 * state.x4),
            u.v * (2.0 * state.x3 * state.x4),
            -u.omega * state.x4 / 2.0,
            u.omega * state.x3 / 2.0)


def _rk4_substep(x1, x2, x3, x4, v, w, h):
    def f(a1, a2, a3, a4):
        return (v * (a3 * a3 - a4 * a4), v * 2.0 * a3 * a4,
                -w * a4 / 2.0, w * a3 / 2.0)

    k1 = f(x1, x2, x3, x4)
    k2 = f(x1 + 0.5 * h * k1[0], x2 + 0.5 * h * k1[1],
           x3 + 0.5 * h * k1[2], x4 + 0.5 * h * k1[3])
    k3 = f(x1 + 0.5 * h * k2[0], x2 + 0.5 * h * k2[1],
           x3 + 0.5 * h * k2[2], x4 + 0.5 * h * k2[3])
    k4 = f(x1 + h * k3[0], x2 + h * k3[1], x3 + h * k3[2], x4 + h * k3[3])
    x1 += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    x2 += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    x3 += h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    x4 += h / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
    norm = math.sqrt(x3 * x3 + x4 * x4)
    return x1, x2, x3 / norm, x4 / norm


def _integrate_raw(x1, x2, x3, x4, v, w, dt):
    n_sub = max(1, math.ceil(abs(w) * dt / _MAX_HEADING_PER_SUBSTEP))
    h = dt / n_sub
    for _ in range(n_sub):
        x1, x2, x3, x4 = _rk4_substep(x1, x2, x3, x4, v, w, h)
    return x1, x2, x3, x4


def integrate_step(state: QuatPose, u: ControlInput, dt: float) -> QuatPose:
    """Propagate the state by dt under constant input (substepped RK4).

    The half-angle pair is renormalized after every substep, so the unit
    invariant holds to machine precision.
    """
    return QuatPose(*_integrate_raw(state.x1, state.x2, state.x3, state.x4,
                                    u.v, u.omega, dt))


def _inflated_y(lane: LaneModel, x1: float) -> tuple[float, float]:
    return lane.inflated_left.y_at(x1), lane.inflated_right.y_at(x1)


def lane_cost(state: QuatPose, lane: LaneModel) -> float:
    """Centering paraboloid: 0 on the corridor midline, 1 on either border.

    Border heights are the margin-inflated lines evaluated at the state's
    forward coordinate.
    """
    y_l, y_r = _inflated_y(lane, state.x1)
    d = y_l - y_r
    if d == 0.0:
        raise DegenerateCorridor(f"borders meet at x1={state.x1:.3f}")
    s = 2.0 * state.x2 - y_l - y_r
    return (s * s) / (d * d)


def align_cost(state: QuatPose, lane: LaneModel) -> float:
    """Squared slope mismatch between the rover heading and the middle line."""
    D = state.x3 * state.x3 - state.x4 * state.x4
    if abs(D) <= EPS_TAN:
        raise NearPerpendicular("heading too close to +-90 deg for slope cost")
    a_rover = 2.0 * state.x3 * state.x4 / D
    diff = lane.a_avg - a_rover
    return diff * diff


def meyer_cost(state: QuatPose, lane: LaneModel, K_travel: float) -> float:
    """Negative distance traveled, projected on the row direction."""
    a = lane.a_avg
    return -K_travel * (state.x1 + a * state.x2) / math.sqrt(1.0 + a * a)


def obstacle_constraint(state: QuatPose, obstacle, R_safe: float) -> float:
    """Clearance constraint value; feasible iff <= 0."""
    try:
        ox, oy = obstacle.x, obstacle.y
    except AttributeError:
        ox, oy = float(obstacle[0]), float(obstacle[1])
    dx = state.x1 - ox
    dy = state.x2 - oy
    return R_safe * R_safe - dx * dx - dy * dy


def stage_cost(state: QuatPose, u: ControlInput, u_prev: ControlInput,
               lane: LaneModel, cfg: NmpcConfig) -> float:
    """Running cost: weighted centering + alignment + input-change penalty."""
    dv = u.v - u_prev.v
    dw = u.omega - u_prev.omega
    return (cfg.K_lane * lane_cost(state, lane)
            + cfg.K_orient * align_cost(state, lane)
            + cfg.r_weight_v * dv * dv
            + cfg.r_weight_omega * dw * dw)


def stage_cost_gradients(state: QuatPose, u: ControlInput, u_prev: ControlInput,
                         lane: LaneModel, cfg: NmpcConfig
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Analytic partials of stage_cost w.r.t. the raw state and the input."""
    al, ar = lane.inflated_left.a, lane.inflated_right.a
    y_l, y_r = _inflated_y(lane, state.x1)
    d = y_l - y_r
    if d == 0.0:
        raise DegenerateCorridor(f"borders meet at x1={state.x1:.3f}")
    s = 2.0 * state.x2 - y_l - y_r
    ds_dx1 = -(al + ar)
    dd_dx1 = al - ar
    dlane_dx1 = 2.0 * s * ds_dx1 / (d * d) - 2.0 * s * s * dd_dx1 / (d * d * d)
    dlane_dx2 = 4.0 * s / (d * d)

    x3, x4 = state.x3, state.x4
    D = x3 * x3 - x4 * x4
    if abs(D) <= EPS_TAN:
        raise NearPerpendicular("heading too close to +-90 deg for slope cost")
    N = 2.0 * x3 * x4
    q = N / D
    diff = lane.a_avg - q
    dq_dx3 = (2.0 * x4 * D - N * 2.0 * x3) / (D * D)
    dq_dx4 = (2.0 * x3 * D + N * 2.0 * x4) / (D * D)

    grad_state = np.array([
        cfg.K_lane * dlane_dx1,
        cfg.K_lane * dlane_dx2,
        -2.0 * cfg.K_orient * diff * dq_dx3,
        -2.0 * cfg.K_orient * diff * dq_dx4,
    ])
    grad_u = np.array([
        2.0 * cfg.r_weight_v * (u.v - u_prev.v),
        2.0 * cfg.r_weight_omega * (u.omega - u_prev.omega),
    ])
    return grad_state, grad_u


def meyer_cost_gradient(state: QuatPose, lane: LaneModel, K_travel: float
                        ) -> np.ndarray:
    a = lane.a_avg
    scale = -K_travel / math.sqrt(1.0 + a * a)
    return np.array([scale, scale * a, 0.0, 0.0])


def _lane_cost_soft(x1, x2, lane):
    # Same paraboloid, with the denominator floored so line searches that
    # wander past a border crossing stay finite.
    y_l = lane.inflated_left.a * x1 + lane.inflated_left.b
    y_r = lane.inflated_right.a * x1 + lane.inflated_right.b
    d = y_l - y_r
    if abs(d) < 1e-9:
        d = 1e-9 if d >= 0 else -1e-9
    s = 2.0 * x2 - y_l - y_r
    return (s * s) / (d * d)


def _align_cost_soft(x3, x4, a_avg):
    # Denominator floored at EPS_TAN: near +-90 deg the term turns into a
    # large flat barrier instead of a singularity.
    D = x3 * x3 - x4 * x4
    if abs(D) < EPS_TAN:
        D = EPS_TAN if D >= 0 else -EPS_TAN
    diff = a_avg - 2.0 * x3 * x4 / D
    return diff * diff


def solve(state: QuatPose, lane: LaneModel, obstacles, u_prev: ControlInput,
          cfg: NmpcConfig, warm_start: ControlSequence | None = None
          ) -> ControlSequence:
    """Solve the horizon problem and return a saturated input sequence.

    The returned sequence is the best feasible candidate among the
    optimizer result, the zero-input sequence, and the warm start, so its
    cost never exceeds either baseline. Status is INFEASIBLE when no
    candidate meets the clearance constraints within cfg.solver_tol.
    """
    n = cfg.horizon_n
    obs = np.asarray(obstacles, dtype=float).reshape(-1, 2) if obstacles is not None \
        else np.zeros((0, 2))
    a_avg = lane.a_avg
    travel_scale = cfg.K_travel / math.sqrt(1.0 + a_avg * a_avg)
    r2 = cfg.R_safe * cfg.R_safe
    x0 = (state.x1, state.x2, state.x3, state.x4)
    up0 = (u_prev.v, u_prev.omega)

    def rollout(u_flat):
        states = [x0]
        x1, x2, x3, x4 = x0
        for k in range(n):
            x1, x2, x3, x4 = _integrate_raw(x1, x2, x3, x4,
                                            u_flat[2 * k], u_flat[2 * k + 1],
                                            cfg.dt)
            states.append((x1, x2, x3, x4))
        return states

    def evaluate(u_flat):
        """(objective, sum of squared violations, max violation)."""
        states = rollout(u_flat)
        cost = 0.0
        pv, pw = up0
        for k in range(n):
            x1, x2, x3, x4 = states[k]
            v, w = u_flat[2 * k], u_flat[2 * k + 1]
            cost += cfg.K_lane * _lane_cost_soft(x1, x2, lane)
            cost += cfg.K_orient * _align_cost_soft(x3, x4, a_avg)
            cost += cfg.r_weight_v * (v - pv) ** 2
            cost += cfg.r_weight_omega * (w - pw) ** 2
            pv, pw = v, w
        xt = states[n]
        cost += -travel_scale * (xt[0] + a_avg * xt[1])
        pen = 0.0
        worst = 0.0
        if len(obs):
            for k in range(1, n + 1):
                sx, sy = states[k][0], states[k][1]
                for ox, oy in obs:
                    g = r2 - (sx - ox) ** 2 - (sy - oy) ** 2
                    if g > 0.0:
                        pen += g * g
                        if g > worst:
                            worst = g
        return cost, pen, worst

    bounds = [(-cfg.v_max, cfg.v_max), (-cfg.omega_max, cfg.omega_max)] * n

    if warm_start is not None and len(warm_start.inputs) == n:
        shifted = list(warm_start.inputs[1:]) + [warm_start.inputs[-1]]
        u_init = np.array([c for ui in shifted for c in (ui.v, ui.omega)])
    else:
        u_init = np.array([0.5 * cfg.v_max, 0.0] * n)
    u_init = np.clip(u_init, [b[0] for b in bounds], [b[1] for b in bounds])

    iterations = 0
    success = True

    def optimize_from(u_start):
        nonlocal iterations, success
        mu = cfg.penalty_init
        u_cur = u_start.copy()
        for _ in range(cfg.solver_max_iter):
            res = minimize(
                lambda u, m=mu: (lambda c, p, _w: c + m * p)(*evaluate(u)),
                u_cur, method="L-BFGS-B", bounds=bounds,
                options={"maxiter": 200, "ftol": 1e-12, "gtol": 1e-8})
            iterations += int(res.nit)
            u_cur = res.x
            success = bool(res.success)
            _, _, worst = evaluate(u_cur)
            if worst <= cfg.solver_tol:
                break
            mu *= cfg.penalty_growth
        return u_cur

    # Never return anything worse than the trivial candidates.
    candidates = [optimize_from(u_init), np.zeros(2 * n)]
    if warm_start is not None and len(warm_start.inputs) == n:
        candidates.append(u_init.copy())

    def pick(cands):
        best = None
        worst_case = None
        for cand in cands:
            cost, _, worst = evaluate(cand)
            if worst <= cfg.solver_tol:
                if best is None or cost < best[0]:
                    best = (cost, worst, cand)
            if worst_case is None or worst < worst_case[1]:
                worst_case = (cost, worst, cand)
        return best, worst_case

    best, best_infeasible = pick(candidates)

    # A blocking obstacle straight ahead leaves the straight init on a
    # saddle (zero gradient in omega). If the plain solve could not beat
    # simply stopping, retry from a left and a right swerve.
    zero_cost, _, zero_worst = evaluate(np.zeros(2 * n))
    stuck = best is None or (zero_worst <= cfg.solver_tol
                             and best[0] >= zero_cost - 1e-9)
    if len(obs) and stuck:
        for sign in (1.0, -1.0):
            swerve = np.array([0.5 * cfg.v_max, sign * 0.8 * cfg.omega_max] * n)
            candidates.append(optimize_from(swerve))
        best, best_infeasible = pick(candidates)

    if best is not None:
        cost, worst, chosen = best
        status = SolverStatus.CONVERGED if success else SolverStatus.MAX_ITER
    else:
        cost, worst, chosen = best_infeasible
        status = SolverStatus.INFEASIBLE

    chosen = np.clip(chosen, [b[0] for b in bounds], [b[1] for b in bounds])
    inputs = tuple(ControlInput(float(chosen[2 * k]), float(chosen[2 * k + 1]))
                   for k in range(n))
    states = [state]
    for ui in inputs:
        states.append(integrate_step(states[-1], ui, cfg.dt))
    return ControlSequence(inputs=inputs, predicted_states=tuple(states),
                           cost=float(cost), max_constraint_violation=float(worst),
                           iterations=iterations, status=status)


class NmpcController:
    """Stateful receding-horizon wrapper: apply the first input, keep the
    rest as next tick's warm start. Single-owner; one instance per rover.
    """

    def __init__(self, cfg: NmpcConfig):
        self.cfg = cfg
        self._warm: ControlSequence | None = None
        self._u_prev = ControlInput(0.0, 0.0)

    @property
    def last_sequence(self) -> ControlSequence | None:
        return self._warm

    def control_step(self, state: QuatPose, lane: LaneModel,
                     obstacles) -> ControlInput:
        seq = solve(state, lane, obstacles, self._u_prev, self.cfg,
                    warm_start=self._warm)
        if seq.status is SolverStatus.INFEASIBLE:
            self._warm = None
            raise InfeasibleError(
                f"no feasible sequence (violation {seq.max_constraint_violation:.2e} m^2)")
        self._warm = seq
        self._u_prev = seq.inputs[0]
        return seq.inputs[0]

    def notify_applied(self, u: ControlInput) -> None:
        """Record the command actually sent when another mode overrode us."""
        self._u_prev = u

    def reset(self) -> None:
        self._warm = None
        self._u_prev = ControlInput(0.0, 0.0)
