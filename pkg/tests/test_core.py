import math

import numpy as np
import pytest

from rownav.core import QuatPose, heading_of, pose_from, wrap_angle


def test_heading_identity_orientation():
    assert heading_of(QuatPose(0, 0, 1.0, 0.0)) == 0.0


def test_heading_half_turn():
    assert heading_of(QuatPose(0, 0, 0.0, 1.0)) == pytest.approx(math.pi, abs=1e-12)


def test_heading_closed_form_inverse():
    # half-angle map: (cos a, sin a) encodes heading 2a
    pose = QuatPose(0, 0, math.cos(0.3), math.sin(0.3))
    assert heading_of(pose) == pytest.approx(0.6, abs=1e-12)


def test_pose_from_zero_heading():
    pose = pose_from(1.0, 2.0, 0.0)
    assert (pose.x1, pose.x2) == (1.0, 2.0)
    assert pose.x3 == 1.0 and pose.x4 == 0.0


def test_pose_from_pi():
    pose = pose_from(0.0, 0.0, math.pi)
    assert pose.x3 == pytest.approx(0.0, abs=1e-12)
    assert pose.x4 == pytest.approx(1.0, abs=1e-12)


def test_round_trip_over_angle_range():
    rng = np.random.default_rng(0)
    thetas = rng.uniform(-math.pi, math.pi, size=100)
    thetas[0] = math.pi  # include the wrap boundary representative
    for theta in thetas:
        pose = pose_from(0.0, 0.0, theta)
        assert pose.unit_error() <= 1e-12
        assert heading_of(pose) == pytest.approx(theta, abs=1e-12)


def test_heading_invariant_under_joint_sign_flip():
    rng = np.random.default_rng(1)
    for theta in rng.uniform(-math.pi, math.pi, size=50):
        pose = pose_from(0.0, 0.0, theta)
        flipped = QuatPose(pose.x1, pose.x2, -pose.x3, -pose.x4)
        assert heading_of(flipped) == pytest.approx(heading_of(pose), abs=1e-12)


def test_wrap_angle_representative_interval():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(1.9 * math.pi) == pytest.approx(-0.1 * math.pi, abs=1e-12)
    for a in np.random.default_rng(2).uniform(-20, 20, size=200):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        # same direction vector
        assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-9)
        assert math.sin(w) == pytest.approx(math.sin(a), abs=1e-9)
