import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from armtwin.geometry import (
    IDENTITY_POSE,
    Pose,
    compose_pose,
    quat_angle_between,
    quat_from_axis_angle,
    quat_normalize,
    quat_rotate,
    pose_from_json,
    pose_to_json,
)


def random_pose(rng) -> Pose:
    q = rng.normal(size=4)
    return Pose(tuple(rng.uniform(-2, 2, 3)), tuple(q / np.linalg.norm(q)))


def test_identity_compose_is_neutral():
    p = Pose((1.0, -2.0, 0.5), quat_from_axis_angle((0, 0, 1), 0.7))
    left = compose_pose(IDENTITY_POSE, p)
    right = compose_pose(p, IDENTITY_POSE)
    assert left.position == p.position
    assert right.position == p.position
    assert quat_angle_between(left.quat, p.quat) < 1e-12
    assert quat_angle_between(right.quat, p.quat) < 1e-12


def test_pure_translations_add():
    a = Pose((1, 0, 0))
    b = Pose((0, 1, 0))
    c = compose_pose(a, b)
    assert c.position == (1.0, 1.0, 0.0)
    assert c.quat == (1.0, 0.0, 0.0, 0.0)


def test_rotation_then_translation():
    rot = Pose(quat=quat_from_axis_angle((0, 0, 1), math.pi / 2))
    step = Pose((1, 0, 0))
    c = compose_pose(rot, step)
    assert c.position == pytest.approx((0.0, 1.0, 0.0), abs=1e-12)
    assert quat_angle_between(c.quat, rot.quat) < 1e-12


def test_quat_always_normalized():
    p = Pose((0, 0, 0), (2.0, 0.0, 0.0, 0.0))
    assert abs(sum(c * c for c in p.quat) - 1.0) < 1e-9
    with pytest.raises(ValueError):
        quat_normalize((0.0, 0.0, 0.0, 0.0))


def test_inverse_cancels():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = random_pose(rng)
        ident = compose_pose(p, p.inverse())
        assert np.allclose(ident.position, 0.0, atol=1e-12)
        assert quat_angle_between(ident.quat, (1, 0, 0, 0)) < 1e-9


@given(st.integers(min_value=0, max_value=10_000))
def test_compose_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_pose(rng) for _ in range(3))
    left = compose_pose(compose_pose(a, b), c)
    right = compose_pose(a, compose_pose(b, c))
    assert np.allclose(left.position, right.position, atol=1e-9)
    assert quat_angle_between(left.quat, right.quat) < 1e-9


def test_apply_matches_compose():
    rng = np.random.default_rng(3)
    p = random_pose(rng)
    point = (0.3, -0.2, 0.9)
    via_compose = compose_pose(p, Pose(point)).position
    assert np.allclose(p.apply(point), via_compose, atol=1e-12)


def test_quat_rotate_unit_x_about_z():
    q = quat_from_axis_angle((0, 0, 1), math.pi / 2)
    assert quat_rotate(q, (1, 0, 0)) == pytest.approx((0, 1, 0), abs=1e-12)


def test_pose_json_round_trip():
    rng = np.random.default_rng(9)
    p = random_pose(rng)
    assert pose_from_json(pose_to_json(p)) == p
