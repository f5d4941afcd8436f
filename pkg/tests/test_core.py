import numpy as np
import pytest
from hypothesis import given, settings

from conftest import points3, poses
from dynremoval.core import Point3, Pose, Sweep, compose, inverse, transform_point
from dynremoval.errors import PoseError


def rot_z(deg):
    return Pose.from_xyz_yaw(0, 0, 0, deg)


def tz(z):
    return Pose.from_rt(np.eye(3), (0, 0, z))


def test_transform_identity():
    assert transform_point((1, 0, 0), Pose.identity()) == pytest.approx((1, 0, 0))


def test_transform_rotation_about_z():
    assert transform_point((1, 0, 0), rot_z(90)) == pytest.approx((0, 1, 0), abs=1e-12)


def test_transform_translation():
    p = transform_point((1, 2, 3), Pose.from_rt(np.eye(3), (10, -5, 0.5)))
    assert isinstance(p, Point3)
    assert p == pytest.approx((11, -3, 3.5))


def test_compose_examples():
    p = Pose.from_xyz_yaw(1, 2, 3, 40)
    assert np.allclose(compose(Pose.identity(), p).matrix(), p.matrix())
    assert np.allclose(compose(p, inverse(p)).matrix(), np.eye(4), atol=1e-9)
    assert np.allclose(compose(tz(1), tz(2)).translation, (0, 0, 3))


def test_compose_applies_b_then_a():
    a, b = rot_z(90), Pose.from_rt(np.eye(3), (1, 0, 0))
    # b moves (0,0,0) to (1,0,0); a then rotates it to (0,1,0)
    assert transform_point((0, 0, 0), compose(a, b)) == pytest.approx((0, 1, 0), abs=1e-12)


def test_pose_rejects_reflection_and_garbage():
    with pytest.raises(PoseError):
        Pose.from_rt(np.diag([1, 1, -1]), (0, 0, 0))
    with pytest.raises(PoseError):
        Pose.from_rt(np.ones((3, 3)), (0, 0, 0))
    with pytest.raises(PoseError):
        Pose.from_rt(np.eye(3), (0, np.nan, 0))


def test_pose_normalizes_small_drift():
    r = rot_z(30).rotation + 1e-5
    p = Pose.from_rt(r, (0, 0, 0))
    assert np.allclose(p.rotation @ p.rotation.T, np.eye(3), atol=1e-12)


def test_pose_is_immutable():
    p = Pose.identity()
    with pytest.raises(ValueError):
        p.rotation[0, 0] = 2.0


def test_sweep_validation_drops_bad_points():
    pts = np.array([[1, 0, 0], [np.nan, 0, 0], [0.1, 0, 0], [0, 5, np.inf], [3, 4, 0]])
    v = Sweep(0, pts, Pose.identity()).validated(0.5)
    assert v.points.tolist() == [[1, 0, 0], [3, 4, 0]]
    assert v.source_index.tolist() == [0, 4]


@settings(max_examples=200, deadline=None)
@given(points3(), poses())
def test_round_trip(p, pose):
    back = transform_point(transform_point(p, pose), inverse(pose))
    assert np.allclose(back, p, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(poses(), poses(), poses())
def test_compose_associative(a, b, c):
    left = compose(compose(a, b), c).matrix()
    right = compose(a, compose(b, c)).matrix()
    assert np.allclose(left, right, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(poses())
def test_compose_stays_orthonormal(p):
    q = p
    for _ in range(50):
        q = compose(q, p)
    assert np.allclose(q.rotation @ q.rotation.T, np.eye(3), atol=1e-6)
    assert np.linalg.det(q.rotation) > 0
