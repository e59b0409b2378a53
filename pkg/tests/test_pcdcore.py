import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from synthseg.pcdcore import (CameraIntrinsics, ColorImage, DepthImage, GeometryError, PointCloud,
                              Pose, SemanticImage, as_point3, as_rgb, transform_cloud)
from synthseg.taxonomy import get_taxonomy


def test_identity_transform_is_noop():
    c = PointCloud(np.random.default_rng(0).normal(size=(20, 3)))
    assert transform_cloud(c, Pose.identity()) == c


def test_translation():
    c = PointCloud([[0.0, 0.0, 0.0]])
    out = transform_cloud(c, Pose(np.eye(3), [1, 0, 0]))
    assert out.positions.tolist() == [[1.0, 0.0, 0.0]]


def test_yaw_90_maps_x_to_y():
    out = transform_cloud(PointCloud([[1.0, 0, 0]]), Pose.from_rpy(yaw=np.pi / 2))
    np.testing.assert_allclose(out.positions[0], [0, 1, 0], atol=1e-9)


def test_attributes_carried_through():
    tax = get_taxonomy("common4")
    c = PointCloud(np.zeros((3, 3)), [[1, 2, 3]] * 3, [0, 1, 4], tax)
    out = transform_cloud(c, Pose.from_rpy(0.1, 0.2, 0.3, (1, 2, 3)))
    assert np.array_equal(out.colors, c.colors) and np.array_equal(out.labels, c.labels)
    assert out.taxonomy is tax and len(out) == 3


def test_camera_looking_axes():
    p = Pose.camera_looking()
    # optical axis (camera z) points along body x, image right (camera x) along body -y
    np.testing.assert_allclose(p.rotation @ [0, 0, 1], [1, 0, 0])
    np.testing.assert_allclose(p.rotation @ [1, 0, 0], [0, -1, 0])
    np.testing.assert_allclose(p.rotation @ [0, 1, 0], [0, 0, -1])


@pytest.mark.parametrize("bad", [np.diag([1.0, 1.0, -1.0]), np.eye(3) * 1.01, np.full((3, 3), np.nan)])
def test_pose_rejects_bad_rotation(bad):
    with pytest.raises(GeometryError):
        Pose(bad, np.zeros(3))


def test_compose_and_inverse():
    a = Pose.from_rpy(0.3, -0.2, 1.1, (1, 2, 3))
    b = Pose.from_rpy(-0.5, 0.4, 0.2, (-2, 0, 1))
    p = np.array([0.5, -1.0, 2.0])
    np.testing.assert_allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-12)
    np.testing.assert_allclose(a.inverse().apply(a.apply(p)), p, atol=1e-12)


angles = st.floats(-np.pi, np.pi, allow_nan=False)
coords = st.floats(-1e3, 1e3, allow_nan=False)


@given(angles, angles, angles, st.tuples(coords, coords, coords),
       arrays(np.float64, (8, 3), elements=coords))
def test_transform_inverse_round_trip(r, p, y, t, pts):
    pose = Pose.from_rpy(r, p, y, t)
    c = PointCloud(pts)
    back = transform_cloud(transform_cloud(c, pose), pose.inverse())
    np.testing.assert_allclose(back.positions, pts, atol=1e-9)


@pytest.mark.parametrize("value", [np.nan, np.inf, -np.inf])
def test_no_nonfinite_positions(value):
    with pytest.raises(GeometryError):
        PointCloud([[0.0, value, 0.0]])
    with pytest.raises(GeometryError):
        as_point3([value, 0, 0])
    with pytest.raises(GeometryError):
        DepthImage(np.array([[value]]))


def test_length_invariants():
    with pytest.raises(GeometryError):
        PointCloud(np.zeros((3, 3)), colors=np.zeros((2, 3)))
    with pytest.raises(GeometryError):
        PointCloud(np.zeros((3, 3)), labels=[1, 2])
    with pytest.raises(GeometryError):
        PointCloud(np.zeros((1, 3)), labels=[5], taxonomy=get_taxonomy("common4"))


def test_cloud_is_read_only():
    c = PointCloud(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        c.positions[0, 0] = 1.0


def test_rgb_range():
    assert as_rgb((0, 128, 255)) == (0, 128, 255)
    with pytest.raises(GeometryError):
        as_rgb((0, 256, 0))


def test_intrinsics_validation_and_fov():
    intr = CameraIntrinsics.from_fov(800, 600, 90.0)
    assert intr.fx == pytest.approx(400.0) and intr.fy == pytest.approx(400.0)
    assert (intr.cx, intr.cy) == (400.0, 300.0)
    for kw in (dict(width=0), dict(fx=0.0), dict(cx=10.0), dict(cy=-1.0)):
        args = dict(width=10, height=10, fx=5.0, fy=5.0, cx=5.0, cy=5.0)
        args.update(kw)
        with pytest.raises(GeometryError):
            CameraIntrinsics(**args)


def test_image_validation():
    with pytest.raises(GeometryError):
        DepthImage(np.array([[-1.0]]))
    with pytest.raises(GeometryError):
        SemanticImage(np.array([[20]]), get_taxonomy("common4"))
    with pytest.raises(GeometryError):
        ColorImage(np.zeros((2, 2)))
