import numpy as np
import pytest

from egohand.camera import PinholeCamera, back_project, in_image, project, project_points
from egohand.errors import BehindCameraError, ValidationError

CAM = PinholeCamera(fx=500.0, fy=500.0, cx=160.0, cy=120.0, width=320, height=240)


def test_optical_axis():
    assert project(CAM, (0.0, 0.0, 500.0)) == (160.0, 120.0, 500.0)


def test_similar_triangles():
    assert project(CAM, (100.0, 0.0, 500.0)) == (260.0, 120.0, 500.0)


def test_projective_scaling():
    u1, v1, _ = project(CAM, (50.0, 30.0, 400.0))
    u2, v2, _ = project(CAM, (50.0, 30.0, 800.0))
    assert np.isclose(u2 - CAM.cx, (u1 - CAM.cx) / 2.0)
    assert np.isclose(v2 - CAM.cy, (v1 - CAM.cy) / 2.0)


def test_behind_camera_rejected():
    with pytest.raises(BehindCameraError):
        project(CAM, (0.0, 0.0, 0.0))
    with pytest.raises(BehindCameraError):
        project(CAM, (10.0, 10.0, -5.0))
    with pytest.raises(BehindCameraError):
        back_project(CAM, 100.0, 100.0, 0.0)


def test_roundtrip_recovers_point():
    rng = np.random.default_rng(7)
    for _ in range(200):
        p = rng.uniform([-300, -300, 100], [300, 300, 900])
        u, v, z = project(CAM, p)
        q = back_project(CAM, u, v, z)
        assert np.linalg.norm(q - p) <= 1e-6 * np.linalg.norm(p)


def test_project_points_matches_scalar():
    rng = np.random.default_rng(1)
    pts = rng.uniform([-200, -200, 200], [200, 200, 800], size=(50, 3))
    uvz = project_points(CAM, pts)
    for i, p in enumerate(pts):
        assert np.allclose(uvz[i], project(CAM, p))


def test_invalid_camera_rejected():
    with pytest.raises(ValidationError):
        PinholeCamera(fx=0.0, fy=1.0, cx=0.0, cy=0.0, width=10, height=10)
    with pytest.raises(ValidationError):
        PinholeCamera(fx=1.0, fy=1.0, cx=0.0, cy=0.0, width=0, height=10)


def test_in_image_bounds():
    assert in_image(CAM, 0.0, 0.0)
    assert not in_image(CAM, 320.0, 120.0)
    assert not in_image(CAM, -0.1, 120.0)
