import numpy as np
import pytest

from egohand.camera import PinholeCamera, project_points
from egohand.errors import ValidationError
from egohand.hand import HandShape, N_THETA, forward_kinematics
from egohand.render import (BackgroundModel, BoxShape, CapsuleShape, CylinderShape,
                            Primitive, SphereShape, keypoint_visibility,
                            primitive_shape, render_depth, render_shapes,
                            skeleton_shapes)
from egohand.synth import ViewpointPrior, compose_global, perturb_pose, \
    PerturbationConfig, sample_viewpoint

CAM = PinholeCamera(fx=240.0, fy=240.0, cx=160.0, cy=120.0, width=320, height=240)
FLAT_BG = BackgroundModel(depth_mm=900.0, noise_sigma=0.0, invalid_fraction=0.0)
SHAPE = HandShape()


def test_sphere_on_axis_center_depth():
    depth = render_shapes(CAM, [SphereShape(center=np.array([0.0, 0.0, 500.0]), r=50.0)],
                          background=FLAT_BG)
    assert abs(depth[120, 160] - 450.0) <= 1.0


def test_zbuffer_overlapping_spheres():
    near = SphereShape(center=np.array([0.0, 0.0, 400.0]), r=40.0)
    far = SphereShape(center=np.array([0.0, 0.0, 500.0]), r=40.0)
    depth = render_shapes(CAM, [far, near], background=FLAT_BG)
    assert abs(depth[120, 160] - 360.0) <= 1.0
    only_near = render_shapes(CAM, [near], background=FLAT_BG)
    overlap = only_near < FLAT_BG.depth_mm
    assert np.array_equal(depth[overlap], only_near[overlap])


def test_cylinder_and_box_front_faces():
    cyl = CylinderShape(a=np.array([-60.0, 0.0, 500.0]),
                        b=np.array([60.0, 0.0, 500.0]), r=30.0)
    depth = render_shapes(CAM, [cyl], background=FLAT_BG)
    assert abs(depth[120, 160] - 470.0) <= 1.0
    box = BoxShape(rotation=np.eye(3), center=np.array([0.0, 0.0, 600.0]),
                   half=np.array([50.0, 40.0, 25.0]))
    depth = render_shapes(CAM, [box], background=FLAT_BG)
    assert abs(depth[120, 160] - 575.0) <= 1.0
    # Side columns beyond the box's projected width see background.
    assert depth[120, 10] == 900.0


def test_empty_scene_is_pure_background():
    depth = render_shapes(CAM, [], background=FLAT_BG)
    assert np.all(depth == 900.0)


def test_min_composition():
    rng = np.random.default_rng(4)
    shapes = [
        CapsuleShape(a=rng.uniform([-80, -80, 380], [0, 0, 450]),
                     b=rng.uniform([0, 0, 450], [80, 80, 560]), r=25.0),
        SphereShape(center=rng.uniform([-50, -50, 400], [50, 50, 600]), r=45.0),
        CylinderShape(a=np.array([-40.0, 30.0, 520.0]),
                      b=np.array([55.0, -20.0, 470.0]), r=20.0),
        BoxShape(rotation=np.eye(3), center=np.array([20.0, 10.0, 640.0]),
                 half=np.array([60.0, 30.0, 20.0])),
    ]
    combined = render_shapes(CAM, shapes, background=FLAT_BG)
    separate = [render_shapes(CAM, [s], background=FLAT_BG) for s in shapes]
    assert np.array_equal(combined, np.minimum.reduce(separate))


def test_visibility_matches_raycast_oracle():
    # Over random sampled poses, every keypoint flagged visible sits
    # within tolerance of its own front surface in the rendered image.
    rng = np.random.default_rng(8)
    prior = ViewpointPrior()
    pcfg = PerturbationConfig()
    from egohand.grasps import default_grasps
    grasps = default_grasps()
    checked = 0
    for i in range(100):
        g = grasps[i % len(grasps)]
        theta = perturb_pose(g.base_pose, pcfg, rng, SHAPE)
        pose = compose_global(theta, sample_viewpoint(prior, rng))
        sk = forward_kinematics(pose, SHAPE)
        depth, vis = render_depth(CAM, sk, background=FLAT_BG)
        uvz = project_points(CAM, sk.points)
        radii = sk.keypoint_radii()
        for k in np.where(vis)[0]:
            col = int(round(uvz[k, 0]))
            row = int(round(uvz[k, 1]))
            assert 0 <= col < CAM.width and 0 <= row < CAM.height
            surface = uvz[k, 2] - radii[k]
            assert abs(depth[row, col] - surface) <= 5.0 + 1e-9
            checked += 1
    assert checked > 500


def test_background_noise_and_dropout_deterministic():
    bg = BackgroundModel(depth_mm=900.0, noise_sigma=3.0, invalid_fraction=0.05)
    d1 = render_shapes(CAM, [], background=bg, rng=np.random.default_rng(42))
    d2 = render_shapes(CAM, [], background=bg, rng=np.random.default_rng(42))
    assert np.array_equal(d1, d2)
    frac = float((d1 == 0).mean())
    assert 0.03 < frac < 0.07
    valid = d1[d1 > 0]
    assert abs(valid.mean() - 900.0) < 1.0
    assert 2.0 < valid.std() < 4.0
    with pytest.raises(ValidationError):
        render_shapes(CAM, [], background=bg)  # noise without an rng


def test_primitive_validation_and_transform():
    with pytest.raises(ValidationError):
        Primitive("cone", (10.0,))
    with pytest.raises(ValidationError):
        Primitive("sphere", (-1.0,))
    p = Primitive("sphere", (20.0,), translation=np.array([0.0, 10.0, 0.0]))
    r = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    q = p.transformed(r, np.array([5.0, 0.0, 300.0]))
    assert np.allclose(q.translation, [-5.0, 0.0, 300.0] + np.array([10.0, 0.0, 0.0]) * 0)
    assert np.allclose(q.translation, r @ p.translation + [5.0, 0.0, 300.0])
    shape = primitive_shape(q)
    assert isinstance(shape, SphereShape)


def test_skeleton_render_has_hand_pixels():
    theta = np.zeros(N_THETA)
    theta[0:3] = (0.0, 0.0, 450.0)
    sk = forward_kinematics(theta, SHAPE)
    depth, vis = render_depth(CAM, sk, background=FLAT_BG)
    hand = (depth > 0) & (depth < 750)
    assert 0.05 < hand.mean() < 0.8
    assert vis.any()
    shapes = skeleton_shapes(sk)
    assert len(shapes) == 22  # 20 segments + palm + forearm
