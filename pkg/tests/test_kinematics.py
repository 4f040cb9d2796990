import numpy as np
import pytest

from egohand.errors import ValidationError
from egohand.hand import (HandShape, N_THETA, SEGMENT_INDICES, clamp_articulation,
                          forward_kinematics)
from egohand.rotations import euler_to_matrix, matrix_to_euler, rot_y

SHAPE = HandShape()


def random_pose(rng, shape=SHAPE):
    theta = np.zeros(N_THETA)
    theta[0:3] = rng.uniform(-100, 100, 3)
    theta[3:6] = rng.uniform(-np.pi, np.pi, 3)
    lo, hi = shape.joint_limits[:, 0], shape.joint_limits[:, 1]
    theta[6:] = rng.uniform(lo, hi)
    return theta


def test_rest_configuration():
    sk = forward_kinematics(np.zeros(N_THETA), SHAPE)
    assert np.allclose(sk.points, SHAPE.rest_keypoints(), atol=1e-9)


def test_bone_lengths_preserved():
    rng = np.random.default_rng(3)
    expected = SHAPE.bone_lengths.reshape(-1)
    for _ in range(50):
        sk = forward_kinematics(random_pose(rng), SHAPE)
        a, b, _ = sk.segments()
        lengths = np.linalg.norm(b - a, axis=1)
        assert np.all(np.abs(lengths - expected) < 1e-6)


def test_global_yaw_flip_matches_rotation_oracle():
    # Independent oracle: apply the rotation matrix to the rest skeleton.
    theta = np.zeros(N_THETA)
    theta[4] = np.pi
    sk = forward_kinematics(theta, SHAPE)
    oracle = SHAPE.rest_keypoints() @ rot_y(np.pi).T
    assert np.allclose(sk.points, oracle, atol=1e-9)
    # x-coordinates flip sign relative to the wrist.
    rest = SHAPE.rest_keypoints()
    rel = sk.points - sk.points[0]
    assert np.allclose(rel[:, 0], -(rest[:, 0] - rest[0, 0]), atol=1e-9)


def test_general_global_pose_matches_rotation_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        theta = random_pose(rng)
        local = theta.copy()
        local[0:6] = 0.0
        sk_local = forward_kinematics(local, SHAPE)
        sk = forward_kinematics(theta, SHAPE)
        r = euler_to_matrix(theta[3], theta[4], theta[5])
        oracle = sk_local.points @ r.T + theta[0:3]
        assert np.allclose(sk.points, oracle, atol=1e-6)


def test_out_of_limit_names_joint():
    theta = np.zeros(N_THETA)
    theta[13] = 5.0  # index DIP far out of range
    with pytest.raises(ValidationError, match=r"theta\[13\]"):
        forward_kinematics(theta, SHAPE)


def test_clamp_articulation():
    theta = np.zeros(N_THETA)
    theta[13] = 5.0
    theta[0] = 1e5  # global part untouched by clamping
    clamped = clamp_articulation(theta, SHAPE)
    assert clamped[13] == SHAPE.joint_limits[7, 1]
    assert clamped[0] == 1e5
    forward_kinematics(clamped, SHAPE)


def test_deterministic():
    rng = np.random.default_rng(5)
    theta = random_pose(rng)
    a = forward_kinematics(theta, SHAPE)
    b = forward_kinematics(theta, SHAPE)
    assert np.array_equal(a.points, b.points)


def test_segment_indices_cover_all_keypoints():
    assert sorted(set(SEGMENT_INDICES.ravel().tolist())) == list(range(21))


def test_euler_roundtrip():
    rng = np.random.default_rng(9)
    for _ in range(100):
        rx, ry, rz = rng.uniform(-np.pi / 2 + 0.05, np.pi / 2 - 0.05, 3)
        r = euler_to_matrix(rx, ry, rz)
        r2 = euler_to_matrix(*matrix_to_euler(r))
        assert np.allclose(r, r2, atol=1e-9)
