import dataclasses

import numpy as np

from egohand.hand import (HandShape, N_THETA, SEGMENT_INDICES, forward_kinematics,
                          self_intersects)
from egohand.grasps import default_grasps

SHAPE = HandShape()


def test_rest_pose_clear():
    sk = forward_kinematics(np.zeros(N_THETA), SHAPE)
    assert not self_intersects(sk)


def test_all_base_grasps_clear():
    for g in default_grasps():
        sk = forward_kinematics(g.base_pose, SHAPE)
        assert not self_intersects(sk), g.name


def test_coincident_fingertips_intersect():
    sk = forward_kinematics(np.zeros(N_THETA), SHAPE)
    pts = sk.points.copy()
    pts[8] = pts[12]  # index tip onto middle tip: zero distance
    forced = dataclasses.replace(sk, points=pts)
    assert self_intersects(forced)


def _sampling_oracle(sk, samples=100):
    """Point-on-segment sampling: min over sampled points of the exact
    distance to the other segment. Discretizes one side only, so the
    error is bounded by half the sample spacing."""
    a, b, radii = sk.segments()

    def point_seg_dist(p, q0, q1):
        d = q1 - q0
        denom = float(d @ d)
        t = 0.0 if denom == 0 else np.clip(float((p - q0) @ d) / denom, 0.0, 1.0)
        return float(np.linalg.norm(p - (q0 + t * d)))

    hit = False
    margin = np.inf
    ts = np.linspace(0.0, 1.0, samples)
    for i in range(len(radii)):
        for j in range(i + 1, len(radii)):
            if set(SEGMENT_INDICES[i]) & set(SEGMENT_INDICES[j]):
                continue
            pts_i = a[i][None, :] + ts[:, None] * (b[i] - a[i])[None, :]
            d = min(point_seg_dist(p, a[j], b[j]) for p in pts_i)
            margin = min(margin, d - (radii[i] + radii[j]))
            if d < radii[i] + radii[j]:
                hit = True
    return hit, margin


def test_matches_point_sampling_oracle():
    rng = np.random.default_rng(17)
    lo, hi = SHAPE.joint_limits[:, 0], SHAPE.joint_limits[:, 1]
    checked = 0
    for _ in range(40):
        theta = np.zeros(N_THETA)
        theta[6:] = rng.uniform(lo, hi)
        sk = forward_kinematics(theta, SHAPE)
        oracle_hit, margin = _sampling_oracle(sk)
        # Sampling resolution bounds the oracle's distance error; skip
        # poses sitting closer to the contact boundary than that.
        if abs(margin) < 0.5:
            continue
        checked += 1
        assert self_intersects(sk) == oracle_hit
    assert checked >= 30


def test_invariant_under_rigid_motion():
    rng = np.random.default_rng(23)
    lo, hi = SHAPE.joint_limits[:, 0], SHAPE.joint_limits[:, 1]
    for _ in range(10):
        art = rng.uniform(lo, hi)
        theta = np.zeros(N_THETA)
        theta[6:] = art
        base = self_intersects(forward_kinematics(theta, SHAPE))
        moved = theta.copy()
        moved[0:3] = rng.uniform(-200, 200, 3)
        moved[3:6] = rng.uniform(-np.pi, np.pi, 3)
        assert self_intersects(forward_kinematics(moved, SHAPE)) == base
