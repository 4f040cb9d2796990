"""Articulated hand model: shape parameters, forward kinematics, and
capsule-based self-intersection tests.

Pose vector layout (26 values, the order is normative for all serialized
poses):

    theta[0:3]   wrist translation in camera coordinates, mm
    theta[3:6]   wrist rotation (rx, ry, rz), composed as Rz @ Ry @ Rx
    theta[6:26]  articulation, 4 angles per finger in the order
                 thumb, index, middle, ring, pinky:
                 [abduction, MCP flexion, PIP flexion, DIP flexion]

The hand-local (palm) frame has +x toward the thumb, +y from the wrist
toward the fingertips, +z out of the back of the hand. Positive flexion
curls a finger toward the palm (-z side). Each finger is a planar chain:
abduction rotates about the palm normal at the knuckle, the three flexion
angles share one axis, and the wrist-to-knuckle (metacarpal) segment is
rigid in the palm frame.

Keypoint layout (21 points): index 0 is the wrist; finger f contributes
points 1+4f .. 4+4f as [MCP, PIP, DIP, tip]. The 20 "scored" keypoints
used by labels and metrics drop the wrist, keeping this order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .rotations import axis_angle, euler_to_matrix

FINGER_NAMES = ("thumb", "index", "middle", "ring", "pinky")
N_THETA = 26
N_KEYPOINTS = 21
N_SCORED = 20
N_SEGMENTS = 20
# Positions of the five fingertips inside the 20-point scored array.
FINGERTIP_SCORED_INDICES = (3, 7, 11, 15, 19)

_DEF_BONES = np.array([
    # metacarpal, proximal, middle, distal (mm)
    [45.0, 35.0, 30.0, 25.0],   # thumb
    [68.0, 42.0, 25.0, 20.0],   # index
    [70.0, 45.0, 28.0, 22.0],   # middle
    [65.0, 42.0, 26.0, 20.0],   # ring
    [60.0, 32.0, 20.0, 18.0],   # pinky
])

_DEF_RADII = np.array([
    [11.0, 8.5, 7.5, 7.0],      # thumb
    [9.0, 6.5, 5.5, 5.0],       # index
    [9.0, 6.5, 5.5, 5.0],       # middle
    [9.0, 6.5, 5.5, 5.0],       # ring
    [8.0, 5.5, 5.0, 4.5],       # pinky
])

# In-palm splay of each metacarpal (radians from +y toward +x) and its
# palmar drop; the thumb sits below the palm plane.
_DEF_FAN = np.radians([-55.0, -18.0, 0.0, 17.0, 34.0])
_DEF_DROP = np.radians([25.0, 0.0, 0.0, 0.0, 0.0])

_DEF_LIMITS = np.array([
    # thumb: abduction, MCP, PIP, DIP
    [-0.80, 0.80], [-0.50, 1.20], [-0.30, 1.30], [-0.30, 1.20],
    # index
    [-0.35, 0.35], [-0.35, 1.75], [-0.10, 1.92], [-0.10, 1.40],
    # middle
    [-0.35, 0.35], [-0.35, 1.75], [-0.10, 1.92], [-0.10, 1.40],
    # ring
    [-0.35, 0.35], [-0.35, 1.75], [-0.10, 1.92], [-0.10, 1.40],
    # pinky
    [-0.35, 0.35], [-0.35, 1.75], [-0.10, 1.92], [-0.10, 1.40],
])


def _metacarpal_dirs(fan: np.ndarray, drop: np.ndarray) -> np.ndarray:
    """Unit metacarpal directions in the palm frame, one row per finger."""
    return np.column_stack([
        np.sin(fan) * np.cos(drop),
        np.cos(fan) * np.cos(drop),
        -np.sin(drop),
    ])


@dataclass(frozen=True)
class HandShape:
    """Geometric hand parameters: bone lengths, capsule radii, joint limits.

    bone_lengths and capsule_radii are (5, 4) arrays ordered
    [metacarpal, proximal, middle, distal] per finger; joint_limits is
    (20, 2) rows of (low, high) matching theta[6:26]. hand_size is the
    canonical bounding-sphere diameter in mm, used to size detection
    windows; when 0 it is derived from the rest skeleton.
    """

    bone_lengths: np.ndarray = field(default_factory=lambda: _DEF_BONES.copy())
    capsule_radii: np.ndarray = field(default_factory=lambda: _DEF_RADII.copy())
    joint_limits: np.ndarray = field(default_factory=lambda: _DEF_LIMITS.copy())
    fan_angles: np.ndarray = field(default_factory=lambda: _DEF_FAN.copy())
    drop_angles: np.ndarray = field(default_factory=lambda: _DEF_DROP.copy())
    palm_radius: float = 32.0
    forearm_length: float = 150.0
    forearm_radius: float = 30.0
    hand_size: float = 0.0

    def __post_init__(self):
        bl = np.asarray(self.bone_lengths, dtype=float)
        cr = np.asarray(self.capsule_radii, dtype=float)
        jl = np.asarray(self.joint_limits, dtype=float)
        if bl.shape != (5, 4) or cr.shape != (5, 4):
            raise ValidationError("bone_lengths and capsule_radii must be (5, 4)")
        if np.any(bl <= 0) or np.any(cr <= 0):
            raise ValidationError("bone lengths and capsule radii must be positive")
        if jl.shape != (20, 2) or np.any(jl[:, 0] >= jl[:, 1]):
            raise ValidationError("joint_limits must be (20, 2) non-empty intervals")
        object.__setattr__(self, "bone_lengths", bl)
        object.__setattr__(self, "capsule_radii", cr)
        object.__setattr__(self, "joint_limits", jl)
        object.__setattr__(self, "fan_angles", np.asarray(self.fan_angles, dtype=float))
        object.__setattr__(self, "drop_angles", np.asarray(self.drop_angles, dtype=float))
        if self.hand_size <= 0:
            rest = self.rest_keypoints()
            centroid = rest.mean(axis=0)
            reach = np.linalg.norm(rest - centroid, axis=1).max()
            size = 2.0 * (reach + cr.max())
            object.__setattr__(self, "hand_size", float(round(size)))

    def rest_keypoints(self) -> np.ndarray:
        """Closed-form rest configuration: every finger lies along its
        metacarpal direction; (21, 3) in the palm frame."""
        dirs = _metacarpal_dirs(self.fan_angles, self.drop_angles)
        pts = np.zeros((N_KEYPOINTS, 3))
        reach = np.cumsum(self.bone_lengths, axis=1)  # (5, 4)
        for f in range(5):
            pts[1 + 4 * f: 5 + 4 * f] = reach[f][:, None] * dirs[f][None, :]
        return pts

    def segment_radii(self) -> np.ndarray:
        """Capsule radius per skeleton segment, finger-major (20,)."""
        return self.capsule_radii.reshape(-1)

    def to_dict(self) -> dict:
        return {
            "bone_lengths": self.bone_lengths.tolist(),
            "capsule_radii": self.capsule_radii.tolist(),
            "joint_limits": self.joint_limits.tolist(),
            "fan_angles": self.fan_angles.tolist(),
            "drop_angles": self.drop_angles.tolist(),
            "palm_radius": float(self.palm_radius),
            "forearm_length": float(self.forearm_length),
            "forearm_radius": float(self.forearm_radius),
            "hand_size": float(self.hand_size),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HandShape":
        return cls(bone_lengths=np.array(d["bone_lengths"]),
                   capsule_radii=np.array(d["capsule_radii"]),
                   joint_limits=np.array(d["joint_limits"]),
                   fan_angles=np.array(d["fan_angles"]),
                   drop_angles=np.array(d["drop_angles"]),
                   palm_radius=d["palm_radius"],
                   forearm_length=d["forearm_length"],
                   forearm_radius=d["forearm_radius"],
                   hand_size=d["hand_size"])


# Segment endpoints as keypoint indices, finger-major: wrist->MCP,
# MCP->PIP, PIP->DIP, DIP->tip for each finger.
SEGMENT_INDICES = np.array(
    [(0 if k == 0 else 4 * f + k, 4 * f + k + 1) for f in range(5) for k in range(4)]
)


@dataclass(frozen=True)
class Skeleton:
    """Posed hand: 21 keypoints (mm, camera frame) plus capsule geometry."""

    points: np.ndarray            # (21, 3)
    radii: np.ndarray             # (20,) capsule radius per segment
    palm_a: np.ndarray            # palm capsule endpoints and radius
    palm_b: np.ndarray
    palm_r: float
    forearm_a: np.ndarray
    forearm_b: np.ndarray
    forearm_r: float

    @property
    def wrist(self) -> np.ndarray:
        return self.points[0]

    @property
    def scored(self) -> np.ndarray:
        """The 20 scored keypoints (wrist dropped)."""
        return self.points[1:]

    def segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Capsule segments as (A, B, r) arrays of shape (20, 3)/(20,)."""
        a = self.points[SEGMENT_INDICES[:, 0]]
        b = self.points[SEGMENT_INDICES[:, 1]]
        return a, b, self.radii

    def keypoint_radii(self) -> np.ndarray:
        """Local capsule radius at each of the 21 keypoints (for
        visibility tests): the radius of the segment ending there, and the
        palm radius at the wrist."""
        r = np.empty(N_KEYPOINTS)
        r[0] = self.palm_r
        r[SEGMENT_INDICES[:, 1]] = self.radii
        return r


def validate_articulation(theta: np.ndarray, shape: HandShape) -> None:
    """Raise ValidationError naming the first out-of-limit joint index."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (N_THETA,):
        raise ValidationError(f"pose must have {N_THETA} values, got {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ValidationError("pose contains non-finite values")
    art = theta[6:]
    lo, hi = shape.joint_limits[:, 0], shape.joint_limits[:, 1]
    bad = np.where((art < lo - 1e-12) | (art > hi + 1e-12))[0]
    if bad.size:
        j = int(bad[0])
        raise ValidationError(
            f"articulation angle theta[{6 + j}] = {art[j]:.4f} outside "
            f"limits [{lo[j]:.4f}, {hi[j]:.4f}]")


def clamp_articulation(theta: np.ndarray, shape: HandShape) -> np.ndarray:
    """Clamp theta[6:26] into the shape's joint limits; global part untouched."""
    out = np.asarray(theta, dtype=float).copy()
    out[6:] = np.clip(out[6:], shape.joint_limits[:, 0], shape.joint_limits[:, 1])
    return out


def forward_kinematics(theta: np.ndarray, shape: HandShape) -> Skeleton:
    """Pose the hand. Deterministic; preserves bone lengths exactly.

    Raises ValidationError when an articulation angle is out of limits.
    """
    theta = np.asarray(theta, dtype=float)
    validate_articulation(theta, shape)

    t = theta[0:3]
    r_global = euler_to_matrix(theta[3], theta[4], theta[5])
    meta_dirs = _metacarpal_dirs(shape.fan_angles, shape.drop_angles)
    z_palm = np.array([0.0, 0.0, 1.0])

    local = np.zeros((N_KEYPOINTS, 3))
    for f in range(5):
        abd, mcp, pip, dip = theta[6 + 4 * f: 10 + 4 * f]
        lengths = shape.bone_lengths[f]
        y_f = meta_dirs[f]
        # Per-finger frame: palm normal projected clear of the metacarpal.
        z_f = z_palm - np.dot(z_palm, y_f) * y_f
        z_f /= np.linalg.norm(z_f)
        x_f = np.cross(y_f, z_f)

        mcp_pt = lengths[0] * y_f
        r_abd = axis_angle(z_f, abd)
        dir0 = r_abd @ y_f
        flex_axis = r_abd @ (-x_f)  # positive flexion bends toward the palm

        p = mcp_pt
        pts = [mcp_pt]
        cum = 0.0
        for seg, ang in zip(lengths[1:], (mcp, pip, dip)):
            cum += ang
            d = axis_angle(flex_axis, cum) @ dir0
            p = p + seg * d
            pts.append(p)
        local[1 + 4 * f: 5 + 4 * f] = pts

    pts_cam = local @ r_global.T + t

    wrist = pts_cam[0]
    y_cam = r_global @ np.array([0.0, 1.0, 0.0])
    palm_len = 0.55 * shape.bone_lengths[2, 0]
    return Skeleton(
        points=pts_cam,
        radii=shape.segment_radii(),
        palm_a=wrist + 0.2 * palm_len * y_cam,
        palm_b=wrist + palm_len * y_cam,
        palm_r=shape.palm_radius,
        forearm_a=wrist,
        forearm_b=wrist - shape.forearm_length * y_cam,
        forearm_r=shape.forearm_radius,
    )


def _segment_distance(p1, q1, p2, q2) -> float:
    """Closest distance between segments [p1,q1] and [p2,q2]."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(np.dot(d1, d1))
    e = float(np.dot(d2, d2))
    f = float(np.dot(d2, r))
    eps = 1e-12
    if a <= eps and e <= eps:
        return float(np.linalg.norm(r))
    if a <= eps:
        s, t = 0.0, min(1.0, max(0.0, f / e))
    else:
        c = float(np.dot(d1, r))
        if e <= eps:
            t, s = 0.0, min(1.0, max(0.0, -c / a))
        else:
            b = float(np.dot(d1, d2))
            denom = a * e - b * b
            s = min(1.0, max(0.0, (b * f - c * e) / denom)) if denom > eps else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(1.0, max(0.0, -c / a))
            elif t > 1.0:
                t = 1.0
                s = min(1.0, max(0.0, (b - c) / a))
    closest1 = p1 + s * d1
    closest2 = p2 + t * d2
    return float(np.linalg.norm(closest1 - closest2))


def self_intersects(skeleton: Skeleton) -> bool:
    """True iff any two capsules that share no joint come closer than the
    sum of their radii. Symmetric in pair order; rigid-motion invariant."""
    a, b, radii = skeleton.segments()
    n = len(radii)
    idx = SEGMENT_INDICES
    for i in range(n):
        for j in range(i + 1, n):
            if set(idx[i]) & set(idx[j]):
                continue  # shared joint: adjacent capsules may touch
            d = _segment_distance(a[i], b[i], a[j], b[j])
            if d < radii[i] + radii[j]:
                return True
    return False
