"""Procedurally defined base grasps.

Each grasp is a 26-vector base pose (identity global placement; the
viewpoint sampler positions it) plus an optional interaction object in
the palm frame. Articulation values were tuned by hand until every base
pose sits inside the joint limits and clears the capsule
self-intersection test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hand import N_THETA
from .render import Primitive


@dataclass(frozen=True)
class GraspSpec:
    """A named base pose, optionally holding an object.

    sigma_overrides maps theta indices to per-grasp perturbation sigmas
    that replace the global defaults for this grasp.
    """

    name: str
    base_pose: np.ndarray
    primitive: Primitive | None = None
    sigma_overrides: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "base_pose": [float(v) for v in self.base_pose],
            "primitive": self.primitive.to_dict() if self.primitive else None,
            "sigma_overrides": {str(k): float(v) for k, v in self.sigma_overrides.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GraspSpec":
        prim = Primitive.from_dict(d["primitive"]) if d.get("primitive") else None
        return cls(name=d["name"], base_pose=np.array(d["base_pose"], dtype=float),
                   primitive=prim,
                   sigma_overrides={int(k): float(v)
                                    for k, v in d.get("sigma_overrides", {}).items()})


def _pose(thumb, index, middle, ring, pinky) -> np.ndarray:
    theta = np.zeros(N_THETA)
    theta[6:10] = thumb
    theta[10:14] = index
    theta[14:18] = middle
    theta[18:22] = ring
    theta[22:26] = pinky
    return theta


def default_grasps(with_objects: bool = True) -> list[GraspSpec]:
    """The shipped base-grasp corpus (8 grasps).

    with_objects attaches the palm-frame interaction primitives (sphere,
    cylinder, box) to the grasps that define one.
    """
    sphere = Primitive("sphere", (30.0,), translation=np.array([0.0, 60.0, -45.0]))
    small_sphere = Primitive("sphere", (14.0,), translation=np.array([18.0, 95.0, -32.0]))
    cylinder = Primitive("cylinder", (18.0, 60.0),
                         rotation=np.array([[0.0, 1.0, 0.0],
                                            [1.0, 0.0, 0.0],
                                            [0.0, 0.0, -1.0]]),
                         translation=np.array([0.0, 60.0, -40.0]))
    card = Primitive("box", (28.0, 42.0, 4.0), translation=np.array([-5.0, 80.0, -30.0]))

    specs = [
        GraspSpec("open_palm", _pose(
            thumb=(0.0, 0.0, 0.0, 0.0), index=(0.0, 0.0, 0.0, 0.0),
            middle=(0.0, 0.0, 0.0, 0.0), ring=(0.0, 0.0, 0.0, 0.0),
            pinky=(0.0, 0.0, 0.0, 0.0))),
        GraspSpec("fist", _pose(
            thumb=(0.35, 0.55, 0.75, 0.55), index=(-0.06, 1.42, 1.6, 0.82),
            middle=(0.0, 1.52, 1.72, 0.9), ring=(0.07, 1.4, 1.58, 0.8),
            pinky=(0.0, 1.45, 1.65, 0.85))),
        GraspSpec("pinch", _pose(
            thumb=(0.45, 0.6, 0.6, 0.3), index=(0.0, 0.7, 0.9, 0.5),
            middle=(0.0, 1.2, 1.3, 0.7), ring=(0.0, 1.25, 1.35, 0.7),
            pinky=(0.0, 1.2, 1.3, 0.7)),
            primitive=small_sphere if with_objects else None),
        GraspSpec("cylinder_grip", _pose(
            thumb=(0.4, 0.5, 0.7, 0.4), index=(0.0, 1.0, 1.2, 0.6),
            middle=(0.0, 1.05, 1.25, 0.6), ring=(0.0, 1.05, 1.25, 0.6),
            pinky=(0.0, 1.0, 1.2, 0.6)),
            primitive=cylinder if with_objects else None),
        GraspSpec("sphere_grip", _pose(
            thumb=(0.3, 0.4, 0.5, 0.4), index=(-0.12, 0.7, 0.8, 0.5),
            middle=(0.0, 0.75, 0.85, 0.5), ring=(0.12, 0.75, 0.85, 0.5),
            pinky=(0.2, 0.7, 0.8, 0.5)),
            primitive=sphere if with_objects else None,
            sigma_overrides={}),
        GraspSpec("lateral_grip", _pose(
            thumb=(0.1, 0.3, 0.4, 0.3), index=(0.0, 1.2, 1.4, 0.8),
            middle=(0.0, 1.25, 1.45, 0.8), ring=(0.0, 1.25, 1.45, 0.8),
            pinky=(0.0, 1.2, 1.4, 0.8)),
            primitive=card if with_objects else None),
        GraspSpec("point", _pose(
            thumb=(0.35, 0.55, 0.7, 0.5), index=(0.0, 0.0, 0.0, 0.0),
            middle=(0.0, 1.45, 1.65, 0.9), ring=(0.07, 1.32, 1.5, 0.75),
            pinky=(-0.05, 1.42, 1.62, 0.88))),
        GraspSpec("thumbs_up", _pose(
            thumb=(-0.7, -0.2, -0.1, 0.0), index=(-0.06, 1.42, 1.6, 0.82),
            middle=(0.0, 1.52, 1.72, 0.9), ring=(0.07, 1.4, 1.58, 0.8),
            pinky=(0.0, 1.45, 1.65, 0.85))),
    ]
    return specs
