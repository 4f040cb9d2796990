"""Pinhole camera model: projection and back-projection.

Camera coordinates are right-handed with x right, y down, z forward
(optical axis). All lengths are millimeters, image coordinates are
pixels with the origin at the top-left corner.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, ValidationError


@dataclass(frozen=True)
class PinholeCamera:
    """Intrinsics of an ideal pinhole camera.

    fx, fy are focal lengths in pixels, (cx, cy) the principal point in
    pixels, and (width, height) the image size.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("image dimensions must be positive")

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PinholeCamera":
        return cls(fx=d["fx"], fy=d["fy"], cx=d["cx"], cy=d["cy"],
                   width=int(d["width"]), height=int(d["height"]))


# 320x240 time-of-flight-style default: ~67 degree horizontal field of view.
DEFAULT_CAMERA = PinholeCamera(fx=240.0, fy=240.0, cx=160.0, cy=120.0,
                               width=320, height=240)


def project(camera: PinholeCamera, point) -> tuple[float, float, float]:
    """Project a camera-space 3D point (mm) to (u, v, depth).

    u = fx*X/Z + cx, v = fy*Y/Z + cy, depth = Z. Raises BehindCameraError
    for Z <= 0.
    """
    x, y, z = float(point[0]), float(point[1]), float(point[2])
    if z <= 0:
        raise BehindCameraError(f"point depth {z} mm is not in front of the camera")
    return camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy, z


def project_points(camera: PinholeCamera, points: np.ndarray) -> np.ndarray:
    """Vectorized projection of an (N, 3) array; returns (N, 3) of (u, v, z).

    All depths must be positive.
    """
    pts = np.asarray(points, dtype=float)
    z = pts[:, 2]
    if np.any(z <= 0):
        raise BehindCameraError("all points must lie in front of the camera")
    u = camera.fx * pts[:, 0] / z + camera.cx
    v = camera.fy * pts[:, 1] / z + camera.cy
    return np.column_stack([u, v, z])


def back_project(camera: PinholeCamera, u: float, v: float, depth: float) -> np.ndarray:
    """Invert the projection: pixel (u, v) at a given depth back to 3D (mm)."""
    if depth <= 0:
        raise BehindCameraError(f"depth {depth} mm must be positive")
    x = (u - camera.cx) * depth / camera.fx
    y = (v - camera.cy) * depth / camera.fy
    return np.array([x, y, depth], dtype=float)


def in_image(camera: PinholeCamera, u: float, v: float) -> bool:
    """True when the pixel coordinate lies inside the image rectangle."""
    return 0.0 <= u < camera.width and 0.0 <= v < camera.height
