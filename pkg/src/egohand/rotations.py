"""Small rotation helpers (3x3 matrices, mm/radian conventions)."""

from __future__ import annotations

import math

import numpy as np


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_matrix(rx: float, ry: float, rz: float) -> np.ndarray:
    """Compose R = Rz(rz) @ Ry(ry) @ Rx(rx)."""
    return rot_z(rz) @ rot_y(ry) @ rot_x(rx)


def matrix_to_euler(r: np.ndarray) -> tuple[float, float, float]:
    """Invert euler_to_matrix; returns (rx, ry, rz).

    Near the ry = +-pi/2 gimbal the rx/rz split is not unique; one valid
    decomposition is returned (rx set to 0).
    """
    sy = -r[2, 0]
    sy = min(1.0, max(-1.0, float(sy)))
    ry = math.asin(sy)
    if abs(sy) < 1.0 - 1e-12:
        rx = math.atan2(r[2, 1], r[2, 2])
        rz = math.atan2(r[1, 0], r[0, 0])
    else:
        rx = 0.0
        rz = math.atan2(-r[0, 1], r[1, 1])
    return rx, ry, rz


def axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    ax = np.asarray(axis, dtype=float)
    n = np.linalg.norm(ax)
    if n == 0:
        raise ValueError("rotation axis must be nonzero")
    x, y, z = ax / n
    c, s = math.cos(angle), math.sin(angle)
    t = 1.0 - c
    return np.array([
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ])
