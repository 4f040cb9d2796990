"""Analytic depth rendering: per-pixel ray casting against capsules,
spheres, cylinders, and boxes.

Depth images are (H, W) float arrays in millimeters, 0 marking invalid
pixels. Pixel (row, col) samples the ray through image coordinates
(u, v) = (col, row), matching camera.project. The renderer is exact
(no rasterization), composes scenes by pixelwise nearest depth, and is a
pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import PinholeCamera, project_points
from .errors import ValidationError
from .hand import Skeleton

VISIBILITY_TOLERANCE_MM = 5.0


@dataclass(frozen=True)
class Primitive:
    """Rigid interaction object.

    kind is "sphere", "cylinder", or "box". dims in mm:
    sphere (radius,), cylinder (radius, half_length) with the axis along
    local +y, box (hx, hy, hz) half extents. rotation/translation place
    the primitive in whatever frame the caller renders in (grasp specs
    use the palm frame; rendering uses camera frame).
    """

    kind: str
    dims: tuple
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.kind not in ("sphere", "cylinder", "box"):
            raise ValidationError(f"unknown primitive kind {self.kind!r}")
        if any(d <= 0 for d in self.dims):
            raise ValidationError("primitive dimensions must be positive")
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "Primitive":
        """Compose a rigid transform on the left (frame change)."""
        return Primitive(
            kind=self.kind,
            dims=self.dims,
            rotation=rotation @ self.rotation,
            translation=rotation @ self.translation + np.asarray(translation, dtype=float),
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dims": [float(d) for d in self.dims],
            "rotation": [[float(v) for v in row] for row in self.rotation],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Primitive":
        return cls(kind=d["kind"], dims=tuple(d["dims"]),
                   rotation=np.array(d["rotation"]),
                   translation=np.array(d["translation"]))


@dataclass(frozen=True)
class BackgroundModel:
    """Fronto-parallel backdrop plane with optional depth noise and
    invalid-pixel dropout (dropout applies to background pixels only)."""

    depth_mm: float = 900.0
    noise_sigma: float = 3.0
    invalid_fraction: float = 0.0


# Internal scene shapes, all in camera coordinates.

@dataclass(frozen=True)
class CapsuleShape:
    a: np.ndarray
    b: np.ndarray
    r: float


@dataclass(frozen=True)
class SphereShape:
    center: np.ndarray
    r: float


@dataclass(frozen=True)
class CylinderShape:
    a: np.ndarray
    b: np.ndarray
    r: float


@dataclass(frozen=True)
class BoxShape:
    rotation: np.ndarray
    center: np.ndarray
    half: np.ndarray


def primitive_shape(p: Primitive):
    if p.kind == "sphere":
        return SphereShape(center=p.translation, r=float(p.dims[0]))
    if p.kind == "cylinder":
        axis = p.rotation @ np.array([0.0, 1.0, 0.0])
        hl = float(p.dims[1])
        return CylinderShape(a=p.translation - hl * axis,
                             b=p.translation + hl * axis, r=float(p.dims[0]))
    return BoxShape(rotation=p.rotation, center=p.translation,
                    half=np.asarray(p.dims, dtype=float))


def skeleton_shapes(skeleton: Skeleton, include_palm=True, include_forearm=True):
    """Renderable capsule set for a posed hand."""
    a, b, radii = skeleton.segments()
    shapes = [CapsuleShape(a=a[i], b=b[i], r=float(radii[i])) for i in range(len(radii))]
    if include_palm:
        shapes.append(CapsuleShape(a=skeleton.palm_a, b=skeleton.palm_b,
                                   r=skeleton.palm_r))
    if include_forearm:
        shapes.append(CapsuleShape(a=skeleton.forearm_a, b=skeleton.forearm_b,
                                   r=skeleton.forearm_r))
    return shapes


def _bounding_sphere(shape):
    if isinstance(shape, SphereShape):
        return shape.center, shape.r
    if isinstance(shape, (CapsuleShape, CylinderShape)):
        c = 0.5 * (shape.a + shape.b)
        return c, 0.5 * float(np.linalg.norm(shape.b - shape.a)) + shape.r
    return shape.center, float(np.linalg.norm(shape.half))


def _pixel_rect(camera: PinholeCamera, shape):
    """Conservative pixel rectangle covering the shape, or None if the
    shape cannot appear. Falls back to the full image near the camera."""
    c, r = _bounding_sphere(shape)
    zc = float(c[2])
    if zc + r <= 0:
        return None
    if zc - r <= 1.0:
        return 0, camera.height, 0, camera.width
    u = camera.fx * c[0] / zc + camera.cx
    v = camera.fy * c[1] / zc + camera.cy
    ru = camera.fx * r / (zc - r) + 2.0
    rv = camera.fy * r / (zc - r) + 2.0
    x0 = max(0, int(math.floor(u - ru)))
    x1 = min(camera.width, int(math.ceil(u + ru)) + 1)
    y0 = max(0, int(math.floor(v - rv)))
    y1 = min(camera.height, int(math.ceil(v + rv)) + 1)
    if x0 >= x1 or y0 >= y1:
        return None
    return y0, y1, x0, x1


def _ray_dirs(camera: PinholeCamera, rect):
    """Unit ray directions for the pixel rectangle; returns (dirs, dz)
    where dirs is (n, 3)."""
    y0, y1, x0, x1 = rect
    us = (np.arange(x0, x1) - camera.cx) / camera.fx
    vs = (np.arange(y0, y1) - camera.cy) / camera.fy
    uu, vv = np.meshgrid(us, vs)
    d = np.stack([uu, vv, np.ones_like(uu)], axis=-1).reshape(-1, 3)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d


def _sphere_entry(d, center, r):
    """Smallest positive ray parameter entering the sphere (inf on miss)."""
    dc = d @ center
    disc = dc * dc - (float(center @ center) - r * r)
    t = np.full(d.shape[0], np.inf)
    ok = disc >= 0
    tt = dc[ok] - np.sqrt(disc[ok])
    tt[tt <= 0] = np.inf
    t[ok] = tt
    return t


def _capsule_entry(d, a, b, r):
    ba = b - a
    oa = -a
    baba = float(ba @ ba)
    baoa = float(ba @ oa)
    oaoa = float(oa @ oa)
    bard = d @ ba
    rdoa = d @ oa
    qa = baba - bard * bard
    qb = baba * rdoa - baoa * bard
    qc = baba * oaoa - baoa * baoa - r * r * baba
    h = qb * qb - qa * qc
    t = np.full(d.shape[0], np.inf)
    ok = (h >= 0) & (qa > 1e-12)
    tt = (-qb[ok] - np.sqrt(h[ok])) / qa[ok]
    y = baoa + tt * bard[ok]
    tt[(y < 0) | (y > baba) | (tt <= 0)] = np.inf
    t[ok] = tt
    # End caps close the body hit from the sphere side.
    t = np.minimum(t, _sphere_entry(d, a, r))
    t = np.minimum(t, _sphere_entry(d, b, r))
    return t


def _cylinder_entry(d, a, b, r):
    """Capped cylinder as the intersection of an infinite cylinder and a
    slab; entry = latest of the two entries when the interval survives."""
    ba = b - a
    oa = -a
    baba = float(ba @ ba)
    baoa = float(ba @ oa)
    oaoa = float(oa @ oa)
    bard = d @ ba
    rdoa = d @ oa
    qa = baba - bard * bard
    qb = baba * rdoa - baoa * bard
    qc = baba * oaoa - baoa * baoa - r * r * baba

    n = d.shape[0]
    cyl_in = np.full(n, np.inf)
    cyl_out = np.full(n, -np.inf)
    par = qa <= 1e-12
    h = qb * qb - qa * qc
    ok = (~par) & (h >= 0)
    sq = np.sqrt(h[ok])
    cyl_in[ok] = (-qb[ok] - sq) / qa[ok]
    cyl_out[ok] = (-qb[ok] + sq) / qa[ok]
    # Rays parallel to the axis: inside iff the perpendicular miss
    # distance is within r, i.e. qc <= 0 at every t.
    inside_par = par & (qc <= 0)
    cyl_in[inside_par] = -np.inf
    cyl_out[inside_par] = np.inf

    # Slab 0 <= baoa + t*bard <= baba.
    slab_in = np.full(n, -np.inf)
    slab_out = np.full(n, np.inf)
    moving = np.abs(bard) > 1e-12
    t0 = (0.0 - baoa) / np.where(moving, bard, 1.0)
    t1 = (baba - baoa) / np.where(moving, bard, 1.0)
    slab_in[moving] = np.minimum(t0, t1)[moving]
    slab_out[moving] = np.maximum(t0, t1)[moving]
    flat_outside = (~moving) & ((baoa < 0) | (baoa > baba))
    slab_in[flat_outside] = np.inf
    slab_out[flat_outside] = -np.inf

    tin = np.maximum(cyl_in, slab_in)
    tout = np.minimum(cyl_out, slab_out)
    t = np.where((tin <= tout) & (tin > 0), tin, np.inf)
    return t


def _box_entry(d, rotation, center, half):
    dl = d @ rotation  # rows: R^T @ d
    ol = -(rotation.T @ center)
    n = d.shape[0]
    tin = np.full(n, -np.inf)
    tout = np.full(n, np.inf)
    for k in range(3):
        dk = dl[:, k]
        moving = np.abs(dk) > 1e-12
        t0 = (-half[k] - ol[k]) / np.where(moving, dk, 1.0)
        t1 = (half[k] - ol[k]) / np.where(moving, dk, 1.0)
        lo = np.where(moving, np.minimum(t0, t1), -np.inf)
        hi = np.where(moving, np.maximum(t0, t1), np.inf)
        outside = (~moving) & (np.abs(ol[k]) > half[k])
        lo = np.where(outside, np.inf, lo)
        hi = np.where(outside, -np.inf, hi)
        tin = np.maximum(tin, lo)
        tout = np.minimum(tout, hi)
    return np.where((tin <= tout) & (tin > 0), tin, np.inf)


def _shape_entry(d, shape):
    if isinstance(shape, SphereShape):
        return _sphere_entry(d, shape.center, shape.r)
    if isinstance(shape, CapsuleShape):
        return _capsule_entry(d, shape.a, shape.b, shape.r)
    if isinstance(shape, CylinderShape):
        return _cylinder_entry(d, shape.a, shape.b, shape.r)
    return _box_entry(d, shape.rotation, shape.center, shape.half)


def render_shapes(camera: PinholeCamera, shapes, background: BackgroundModel | None = None,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Z-buffer compose a shape list over the background plane.

    Returns an (H, W) depth image in mm. Background noise / dropout
    require an rng; omit them (sigma = 0, fraction = 0) for exact
    reproducible geometry tests.
    """
    bg = background if background is not None else BackgroundModel()
    depth = np.full((camera.height, camera.width), np.inf)
    for shape in shapes:
        rect = _pixel_rect(camera, shape)
        if rect is None:
            continue
        y0, y1, x0, x1 = rect
        d = _ray_dirs(camera, rect)
        t = _shape_entry(d, shape)
        z = (t * d[:, 2]).reshape(y1 - y0, x1 - x0)
        sub = depth[y0:y1, x0:x1]
        np.minimum(sub, z, out=sub)

    hit = np.isfinite(depth)
    if bg.noise_sigma > 0 or bg.invalid_fraction > 0:
        if rng is None:
            raise ValidationError("background noise requires an rng")
        bg_depth = np.full(depth.shape, bg.depth_mm)
        if bg.noise_sigma > 0:
            bg_depth += rng.normal(0.0, bg.noise_sigma, size=depth.shape)
        bg_depth = np.maximum(bg_depth, 1.0)
        if bg.invalid_fraction > 0:
            bg_depth[rng.random(depth.shape) < bg.invalid_fraction] = 0.0
        out = np.where(hit, depth, bg_depth)
    else:
        out = np.where(hit, depth, bg.depth_mm)
    return out


def keypoint_visibility(camera: PinholeCamera, depth: np.ndarray,
                        skeleton: Skeleton,
                        tolerance: float = VISIBILITY_TOLERANCE_MM) -> np.ndarray:
    """Per-keypoint visibility against a rendered depth image.

    A keypoint is visible when it projects inside the image and the
    rendered depth at its pixel matches the keypoint's own front surface
    (keypoint depth minus local capsule radius) within the tolerance.
    """
    pts = skeleton.points
    radii = skeleton.keypoint_radii()
    vis = np.zeros(len(pts), dtype=bool)
    uvz = project_points(camera, pts)
    cols = np.round(uvz[:, 0]).astype(int)
    rows = np.round(uvz[:, 1]).astype(int)
    inside = (cols >= 0) & (cols < camera.width) & (rows >= 0) & (rows < camera.height)
    for k in np.where(inside)[0]:
        surface = uvz[k, 2] - radii[k]
        vis[k] = abs(depth[rows[k], cols[k]] - surface) <= tolerance
    return vis


def render_depth(camera: PinholeCamera, skeleton: Skeleton | None,
                 objects=(), background: BackgroundModel | None = None,
                 rng: np.random.Generator | None = None,
                 include_palm=True, include_forearm=True):
    """Render a hand (optional) plus interaction objects.

    Returns (depth, visibility) where visibility is a (21,) bool array,
    or None when no skeleton was given. Objects must already be expressed
    in camera coordinates.
    """
    shapes = []
    if skeleton is not None:
        shapes.extend(skeleton_shapes(skeleton, include_palm, include_forearm))
    shapes.extend(primitive_shape(p) for p in objects)
    depth = render_shapes(camera, shapes, background=background, rng=rng)
    vis = keypoint_visibility(camera, depth, skeleton) if skeleton is not None else None
    return depth, vis
