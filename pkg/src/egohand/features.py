"""Depth-gradient orientation histograms (HOG-D) over square windows.

A window is resampled to a fixed side (nearest-neighbor, depth values
are never interpolated across silhouette edges), offset by its center
depth, clipped, and reduced to a cells_x * cells_y grid of 16-bin signed
orientation histograms with a trailing constant bias element.

Flattening order is normative for serialized models: cell-major
(row by row, i.e. index = (cell_y * cells_x + cell_x) * bins + bin),
bias last. The default configuration gives 5*5*16 + 1 = 401 dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class FeatureConfig:
    window_px: int = 60
    cell_px: int = 12
    orientation_bins: int = 16
    depth_clip_mm: float = 250.0
    normalize_eps: float = 1e-3

    def __post_init__(self):
        if self.window_px % self.cell_px != 0:
            raise ValidationError("window side must be divisible by cell side")
        if self.orientation_bins < 2:
            raise ValidationError("need at least 2 orientation bins")

    @property
    def cells(self) -> int:
        return self.window_px // self.cell_px

    @property
    def dim(self) -> int:
        return self.cells * self.cells * self.orientation_bins + 1

    def to_dict(self) -> dict:
        return {
            "window_px": self.window_px,
            "cell_px": self.cell_px,
            "orientation_bins": self.orientation_bins,
            "depth_clip_mm": self.depth_clip_mm,
            "normalize_eps": self.normalize_eps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(window_px=int(d["window_px"]), cell_px=int(d["cell_px"]),
                   orientation_bins=int(d["orientation_bins"]),
                   depth_clip_mm=float(d["depth_clip_mm"]),
                   normalize_eps=float(d["normalize_eps"]))


@dataclass(frozen=True)
class PartRegion:
    """Cell-aligned rectangle (in cells) selecting a descriptor subgrid."""

    x0: int
    y0: int
    w: int
    h: int

    def validate(self, cells: int) -> None:
        if self.w < 2 or self.h < 2:
            raise ValidationError("part regions must span at least 2x2 cells")
        if self.x0 < 0 or self.y0 < 0 or self.x0 + self.w > cells or self.y0 + self.h > cells:
            raise ValidationError(f"region {self} outside the {cells}x{cells} cell grid")

    def to_list(self) -> list:
        return [self.x0, self.y0, self.w, self.h]


def resample_square(depth: np.ndarray, center_xy, side_px: float,
                    n: int) -> np.ndarray:
    """Nearest-neighbor resample of a side_px square around center_xy to
    an n x n grid. Out-of-image samples come back invalid (0). Depth is
    never interpolated, so silhouette edges stay crisp."""
    h, w = depth.shape
    cx, cy = float(center_xy[0]), float(center_xy[1])
    # Pixel k of the target maps to the source point at the center of the
    # k-th of n equal slices of the square.
    offs = (np.arange(n) + 0.5) / n - 0.5
    us = np.rint(cx + offs * side_px).astype(int)
    vs = np.rint(cy + offs * side_px).astype(int)
    uu = np.clip(us, 0, w - 1)
    vv = np.clip(vs, 0, h - 1)
    out = depth[np.ix_(vv, uu)].astype(float).copy()
    bad_u = (us < 0) | (us >= w)
    bad_v = (vs < 0) | (vs >= h)
    out[:, bad_u] = 0.0
    out[bad_v, :] = 0.0
    return out


def crop_window(depth: np.ndarray, center_xy, side_px: float,
                cfg: FeatureConfig) -> np.ndarray:
    """Resample a window to the configured descriptor side."""
    return resample_square(depth, center_xy, side_px, cfg.window_px)


def compute_hogd(crop: np.ndarray, cfg: FeatureConfig,
                 center_depth: float | None = None) -> np.ndarray:
    """Descriptor of one resampled window; returns a (dim,) float vector.

    Invalid (0) samples and their 4-neighbors contribute no gradient;
    the descriptor is exactly invariant to a constant depth shift and is
    L2-normalized over the histogram part (bias excluded).
    """
    n = cfg.window_px
    if crop.shape != (n, n):
        raise ValidationError(f"expected a {n}x{n} crop, got {crop.shape}")
    crop = np.asarray(crop, dtype=float)
    valid = crop > 0

    if center_depth is None:
        center_depth = crop[n // 2, n // 2]
    rel = np.where(valid, np.clip(crop - center_depth,
                                  -cfg.depth_clip_mm, cfg.depth_clip_mm), 0.0)

    # Central differences; a pixel votes only when it and all 4 of its
    # neighbors are valid, so silhouette-adjacent invalid samples never
    # leak into gradients.
    gx = np.zeros_like(rel)
    gy = np.zeros_like(rel)
    gx[:, 1:-1] = 0.5 * (rel[:, 2:] - rel[:, :-2])
    gy[1:-1, :] = 0.5 * (rel[2:, :] - rel[:-2, :])
    ok = np.zeros_like(valid)
    ok[1:-1, 1:-1] = (valid[1:-1, 1:-1]
                      & valid[1:-1, 2:] & valid[1:-1, :-2]
                      & valid[2:, 1:-1] & valid[:-2, 1:-1])

    mag = np.hypot(gx, gy)
    mag[~ok] = 0.0
    ang = np.arctan2(gy, gx) % (2.0 * np.pi)

    bins = cfg.orientation_bins
    cells = cfg.cells
    hist = np.zeros((cells, cells, bins))

    ys, xs = np.nonzero(mag > 0)
    if ys.size:
        m = mag[ys, xs]
        a = ang[ys, xs] * bins / (2.0 * np.pi)
        b0 = np.floor(a).astype(int) % bins
        fb = a - np.floor(a)
        # Bilinear cell interpolation; votes falling outside the grid are
        # dropped, keeping the descriptor equivariant under 90-degree
        # window rotations.
        px = (xs + 0.5) / cfg.cell_px - 0.5
        py = (ys + 0.5) / cfg.cell_px - 0.5
        cx0 = np.floor(px).astype(int)
        cy0 = np.floor(py).astype(int)
        fx = px - cx0
        fy = py - cy0
        for dy in (0, 1):
            for dx in (0, 1):
                cxx = cx0 + dx
                cyy = cy0 + dy
                wgt = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy) * m
                inside = (cxx >= 0) & (cxx < cells) & (cyy >= 0) & (cyy < cells)
                for db, wb in ((b0, 1.0 - fb), ((b0 + 1) % bins, fb)):
                    np.add.at(hist, (cyy[inside], cxx[inside], db[inside]),
                              (wgt * wb)[inside])

    flat = hist.reshape(-1)
    norm = np.sqrt(float(flat @ flat) + cfg.normalize_eps ** 2)
    out = np.empty(cfg.dim)
    out[:-1] = flat / norm
    out[-1] = 1.0
    return out


def part_vector(grid: np.ndarray, region: PartRegion, cfg: FeatureConfig) -> np.ndarray:
    """Zero-pad a descriptor outside the region; bias preserved.

    Dot products against full-window templates then equal the
    region-restricted dot products.
    """
    if grid.shape != (cfg.dim,):
        raise ValidationError(f"expected a {cfg.dim}-dim descriptor")
    region.validate(cfg.cells)
    out = np.zeros_like(grid)
    mask = region_mask(region, cfg)
    out[mask] = grid[mask]
    return out


def region_mask(region: PartRegion, cfg: FeatureConfig) -> np.ndarray:
    """Boolean mask over descriptor coordinates covered by the region
    (bias included)."""
    region.validate(cfg.cells)
    cells, bins = cfg.cells, cfg.orientation_bins
    m = np.zeros((cells, cells, bins), dtype=bool)
    m[region.y0:region.y0 + region.h, region.x0:region.x0 + region.w, :] = True
    out = np.zeros(cfg.dim, dtype=bool)
    out[:-1] = m.reshape(-1)
    out[-1] = True
    return out
