"""Sparse scanning-window detection over a depth frame.

The frame is median filtered, grid locations beyond arm's reach are
pruned, each surviving location gets a single window whose side comes
from the scale map (expected hand height at that depth), and every
window is pushed through the cascade. Surviving windows are ranked by
(votes, margin, class id), deduplicated with greedy NMS, and the top N
candidates reported. The sparse scan is an exact restriction of the
dense scan: shared locations produce identical windows and votes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import PinholeCamera
from .cascade import CascadeModel, classify_ensemble
from .errors import ValidationError
from .evaluate import iou
from .features import compute_hogd, crop_window


@dataclass(frozen=True)
class ScanConfig:
    stride_px: int = 16
    max_range_mm: float = 750.0
    hand_size_mm: float = 244.0
    median_radius_px: int = 1
    nms_iou: float = 0.4
    top_n: int = 10
    leaf_alternates: int = 3
    scale_steps: int = 0          # extra windows at side * 1.2^k, k in [-s, s]
    scale_factor: float = 1.2
    dense: bool = False           # scan every grid point, no range prune
    # Post-NMS refinement: re-scan a small lattice around the strongest
    # kept windows and emit those windows as extra candidates, giving the
    # candidate list sub-stride localization diversity.
    refine_radius_px: int = 0
    refine_step_px: int = 4
    refine_windows: int = 2

    def __post_init__(self):
        if self.stride_px < 1:
            raise ValidationError("stride must be >= 1")
        if self.max_range_mm <= 0 or self.hand_size_mm <= 0:
            raise ValidationError("ranges and hand size must be positive")
        if self.refine_radius_px and self.refine_step_px < 1:
            raise ValidationError("refinement step must be >= 1")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "stride_px", "max_range_mm", "hand_size_mm", "median_radius_px",
            "nms_iou", "top_n", "leaf_alternates", "scale_steps",
            "scale_factor", "dense", "refine_radius_px", "refine_step_px",
            "refine_windows")}


@dataclass
class Candidate:
    box: tuple                    # (x, y, w, h) px
    class_id: int
    votes: int
    margin: float
    keypoints: np.ndarray         # (20, 2) px

    def rank_key(self):
        return (-self.votes, -self.margin, self.class_id)

    def to_dict(self) -> dict:
        return {
            "box": [float(v) for v in self.box],
            "class_id": int(self.class_id),
            "votes": int(self.votes),
            "margin": float(self.margin),
            "keypoints": [[float(a), float(b)] for a, b in self.keypoints],
        }


@dataclass
class ScanStats:
    grid_points: int = 0
    pruned_fraction: float = 0.0
    windows_evaluated: int = 0
    nodes_visited: int = 0


def median_filter(depth: np.ndarray, radius: int) -> np.ndarray:
    """Median over the (2r+1)^2 neighborhood, invalid (0) samples
    excluded; a pixel stays invalid when its whole neighborhood is."""
    if radius < 0:
        raise ValidationError("radius must be >= 0")
    if radius == 0:
        return np.asarray(depth, dtype=float).copy()
    arr = np.asarray(depth, dtype=float).copy()
    arr[arr <= 0] = np.nan
    k = 2 * radius + 1
    padded = np.pad(arr, radius, mode="constant", constant_values=np.nan)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k))
    with np.errstate(all="ignore"):
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN slices
            med = np.nanmedian(windows, axis=(-2, -1))
    return np.nan_to_num(med, nan=0.0)


def scale_map(depth: np.ndarray, camera: PinholeCamera, hand_size_mm: float,
              max_range_mm: float | None = None) -> np.ndarray:
    """Expected window side per pixel: side = s * fx / d.

    The side shrinks with distance (pinhole geometry). 0 where depth is
    invalid or beyond max_range_mm.
    """
    if hand_size_mm <= 0:
        raise ValidationError("hand size must be positive")
    d = np.asarray(depth, dtype=float)
    out = np.zeros_like(d)
    ok = d > 0
    if max_range_mm is not None:
        ok = ok & (d <= max_range_mm)
    out[ok] = hand_size_mm * camera.fx / d[ok]
    return out


def valid_grid(depth: np.ndarray, cfg: ScanConfig):
    """Stride-spaced grid locations with valid in-range depth.

    Returns (points (P, 2) int array of (x, y), pruned_fraction).
    """
    h, w = depth.shape
    xs = np.arange(cfg.stride_px // 2, w, cfg.stride_px)
    ys = np.arange(cfg.stride_px // 2, h, cfg.stride_px)
    gx, gy = np.meshgrid(xs, ys)
    gx, gy = gx.ravel(), gy.ravel()
    d = depth[gy, gx]
    keep = (d > 0) & (d <= cfg.max_range_mm)
    pts = np.column_stack([gx[keep], gy[keep]])
    pruned = 1.0 - keep.mean() if len(gx) else 0.0
    return pts, float(pruned)


def _grid_all(depth: np.ndarray, cfg: ScanConfig) -> np.ndarray:
    h, w = depth.shape
    xs = np.arange(cfg.stride_px // 2, w, cfg.stride_px)
    ys = np.arange(cfg.stride_px // 2, h, cfg.stride_px)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def nms(candidates: list, iou_threshold: float) -> list:
    """Greedy non-maximum suppression by rank key; kept boxes are
    pairwise at or below the IoU threshold."""
    pending = sorted(candidates, key=Candidate.rank_key)
    kept = []
    for cand in pending:
        if all(iou(cand.box, k.box) <= iou_threshold for k in kept):
            kept.append(cand)
    return kept


def denormalize_keypoints(template: np.ndarray, box) -> np.ndarray:
    """Map a canonical (40,) label into a box: scale by max(w, h), offset
    by the box center."""
    x, y, w, h = box
    pts = np.asarray(template, dtype=float).reshape(-1, 2) * max(w, h)
    pts[:, 0] += x + w / 2.0
    pts[:, 1] += y + h / 2.0
    return pts


@dataclass
class WindowResult:
    x: int
    y: int
    side: float
    votes: np.ndarray
    margins: np.ndarray


def scan_windows(frame: np.ndarray, model: CascadeModel, camera: PinholeCamera,
                 cfg: ScanConfig):
    """Classify every scan window of a frame.

    Returns (results, stats): one WindowResult per evaluated window.
    Windows whose box pokes outside the image are skipped, matching the
    training-time crops. In dense mode no range pruning happens and
    out-of-range locations fall back to the window side a hand at the
    range cap would have.
    """
    stats = ScanStats()
    filtered = median_filter(frame, cfg.median_radius_px)
    smap = scale_map(filtered, camera, cfg.hand_size_mm)

    if cfg.dense:
        pts = _grid_all(filtered, cfg)
        stats.grid_points = len(pts)
        d = filtered[pts[:, 1], pts[:, 0]]
        in_range = (d > 0) & (d <= cfg.max_range_mm)
        stats.pruned_fraction = float(1.0 - in_range.mean()) if len(pts) else 0.0
        fallback_side = cfg.hand_size_mm * camera.fx / cfg.max_range_mm
        sides = np.where(in_range, smap[pts[:, 1], pts[:, 0]], fallback_side)
    else:
        pts, pruned = valid_grid(filtered, cfg)
        stats.grid_points = len(pts)
        stats.pruned_fraction = pruned
        sides = smap[pts[:, 1], pts[:, 0]]
    # Training boxes key off the keypoint centroid depth; the scale map
    # keys off the near surface. The model's calibrated ratio reconciles
    # the two so crops match the training-time window scale.
    sides = sides * model.box_scale

    results = []
    for (x, y), base_side in zip(pts, sides):
        for k in range(-cfg.scale_steps, cfg.scale_steps + 1):
            side = float(base_side) * (cfg.scale_factor ** k)
            res = _evaluate_window(filtered, int(x), int(y), side, model,
                                   camera, stats)
            if res is not None:
                results.append(res)
    return results, stats


def _evaluate_window(filtered, x: int, y: int, side: float,
                     model: CascadeModel, camera: PinholeCamera,
                     stats: ScanStats):
    """Crop, describe, and classify one window; None when the box pokes
    outside the image."""
    if (x - side / 2.0 < 0 or y - side / 2.0 < 0
            or x + side / 2.0 > camera.width or y + side / 2.0 > camera.height):
        return None
    fcfg = model.feature_config
    crop = crop_window(filtered, (x, y), side, fcfg)
    center_depth = float(filtered[y, x])
    desc = compute_hogd(crop, fcfg,
                        center_depth=center_depth if center_depth > 0 else None)
    vote = classify_ensemble(desc, model)
    stats.windows_evaluated += 1
    stats.nodes_visited += vote.nodes_visited
    return WindowResult(x=x, y=y, side=side, votes=vote.votes,
                        margins=vote.margins)


def _window_candidates(res: WindowResult, model: CascadeModel,
                       n_alternates: int) -> list:
    hit = np.where(res.votes > 0)[0]
    if hit.size == 0:
        return []
    ranked = sorted(hit, key=lambda c: (-int(res.votes[c]),
                                        -float(res.margins[c]), int(c)))
    box = (res.x - res.side / 2.0, res.y - res.side / 2.0, res.side, res.side)
    return [
        Candidate(box=box, class_id=int(cls), votes=int(res.votes[cls]),
                  margin=float(res.margins[cls]),
                  keypoints=denormalize_keypoints(model.leaf_templates[cls], box))
        for cls in ranked[:max(1, n_alternates)]
    ]


def detect_topn(frame: np.ndarray, model: CascadeModel, camera: PinholeCamera,
                cfg: ScanConfig, return_stats: bool = False):
    """Run the scanning-window cascade over one depth frame.

    Per window the best few leaves become candidates; greedy NMS keeps
    one window per location neighborhood; kept windows contribute up to
    leaf_alternates candidates each, plus (optionally) a refinement
    lattice of sub-stride windows around the strongest kept locations.
    The global top N by (votes, margin, class id) come back ranked; with
    alternates or refinement enabled they may share or overlap boxes.
    """
    results, stats = scan_windows(frame, model, camera, cfg)
    filtered = median_filter(frame, cfg.median_radius_px)

    window_best: list = []
    alternates: list = []
    for res in results:
        cands = _window_candidates(res, model, cfg.leaf_alternates)
        if not cands:
            continue
        window_best.append(cands[0])
        alternates.append(cands)

    kept = nms(window_best, cfg.nms_iou)
    kept_ids = {id(c) for c in kept}
    merged = [c for group in alternates if id(group[0]) in kept_ids for c in group]

    if cfg.refine_radius_px > 0 and kept:
        smap = scale_map(filtered, camera, cfg.hand_size_mm)
        offs = np.arange(-cfg.refine_radius_px, cfg.refine_radius_px + 1,
                         cfg.refine_step_px)
        for rep in kept[:cfg.refine_windows]:
            cx = int(round(rep.box[0] + rep.box[2] / 2.0))
            cy = int(round(rep.box[1] + rep.box[3] / 2.0))
            for dy in offs:
                for dx in offs:
                    if dx == 0 and dy == 0:
                        continue
                    x, y = cx + int(dx), cy + int(dy)
                    if not (0 <= x < camera.width and 0 <= y < camera.height):
                        continue
                    d = filtered[y, x]
                    if d <= 0 or d > cfg.max_range_mm:
                        continue
                    side = float(smap[y, x]) * model.box_scale
                    res = _evaluate_window(filtered, x, y, side, model,
                                           camera, stats)
                    if res is not None:
                        merged.extend(_window_candidates(
                            res, model, cfg.leaf_alternates))

    merged.sort(key=Candidate.rank_key)
    out = merged[:cfg.top_n]
    if return_stats:
        return out, stats
    return out


def write_detections_jsonl(path, per_frame: dict) -> None:
    """One JSON object per line: {"frame": id, "candidates": [...]}."""
    with open(path, "w", encoding="utf-8") as f:
        for frame_id, cands in per_frame.items():
            doc = {"frame": frame_id,
                   "candidates": [c.to_dict() if isinstance(c, Candidate) else c
                                  for c in cands]}
            f.write(json.dumps(doc, separators=(",", ":")) + "\n")


def read_detections_jsonl(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        out[doc["frame"]] = doc["candidates"]
    return out
