"""Detection and pose metrics: box overlap, keypoint RMSE,
viewpoint-consistent detection, fingertip accuracy, candidate-count
curves, and precision/recall over vote thresholds.

Boxes are (x, y, w, h) in pixels. Keypoint sets are the 20 scored
points; RMSE includes occluded points (ground truth is always known for
synthetic data), fingertip accuracy scores only visible tips.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .hand import FINGERTIP_SCORED_INDICES


def iou(box_a, box_b) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = (float(v) for v in box_a)
    bx, by, bw, bh = (float(v) for v in box_b)
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise ValidationError("boxes must have positive area")
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    return inter / (aw * ah + bw * bh - inter)


def rmse2d(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Root-mean-square Euclidean error over the 20 scored keypoints."""
    p = np.asarray(predicted, dtype=float)
    g = np.asarray(truth, dtype=float)
    if p.shape != (20, 2) or g.shape != (20, 2):
        raise ValidationError(f"expected (20, 2) keypoints, got {p.shape} vs {g.shape}")
    return float(np.sqrt(np.mean(np.sum((p - g) ** 2, axis=1))))


def viewpoint_consistent(predicted: np.ndarray, truth: np.ndarray,
                         threshold_px: float = 10.0) -> bool:
    """RMSE at or below the coarse pixel threshold."""
    return rmse2d(predicted, truth) <= threshold_px


def fingertip_accuracy(predicted: np.ndarray, truth: np.ndarray,
                       visibility: np.ndarray, radius_px: float = 10.0):
    """Fraction of visible ground-truth fingertips matched by a predicted
    fingertip within the radius, greedily nearest-first.

    Returns None when no fingertip is visible (frame excluded from
    averages).
    """
    p = np.asarray(predicted, dtype=float)[list(FINGERTIP_SCORED_INDICES)]
    g = np.asarray(truth, dtype=float)[list(FINGERTIP_SCORED_INDICES)]
    vis = np.asarray(visibility, dtype=bool)[list(FINGERTIP_SCORED_INDICES)]
    gt_idx = np.where(vis)[0]
    if gt_idx.size == 0:
        return None
    dists = np.linalg.norm(g[gt_idx][:, None, :] - p[None, :, :], axis=2)
    matched = 0
    used_gt = set()
    used_pred = set()
    order = np.dstack(np.unravel_index(np.argsort(dists, axis=None), dists.shape))[0]
    for gi, pi in order:
        if gi in used_gt or pi in used_pred:
            continue
        if dists[gi, pi] <= radius_px:
            matched += 1
        used_gt.add(int(gi))
        used_pred.add(int(pi))
    return matched / gt_idx.size


@dataclass
class GroundTruth:
    frame_id: str
    box: tuple
    keypoints: np.ndarray         # (20, 2) scored points
    visibility: np.ndarray        # (20,) bool for the scored points


@dataclass
class MetricsTable:
    """Plot-ready rows of (metric, param, value) plus run metadata."""

    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, metric: str, param, value) -> None:
        self.rows.append((metric, param, value))

    def value(self, metric: str, param):
        for m, p, v in self.rows:
            if m == metric and p == param:
                return v
        raise KeyError(f"no row ({metric}, {param})")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["metric", "param", "value"])
            for metric, param, value in self.rows:
                writer.writerow([metric, param, repr(float(value))])

    def write_metadata(self, path) -> None:
        Path(path).write_text(json.dumps(self.metadata, indent=2, sort_keys=True)
                              + "\n", encoding="utf-8")


def _candidate_keypoints(cand: dict) -> np.ndarray:
    return np.asarray(cand["keypoints"], dtype=float)


def evaluate_detections(ground_truths: list, detections: dict,
                        n_list=(1, 5, 10), vp_threshold_px: float = 10.0,
                        iou_threshold: float = 0.5,
                        fingertip_radius_px: float = 10.0) -> MetricsTable:
    """Score ranked candidate lists against per-frame ground truth.

    detections maps frame_id to a ranked candidate list (dicts with box,
    class_id, votes, margin, keypoints). For each N: detection rate
    (best-overlap candidate among the top N reaches the IoU threshold),
    viewpoint-consistent rate, conditional RMSE over viewpoint-consistent
    frames, fingertip accuracy of the minimum-RMSE candidate. Frames
    missing from detections are excluded and listed in the metadata.
    """
    table = MetricsTable()
    missing = [gt.frame_id for gt in ground_truths if gt.frame_id not in detections]
    scored = [gt for gt in ground_truths if gt.frame_id in detections]
    if missing:
        table.metadata["missing_frames"] = missing
    table.metadata["n_frames"] = len(scored)
    table.metadata["vp_threshold_px"] = vp_threshold_px
    table.metadata["iou_threshold"] = iou_threshold
    if not scored:
        raise ValidationError("no evaluable frames: detections cover none of the ground truth")

    for n in n_list:
        det_hits, vp_hits, cond, tip_rates = [], [], [], []
        for gt in scored:
            cands = detections[gt.frame_id][:n]
            hit = any(iou(c["box"], gt.box) >= iou_threshold for c in cands)
            det_hits.append(hit)
            if cands:
                errs = [rmse2d(_candidate_keypoints(c), gt.keypoints) for c in cands]
                best = int(np.argmin(errs))
                vp = errs[best] <= vp_threshold_px
                vp_hits.append(vp)
                if vp:
                    cond.append(errs[best])
                rate = fingertip_accuracy(_candidate_keypoints(cands[best]),
                                          gt.keypoints, gt.visibility,
                                          fingertip_radius_px)
                if rate is not None:
                    tip_rates.append(rate)
            else:
                vp_hits.append(False)
                if np.any(gt.visibility[list(FINGERTIP_SCORED_INDICES)]):
                    tip_rates.append(0.0)
        table.add("detection_rate", n, float(np.mean(det_hits)))
        table.add("vp_rate", n, float(np.mean(vp_hits)))
        if cond:
            table.add("cond_rmse_px", n, float(np.mean(cond)))
        else:
            table.metadata.setdefault("empty_conditional_rmse", []).append(n)
        if tip_rates:
            table.add("fingertip_acc", n, float(np.mean(tip_rates)))

    _add_pr_curve(table, scored, detections, iou_threshold)
    return table


def _add_pr_curve(table: MetricsTable, ground_truths, detections,
                  iou_threshold: float) -> None:
    """Precision/recall over vote-count thresholds: per frame the single
    ground truth may be claimed by the highest-ranked overlapping
    candidate; every other candidate is a false positive at its score."""
    records = []  # (votes, is_tp)
    for gt in ground_truths:
        claimed = False
        for cand in detections[gt.frame_id]:
            ok = not claimed and iou(cand["box"], gt.box) >= iou_threshold
            records.append((int(cand["votes"]), ok))
            claimed = claimed or ok
    if not records:
        return
    records.sort(key=lambda r: -r[0])
    votes = np.array([r[0] for r in records])
    tps = np.cumsum([1 if r[1] else 0 for r in records])
    fps = np.cumsum([0 if r[1] else 1 for r in records])
    n_gt = len(ground_truths)
    # One PR point per distinct vote threshold (all candidates with
    # votes >= threshold are accepted).
    for thr in np.unique(votes)[::-1]:
        k = int(np.searchsorted(-votes, -thr, side="right")) - 1
        precision = tps[k] / (tps[k] + fps[k])
        recall = tps[k] / n_gt
        table.add("pr_precision", int(thr), float(precision))
        table.add("pr_recall", int(thr), float(recall))
