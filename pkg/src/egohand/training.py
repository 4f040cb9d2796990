"""Dataset-to-model training pipeline.

Loads a rendered dataset, extracts descriptors for the ground-truth
windows and the harvested negatives, quantizes the canonical labels into
K pose classes, builds the L-level hierarchy, and runs sequential
cascade training. Windows are cropped from the median-filtered depth
exactly as the detector will crop them at scan time.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cascade import CascadeModel, TrainingRecord, train_sequential
from .detect import median_filter
from .errors import ValidationError
from .features import FeatureConfig, compute_hogd, crop_window
from .pgm import read_pgm16
from .pose_tree import build_hierarchy, kmeans_quantize
from .synth import DatasetManifest, canonical_label


@dataclass
class TrainingWindows:
    features: np.ndarray          # (N, D)
    labels: np.ndarray            # (P, 40) canonical labels of positives
    positive: np.ndarray          # (N,) bool
    sample_index: np.ndarray      # (N,) source sample, -1 for negatives
    box_scale: float = 1.0        # gt box side / raw scale-map side


def extract_windows(manifest: DatasetManifest, root,
                    feature_cfg: FeatureConfig,
                    median_radius: int = 1,
                    offset_negatives: int = 3,
                    offset_range: tuple = (0.12, 0.30),
                    seed: int = 0) -> TrainingWindows:
    """Descriptors for every ground-truth box and harvested negative.

    offset_negatives adds hard negatives per sample: the ground-truth
    window displaced by a random fraction of its side (offset_range).
    Without them every window within a stride of the hand scores like a
    centered one and the vote landscape has no peak to rank by.
    """
    root = Path(root)
    feats = []
    labels = []
    positive = []
    sample_index = []
    filtered_cache: dict = {}
    rng = np.random.default_rng(seed)

    def filtered_depth(name: str) -> np.ndarray:
        if name not in filtered_cache:
            filtered_cache[name] = median_filter(read_pgm16(root / name),
                                                 median_radius)
        return filtered_cache[name]

    scale_ratios = []
    for i, sample in enumerate(manifest.samples):
        depth = filtered_depth(sample.depth_file)
        x, y, w, h = sample.box
        center = (x + w / 2.0, y + h / 2.0)
        crop = crop_window(depth, center, max(w, h), feature_cfg)
        center_depth = float(np.mean(sample.keypoints3d[:, 2]))
        feats.append(compute_hogd(crop, feature_cfg, center_depth=center_depth))
        labels.append(canonical_label(sample.keypoints2d, sample.box))
        positive.append(True)
        sample_index.append(i)
        surf = float(depth[int(round(center[1])), int(round(center[0]))])
        if surf > 0:
            raw_side = manifest.hand_size_mm * manifest.camera.fx / surf
            scale_ratios.append(max(w, h) / raw_side)
        side = max(w, h)
        for _ in range(offset_negatives):
            frac = rng.uniform(*offset_range)
            ang = rng.uniform(0.0, 2.0 * np.pi)
            ox = center[0] + frac * side * np.cos(ang)
            oy = center[1] + frac * side * np.sin(ang)
            if (ox - side / 2 < 0 or oy - side / 2 < 0
                    or ox + side / 2 > depth.shape[1]
                    or oy + side / 2 > depth.shape[0]):
                continue
            ocrop = crop_window(depth, (ox, oy), side, feature_cfg)
            feats.append(compute_hogd(ocrop, feature_cfg,
                                      center_depth=center_depth))
            positive.append(False)
            sample_index.append(-1)

    for neg in manifest.negatives:
        depth = filtered_depth(neg["file"])
        x, y, w, h = neg["box"]
        center = (x + w / 2.0, y + h / 2.0)
        crop = crop_window(depth, center, max(w, h), feature_cfg)
        cd = float(depth[int(round(center[1])), int(round(center[0]))])
        feats.append(compute_hogd(crop, feature_cfg,
                                  center_depth=cd if cd > 0 else None))
        positive.append(False)
        sample_index.append(-1)

    if not feats:
        raise ValidationError("dataset produced no training windows")
    return TrainingWindows(features=np.stack(feats),
                           labels=np.stack(labels) if labels else np.zeros((0, 40)),
                           positive=np.array(positive, dtype=bool),
                           sample_index=np.array(sample_index),
                           box_scale=float(np.median(scale_ratios)) if scale_ratios else 1.0)


@dataclass
class TrainResult:
    model: CascadeModel
    record: TrainingRecord
    assignments: np.ndarray       # leaf class per manifest sample
    windows: TrainingWindows
    leaf_class: np.ndarray        # per window, -1 for negatives


def train_from_manifest(manifest: DatasetManifest, root, k: int = 16,
                        levels: int = 4, m: int = 3,
                        feature_cfg: FeatureConfig | None = None,
                        lam: float = 1e-4, epochs: int = 20, seed: int = 0,
                        recall_floor: float = 0.98,
                        median_radius: int = 1,
                        kmeans_iters: int = 100) -> TrainResult:
    """Full training pass over a rendered dataset."""
    if k > len(manifest.samples):
        raise ValidationError(
            f"k={k} exceeds the {len(manifest.samples)} dataset samples")
    feature_cfg = feature_cfg or FeatureConfig()
    windows = extract_windows(manifest, root, feature_cfg, median_radius)

    km = kmeans_quantize(windows.labels, k, seed=seed, iters=kmeans_iters)
    tree = build_hierarchy(km.classes, levels)

    leaf_class = np.full(len(windows.features), -1)
    leaf_class[windows.positive] = km.assignments
    ensembles, record = train_sequential(
        tree, windows.features, leaf_class, feature_cfg, m=m, lam=lam,
        epochs=epochs, seed=seed, recall_floor=recall_floor)

    templates = np.stack([c.centroid for c in km.classes])
    model = CascadeModel(
        tree=tree, ensembles=ensembles, feature_config=feature_cfg,
        leaf_templates=templates, hand_size_mm=manifest.hand_size_mm,
        box_scale=windows.box_scale,
        metadata={
            "k": k, "levels": levels, "m": m, "lam": lam, "epochs": epochs,
            "seed": seed, "recall_floor": recall_floor,
            "median_radius_px": median_radius,
            "n_positive_windows": int(windows.positive.sum()),
            "n_negative_windows": int((~windows.positive).sum()),
            "training_report": record.report,
        })
    return TrainResult(model=model, record=record, assignments=km.assignments,
                       windows=windows, leaf_class=leaf_class)
