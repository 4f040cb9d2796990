"""Command-line entry points.

Subcommands: synth, quantize, train, detect, eval, bench. Every command
is a pure function of (inputs on disk, config, seed); re-runs with the
same seed produce byte-identical artifacts (benchmark timings excepted).
Options may come from a JSON config file (--config); explicit flags
override file values, unknown config keys are rejected. Exit codes:
0 success, 1 validation error, 2 I/O error, 3 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from .bench import bench_implicit_vs_explicit, bench_sparse_vs_dense
from .camera import PinholeCamera
from .cascade import load_model, save_model
from .detect import (ScanConfig, detect_topn, read_detections_jsonl,
                     write_detections_jsonl)
from .errors import ValidationError
from .evaluate import GroundTruth, evaluate_detections
from .features import FeatureConfig, compute_hogd, crop_window
from .grasps import GraspSpec, default_grasps
from .pgm import read_pgm16
from .pose_tree import build_hierarchy, kmeans_quantize
from .render import BackgroundModel
from .synth import (SynthConfig, ViewpointPrior, canonical_label,
                    default_sigma, generate_dataset, load_manifest)
from .training import train_from_manifest
from .detect import median_filter, valid_grid, scale_map

VERBOSE = True


def _log(msg: str) -> None:
    if VERBOSE:
        print(msg, file=sys.stderr)


def _sha256(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags; unknown file keys rejected."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise ValidationError("config file must hold a JSON object")
        unknown = set(doc) - set(defaults)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(doc)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _grasp_corpus(which: str) -> list:
    if which == "default":
        return default_grasps(with_objects=True)
    if which == "bare":
        return default_grasps(with_objects=False)
    if which == "both":
        both = []
        for g in default_grasps(with_objects=True):
            both.append(g)
        for g in default_grasps(with_objects=False):
            both.append(GraspSpec(name=g.name + "_bare", base_pose=g.base_pose,
                                  primitive=None,
                                  sigma_overrides=g.sigma_overrides))
        return both
    raise ValidationError(f"unknown grasp corpus {which!r}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

SYNTH_DEFAULTS = {
    "count": 100, "seed": 0, "grasps": "default", "stratified": True,
    "bg_depth": 900.0, "bg_noise": 3.0, "bg_invalid": 0.02,
    "negatives_per_image": 8, "background_scenes": 8,
    "distance_min": 250.0, "distance_max": 700.0,
    "sigma_translation": 30.0, "sigma_rotation": 0.15, "sigma_fingers": 0.05,
}


def cmd_synth(args) -> int:
    cfg = _merge_config(args, SYNTH_DEFAULTS)
    out = Path(args.out)
    if not out.is_dir():
        raise OSError(f"output directory {out} does not exist")
    sigma = default_sigma()
    sigma[0:3] = cfg["sigma_translation"]
    sigma[3:6] = cfg["sigma_rotation"]
    sigma[6:] = cfg["sigma_fingers"]
    synth_cfg = SynthConfig(
        n=int(cfg["count"]), seed=int(cfg["seed"]),
        grasps=_grasp_corpus(cfg["grasps"]),
        sigma=sigma,
        viewpoint=ViewpointPrior(distance_mm=(cfg["distance_min"],
                                              cfg["distance_max"])),
        background=BackgroundModel(depth_mm=cfg["bg_depth"],
                                   noise_sigma=cfg["bg_noise"],
                                   invalid_fraction=cfg["bg_invalid"]),
        stratified=bool(cfg["stratified"]),
        negatives_per_image=int(cfg["negatives_per_image"]),
        background_scenes=int(cfg["background_scenes"]),
    )
    manifest = generate_dataset(synth_cfg, out)
    _log(f"wrote {len(manifest.samples)} samples, "
         f"{len(manifest.negatives)} negative windows, "
         f"acceptance rate {manifest.acceptance_rate:.3f} -> {out / 'manifest.json'}")
    return 0


QUANTIZE_DEFAULTS = {"k": 16, "levels": 4, "seed": 0, "kmeans_iters": 100}


def cmd_quantize(args) -> int:
    cfg = _merge_config(args, QUANTIZE_DEFAULTS)
    manifest = load_manifest(args.manifest)
    labels = np.stack([canonical_label(s.keypoints2d, s.box)
                       for s in manifest.samples])
    km = kmeans_quantize(labels, int(cfg["k"]), seed=int(cfg["seed"]),
                         iters=int(cfg["kmeans_iters"]))
    tree = build_hierarchy(km.classes, int(cfg["levels"]))
    doc = {
        "config": cfg,
        "manifest_sha256": _sha256(args.manifest),
        "assignments": [int(a) for a in km.assignments],
        "tree": tree.to_dict(),
    }
    Path(args.out).write_text(json.dumps(doc, separators=(",", ":")) + "\n",
                              encoding="utf-8")
    _log(f"quantized {len(labels)} samples into {cfg['k']} classes -> {args.out}")
    return 0


TRAIN_DEFAULTS = {
    "k": 16, "levels": 4, "m": 3, "lam": 1e-4, "epochs": 20, "seed": 0,
    "recall_floor": 0.98, "median_radius": 1,
    "window": 60, "cell": 12, "bins": 16, "depth_clip": 250.0,
}


def cmd_train(args) -> int:
    cfg = _merge_config(args, TRAIN_DEFAULTS)
    manifest = load_manifest(args.manifest)
    root = Path(args.manifest).parent
    feature_cfg = FeatureConfig(window_px=int(cfg["window"]),
                                cell_px=int(cfg["cell"]),
                                orientation_bins=int(cfg["bins"]),
                                depth_clip_mm=float(cfg["depth_clip"]))
    result = train_from_manifest(
        manifest, root, k=int(cfg["k"]), levels=int(cfg["levels"]),
        m=int(cfg["m"]), feature_cfg=feature_cfg, lam=float(cfg["lam"]),
        epochs=int(cfg["epochs"]), seed=int(cfg["seed"]),
        recall_floor=float(cfg["recall_floor"]),
        median_radius=int(cfg["median_radius"]))
    result.model.metadata["cli_config"] = cfg
    result.model.metadata["manifest_sha256"] = _sha256(args.manifest)
    save_model(result.model, args.out)
    for row in result.record.report:
        _log("node {node:3d} level {level}  pos {n_pos:5d}  neg {n_neg:5d}  "
             "pass(pos) {p}  pass(neg) {q}{d}".format(
                 node=row["node"], level=row["level"], n_pos=row["n_pos"],
                 n_neg=row["n_neg"],
                 p=f"{row['pos_pass_rate']:.3f}" if row["pos_pass_rate"] is not None else "n/a",
                 q=f"{row['neg_pass_rate']:.3f}" if row["neg_pass_rate"] is not None else "n/a",
                 d="  [degenerate]" if row["degenerate"] else ""))
    _log(f"model with {result.model.tree.n_classes} leaves -> {args.out}")
    return 0


DETECT_DEFAULTS = {
    "topn": 10, "stride": 16, "max_range": 750.0, "median_radius": 1,
    "nms_iou": 0.4, "alternates": 3, "scale_steps": 0, "dense": False,
    "refine_radius": 0, "refine_step": 4, "refine_windows": 2,
}


def cmd_detect(args) -> int:
    cfg = _merge_config(args, DETECT_DEFAULTS)
    model = load_model(args.model)
    frames_dir = Path(args.frames)
    manifest = load_manifest(frames_dir / "manifest.json")
    camera = manifest.camera
    scan = ScanConfig(stride_px=int(cfg["stride"]),
                      max_range_mm=float(cfg["max_range"]),
                      hand_size_mm=model.hand_size_mm,
                      median_radius_px=int(cfg["median_radius"]),
                      nms_iou=float(cfg["nms_iou"]), top_n=int(cfg["topn"]),
                      leaf_alternates=int(cfg["alternates"]),
                      scale_steps=int(cfg["scale_steps"]),
                      dense=bool(cfg["dense"]),
                      refine_radius_px=int(cfg["refine_radius"]),
                      refine_step_px=int(cfg["refine_step"]),
                      refine_windows=int(cfg["refine_windows"]))
    per_frame = {}
    skipped = []
    for sample in manifest.samples:
        path = frames_dir / sample.depth_file
        try:
            frame = read_pgm16(path)
        except (ValidationError, OSError) as e:
            _log(f"warning: skipping {path}: {e}")
            skipped.append(sample.depth_file)
            continue
        per_frame[sample.depth_file] = detect_topn(frame, model, camera, scan)
    write_detections_jsonl(args.out, per_frame)
    meta = {"config": cfg, "model_sha256": _sha256(args.model),
            "frames": len(per_frame), "skipped": skipped}
    Path(str(args.out) + ".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _log(f"detections for {len(per_frame)} frames -> {args.out}")
    return 0


EVAL_DEFAULTS = {
    "n_list": "1,5,10", "vp_threshold": 10.0, "iou": 0.5,
    "fingertip_radius": 10.0,
}


def cmd_eval(args) -> int:
    cfg = _merge_config(args, EVAL_DEFAULTS)
    manifest = load_manifest(args.manifest)
    detections = read_detections_jsonl(args.detections)
    gts = [GroundTruth(frame_id=s.depth_file, box=s.box,
                       keypoints=s.keypoints2d, visibility=s.visibility[1:])
           for s in manifest.samples]
    n_list = [int(v) for v in str(cfg["n_list"]).split(",") if v]
    table = evaluate_detections(gts, detections, n_list=n_list,
                                vp_threshold_px=float(cfg["vp_threshold"]),
                                iou_threshold=float(cfg["iou"]),
                                fingertip_radius_px=float(cfg["fingertip_radius"]))
    table.metadata["config"] = cfg
    table.metadata["manifest_sha256"] = _sha256(args.manifest)
    table.metadata["detections_sha256"] = _sha256(args.detections)
    table.write_csv(args.out)
    table.write_metadata(str(args.out) + ".meta.json")
    for metric, param, value in table.rows:
        if not str(metric).startswith("pr_"):
            _log(f"{metric:18s} N={param:<6} {value:.4f}")
    _log(f"metrics -> {args.out}")
    return 0


BENCH_DEFAULTS = {
    "windows": 60, "instantiations": 100, "repeats": 3, "frame_count": 3,
    "stride": 16, "dense_stride": 4, "seed": 0, "max_range": 750.0,
    "median_radius": 1,
}


def cmd_bench(args) -> int:
    cfg = _merge_config(args, BENCH_DEFAULTS)
    model = load_model(args.model)
    frames_dir = Path(args.frames)
    manifest = load_manifest(frames_dir / "manifest.json")
    camera = manifest.camera
    n_frames = int(cfg["frame_count"])
    if len(manifest.samples) < n_frames:
        raise ValidationError(
            f"need {n_frames} frames, manifest has {len(manifest.samples)}")
    frames = [read_pgm16(frames_dir / s.depth_file)
              for s in manifest.samples[:n_frames]]

    # Descriptor windows for the classifier benchmark: valid in-range
    # grid windows from the benchmark frames.
    fcfg = model.feature_config
    scan = ScanConfig(stride_px=int(cfg["stride"]),
                      max_range_mm=float(cfg["max_range"]),
                      hand_size_mm=model.hand_size_mm,
                      median_radius_px=int(cfg["median_radius"]))
    descriptors = []
    for frame in frames:
        filtered = median_filter(frame, scan.median_radius_px)
        smap = scale_map(filtered, camera, scan.hand_size_mm)
        pts, _ = valid_grid(filtered, scan)
        for x, y in pts:
            side = float(smap[y, x])
            if (x - side / 2 < 0 or y - side / 2 < 0
                    or x + side / 2 > camera.width or y + side / 2 > camera.height):
                continue
            crop = crop_window(filtered, (x, y), side, fcfg)
            descriptors.append(compute_hogd(crop, fcfg,
                                            center_depth=float(filtered[y, x])))
            if len(descriptors) >= int(cfg["windows"]):
                break
        if len(descriptors) >= int(cfg["windows"]):
            break
    if not descriptors:
        raise ValidationError("benchmark frames yielded no valid windows")

    report = {
        "config": cfg,
        "model_sha256": _sha256(args.model),
        "implicit_vs_explicit": bench_implicit_vs_explicit(
            model, descriptors, n_instantiations=int(cfg["instantiations"]),
            repeats=int(cfg["repeats"]), seed=int(cfg["seed"])),
        "sparse_vs_dense": bench_sparse_vs_dense(
            model, frames, camera, scan,
            dense_stride_px=int(cfg["dense_stride"]),
            repeats=max(1, int(cfg["repeats"]) - 1)),
    }
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")
    ive = report["implicit_vs_explicit"]
    svd = report["sparse_vs_dense"]
    _log(f"implicit vs explicit: {ive['measured_speedup']:.2f}x "
         f"(reference {ive['reference_speedup']}x)")
    _log(f"sparse vs dense: {svd['measured_speedup']:.2f}x "
         f"(reference {svd['reference_speedup']}x), "
         f"window ratio {svd['window_ratio']:.2f}")
    _log(f"report -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_options(p: argparse.ArgumentParser, defaults: dict) -> None:
    for key, value in defaults.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            p.add_argument(flag, action=argparse.BooleanOptionalAction,
                           default=None)
        elif isinstance(value, int):
            p.add_argument(flag, type=int, default=None)
        elif isinstance(value, float):
            p.add_argument(flag, type=float, default=None)
        else:
            p.add_argument(flag, type=str, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="egohand",
        description="Egocentric hand-pose detection on depth images")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic depth dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    _add_options(p, SYNTH_DEFAULTS)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("quantize", help="quantize pose labels and build the hierarchy")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    _add_options(p, QUANTIZE_DEFAULTS)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("train", help="train a cascade model from a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    _add_options(p, TRAIN_DEFAULTS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="run detection over dataset frames")
    p.add_argument("--model", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    _add_options(p, DETECT_DEFAULTS)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    _add_options(p, EVAL_DEFAULTS)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="benchmark classification and scanning")
    p.add_argument("--model", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    _add_options(p, BENCH_DEFAULTS)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    global VERBOSE
    import os
    VERBOSE = os.environ.get("EGOHAND_VERBOSE", "1") != "0"
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
