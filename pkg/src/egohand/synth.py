"""Synthetic egocentric dataset generation.

Base grasp poses are perturbed with per-angle Gaussian noise, placed
under an egocentric viewpoint prior, and filtered by rejection sampling
(self-intersecting poses, keypoints leaving the field of view, or a
ground-truth box that does not fit the frame are all rejected). Accepted
samples are rendered to 16-bit PGM depth images together with their
labels, and negative training windows are harvested at the same time.

Everything is reproducible from (config, seed): every sample draws from
its own pre-split RNG stream, so generation order never changes results.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import DEFAULT_CAMERA, PinholeCamera, project_points
from .detect import ScanConfig, median_filter, scale_map, valid_grid
from .errors import BehindCameraError, GenerationAborted, ValidationError
from .evaluate import iou
from .grasps import GraspSpec, default_grasps
from .hand import HandShape, N_THETA, clamp_articulation, forward_kinematics, self_intersects
from .pgm import write_pgm16
from .render import BackgroundModel, render_depth, render_shapes
from .rotations import euler_to_matrix, matrix_to_euler, rot_z

MANIFEST_VERSION = 1


def default_sigma() -> np.ndarray:
    """Default perturbation scales: 30 mm wrist translation, 0.15 rad
    wrist rotation, 0.05 rad per finger joint (fingers move less than
    the arm if the grasp is to stay recognizable)."""
    s = np.empty(N_THETA)
    s[0:3] = 30.0
    s[3:6] = 0.15
    s[6:] = 0.05
    return s


@dataclass(frozen=True)
class PerturbationConfig:
    sigma: np.ndarray = field(default_factory=default_sigma)
    seed: int = 0

    def __post_init__(self):
        sig = np.asarray(self.sigma, dtype=float)
        if sig.shape != (N_THETA,):
            raise ValidationError(f"sigma must have {N_THETA} entries")
        if np.any(sig < 0):
            raise ValidationError("sigma must be non-negative")
        object.__setattr__(self, "sigma", sig)


@dataclass(frozen=True)
class ViewpointPrior:
    """Uniform ranges for the egocentric camera placement: rear-ish
    azimuth, hands below the chest mount, limited bank."""

    azimuth_deg: tuple = (150.0, 210.0)
    elevation_deg: tuple = (-30.0, 10.0)
    bank_deg: tuple = (-30.0, 30.0)
    distance_mm: tuple = (250.0, 700.0)

    def __post_init__(self):
        for name in ("azimuth_deg", "elevation_deg", "bank_deg", "distance_mm"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValidationError(f"{name} range is empty")
        if self.distance_mm[0] <= 0:
            raise ValidationError("distance must be positive")

    def to_dict(self) -> dict:
        return {
            "azimuth_deg": list(self.azimuth_deg),
            "elevation_deg": list(self.elevation_deg),
            "bank_deg": list(self.bank_deg),
            "distance_mm": list(self.distance_mm),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ViewpointPrior":
        return cls(azimuth_deg=tuple(d["azimuth_deg"]),
                   elevation_deg=tuple(d["elevation_deg"]),
                   bank_deg=tuple(d["bank_deg"]),
                   distance_mm=tuple(d["distance_mm"]))


@dataclass(frozen=True)
class ViewpointSample:
    azimuth_deg: float
    elevation_deg: float
    bank_deg: float
    distance_mm: float
    rotation: np.ndarray          # hand frame -> camera frame
    translation: np.ndarray


def perturb_pose(base: np.ndarray, cfg: PerturbationConfig,
                 rng: np.random.Generator, shape: HandShape) -> np.ndarray:
    """Add independent N(0, sigma_i^2) noise per pose element, then clamp
    articulation into the joint limits. sigma = 0 reproduces the input."""
    base = np.asarray(base, dtype=float)
    if base.shape != (N_THETA,):
        raise ValidationError(f"pose must have {N_THETA} entries")
    noise = rng.standard_normal(N_THETA) * cfg.sigma
    return clamp_articulation(base + noise, shape)


def viewpoint_transform(azimuth_deg: float, elevation_deg: float,
                        bank_deg: float, distance_mm: float):
    """Rigid transform placing the hand in front of the camera as seen
    from (azimuth, elevation), rolled by the bank angle.

    Azimuth 180 is the rear view (camera on the wrist side); elevation
    tilts the camera toward the back (+) or palm (-) side of the hand;
    bank rotates about the optical axis.
    """
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    # Hand-to-camera direction in the hand frame. Negative elevation
    # means the hand hangs below the camera, which then looks down at
    # the back (+z) of the hand.
    u = np.array([math.cos(el) * math.sin(az),
                  math.cos(el) * math.cos(az),
                  -math.sin(el)])
    zh = np.array([0.0, 0.0, 1.0])
    h2 = zh - (zh @ u) * u
    h2 /= np.linalg.norm(h2)
    h3 = np.cross(u, h2)
    hand_basis = np.column_stack([u, h2, h3])
    # Targets: viewing direction to -z, dorsal reference to image-up (-y),
    # third axis fixed by right-handedness: (0,0,-1) x (0,-1,0) = (-1,0,0).
    cam_basis = np.column_stack([[0.0, 0.0, -1.0],
                                 [0.0, -1.0, 0.0],
                                 [-1.0, 0.0, 0.0]])
    r0 = cam_basis @ hand_basis.T
    r = rot_z(math.radians(bank_deg)) @ r0
    t = np.array([0.0, 0.0, float(distance_mm)])
    return r, t


def sample_viewpoint(prior: ViewpointPrior, rng: np.random.Generator) -> ViewpointSample:
    """Uniform draw in every prior range, returned as a rigid transform."""
    az = float(rng.uniform(*prior.azimuth_deg))
    el = float(rng.uniform(*prior.elevation_deg))
    bank = float(rng.uniform(*prior.bank_deg))
    dist = float(rng.uniform(*prior.distance_mm))
    r, t = viewpoint_transform(az, el, bank, dist)
    return ViewpointSample(azimuth_deg=az, elevation_deg=el, bank_deg=bank,
                           distance_mm=dist, rotation=r, translation=t)


def compose_global(theta: np.ndarray, view: ViewpointSample) -> np.ndarray:
    """Fold the viewpoint transform into the pose's global placement so
    forward kinematics of the stored pose yields camera-space keypoints."""
    r_pose = euler_to_matrix(theta[3], theta[4], theta[5])
    r_total = view.rotation @ r_pose
    t_total = view.rotation @ theta[0:3] + view.translation
    out = np.asarray(theta, dtype=float).copy()
    out[0:3] = t_total
    out[3:6] = matrix_to_euler(r_total)
    return out


def ground_truth_box(points3d: np.ndarray, camera: PinholeCamera,
                     hand_size_mm: float) -> tuple:
    """Canonical square box: centered on the projected hand centroid,
    side = hand size * fx / centroid depth."""
    centroid = np.asarray(points3d, dtype=float).mean(axis=0)
    if centroid[2] <= 0:
        raise BehindCameraError("hand centroid behind the camera")
    u = camera.fx * centroid[0] / centroid[2] + camera.cx
    v = camera.fy * centroid[1] / centroid[2] + camera.cy
    side = hand_size_mm * camera.fx / centroid[2]
    return (u - side / 2.0, v - side / 2.0, side, side)


def check_validity(pose: np.ndarray, shape: HandShape, camera: PinholeCamera):
    """Validity predicate for rejection sampling.

    Returns (reason, skeleton, uvz, box); reason is None for a valid
    sample. Rejection reasons: "behind", "fov", "box", "intersect".
    """
    skeleton = forward_kinematics(pose, shape)
    try:
        uvz = project_points(camera, skeleton.points)
    except BehindCameraError:
        return "behind", skeleton, None, None
    u, v = uvz[:, 0], uvz[:, 1]
    if np.any(u < 0) or np.any(u >= camera.width) or np.any(v < 0) or np.any(v >= camera.height):
        return "fov", skeleton, uvz, None
    box = ground_truth_box(skeleton.points, camera, shape.hand_size)
    x, y, w, h = box
    if x < 0 or y < 0 or x + w > camera.width or y + h > camera.height:
        return "box", skeleton, uvz, box
    if np.any(u < x) or np.any(u > x + w) or np.any(v < y) or np.any(v > y + h):
        return "box", skeleton, uvz, box
    if self_intersects(skeleton):
        return "intersect", skeleton, uvz, box
    return None, skeleton, uvz, box


@dataclass
class SampleDraft:
    grasp: GraspSpec
    pose: np.ndarray
    points3d: np.ndarray
    uvz: np.ndarray
    box: tuple


def _merged_sigma(cfg: PerturbationConfig, grasp: GraspSpec) -> PerturbationConfig:
    if not grasp.sigma_overrides:
        return cfg
    sigma = cfg.sigma.copy()
    for k, v in grasp.sigma_overrides.items():
        sigma[int(k)] = float(v)
    return PerturbationConfig(sigma=sigma, seed=cfg.seed)


def rejection_sample(grasps: list, n: int, perturb: PerturbationConfig,
                     prior: ViewpointPrior, camera: PinholeCamera,
                     shape: HandShape, seed=0, stratified: bool = True,
                     abort_rate: float = 0.01, abort_window: int = 10_000):
    """Draw exactly n valid samples.

    Each sample index owns a spawned RNG stream, so results are
    independent of evaluation order. Aborts with GenerationAborted when
    fewer than abort_rate of the last abort_window proposals were
    accepted. Returns (drafts, acceptance_rate, rejection_counts).
    """
    if n <= 0:
        raise ValidationError("n must be positive")
    if not grasps:
        raise ValidationError("need at least one grasp")
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = seq.spawn(n)

    g = len(grasps)
    if stratified:
        grasp_of = [i % g for i in range(n)]
    else:
        grasp_of = None

    drafts = []
    proposals = 0
    accepted = 0
    window_proposals = 0
    window_accepted = 0
    rejections: dict = {}
    for i in range(n):
        rng = np.random.default_rng(streams[i])
        if grasp_of is not None:
            grasp = grasps[grasp_of[i]]
        else:
            grasp = grasps[int(rng.integers(g))]
        pcfg = _merged_sigma(perturb, grasp)
        while True:
            proposals += 1
            window_proposals += 1
            theta = perturb_pose(grasp.base_pose, pcfg, rng, shape)
            view = sample_viewpoint(prior, rng)
            pose = compose_global(theta, view)
            reason, skeleton, uvz, box = check_validity(pose, shape, camera)
            if reason is None:
                accepted += 1
                window_accepted += 1
                drafts.append(SampleDraft(grasp=grasp, pose=pose,
                                          points3d=skeleton.points,
                                          uvz=uvz, box=box))
                break
            rejections[reason] = rejections.get(reason, 0) + 1
            if window_proposals >= abort_window:
                rate = window_accepted / window_proposals
                if rate < abort_rate:
                    raise GenerationAborted(
                        f"acceptance rate {rate:.4f} over the last "
                        f"{window_proposals} proposals (< {abort_rate}); "
                        f"rejections so far: {rejections}")
                window_proposals = 0
                window_accepted = 0
    return drafts, accepted / proposals, rejections


def canonical_label(keypoints2d: np.ndarray, box) -> np.ndarray:
    """Normalize 20 scored keypoints into box coordinates: origin at the
    box center, scaled so max(w, h) = 1. Returns the flattened (40,)
    label (x, y interleaved)."""
    kp = np.asarray(keypoints2d, dtype=float)
    if kp.shape != (20, 2):
        raise ValidationError(f"expected (20, 2) keypoints, got {kp.shape}")
    x, y, w, h = (float(v) for v in box)
    if w <= 0 or h <= 0:
        raise ValidationError("box must have positive area")
    scale = max(w, h)
    out = kp.copy()
    out[:, 0] = (out[:, 0] - (x + w / 2.0)) / scale
    out[:, 1] = (out[:, 1] - (y + h / 2.0)) / scale
    return out.ravel()


# ---------------------------------------------------------------------------
# Dataset assembly
# ---------------------------------------------------------------------------

@dataclass
class Sample:
    depth_file: str
    grasp: str
    pose: np.ndarray              # (26,)
    keypoints3d: np.ndarray       # (21, 3) mm
    keypoints2d: np.ndarray       # (20, 2) px, scored points
    visibility: np.ndarray        # (21,) bool
    box: tuple                    # (x, y, w, h) px
    has_object: bool
    leaf_class: int | None = None

    def to_dict(self) -> dict:
        return {
            "depth_file": self.depth_file,
            "grasp": self.grasp,
            "pose": [float(v) for v in self.pose],
            "keypoints3d": [[float(v) for v in p] for p in self.keypoints3d],
            "keypoints2d": [[float(v) for v in p] for p in self.keypoints2d],
            "visibility": [bool(v) for v in self.visibility],
            "box": [float(v) for v in self.box],
            "has_object": bool(self.has_object),
            "leaf_class": self.leaf_class,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Sample":
        return cls(depth_file=d["depth_file"], grasp=d["grasp"],
                   pose=np.array(d["pose"], dtype=float),
                   keypoints3d=np.array(d["keypoints3d"], dtype=float),
                   keypoints2d=np.array(d["keypoints2d"], dtype=float),
                   visibility=np.array(d["visibility"], dtype=bool),
                   box=tuple(d["box"]), has_object=bool(d["has_object"]),
                   leaf_class=d.get("leaf_class"))


@dataclass
class SynthConfig:
    n: int = 100
    seed: int = 0
    grasps: list = field(default_factory=default_grasps)
    sigma: np.ndarray = field(default_factory=default_sigma)
    viewpoint: ViewpointPrior = field(default_factory=ViewpointPrior)
    background: BackgroundModel = field(default_factory=lambda: BackgroundModel(
        depth_mm=900.0, noise_sigma=3.0, invalid_fraction=0.02))
    camera: PinholeCamera = DEFAULT_CAMERA
    shape: HandShape = field(default_factory=HandShape)
    stratified: bool = True
    negatives_per_image: int = 8
    background_scenes: int = 8
    background_scene_depth_mm: tuple = (350.0, 740.0)
    negative_stride_px: int = 8
    negative_iou_max: float = 0.3
    negative_max_range_mm: float = 750.0
    median_radius_px: int = 1

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "grasps": [g.to_dict() for g in self.grasps],
            "sigma": [float(v) for v in self.sigma],
            "viewpoint": self.viewpoint.to_dict(),
            "background": {
                "depth_mm": self.background.depth_mm,
                "noise_sigma": self.background.noise_sigma,
                "invalid_fraction": self.background.invalid_fraction,
            },
            "camera": self.camera.to_dict(),
            "hand_shape": self.shape.to_dict(),
            "stratified": self.stratified,
            "negatives_per_image": self.negatives_per_image,
            "background_scenes": self.background_scenes,
            "background_scene_depth_mm": list(self.background_scene_depth_mm),
            "negative_stride_px": self.negative_stride_px,
            "negative_iou_max": self.negative_iou_max,
            "negative_max_range_mm": self.negative_max_range_mm,
            "median_radius_px": self.median_radius_px,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        bg = d.get("background", {})
        return cls(
            n=int(d["n"]), seed=int(d["seed"]),
            grasps=[GraspSpec.from_dict(g) for g in d["grasps"]],
            sigma=np.array(d["sigma"], dtype=float),
            viewpoint=ViewpointPrior.from_dict(d["viewpoint"]),
            background=BackgroundModel(depth_mm=bg["depth_mm"],
                                       noise_sigma=bg["noise_sigma"],
                                       invalid_fraction=bg["invalid_fraction"]),
            camera=PinholeCamera.from_dict(d["camera"]),
            shape=HandShape.from_dict(d["hand_shape"]),
            stratified=bool(d["stratified"]),
            negatives_per_image=int(d["negatives_per_image"]),
            background_scenes=int(d["background_scenes"]),
            background_scene_depth_mm=tuple(d["background_scene_depth_mm"]),
            negative_stride_px=int(d["negative_stride_px"]),
            negative_iou_max=float(d["negative_iou_max"]),
            negative_max_range_mm=float(d["negative_max_range_mm"]),
            median_radius_px=int(d["median_radius_px"]),
        )


@dataclass
class DatasetManifest:
    camera: PinholeCamera
    samples: list
    negatives: list               # dicts: {"file": ..., "box": [x, y, w, h]}
    negative_scenes: list         # depth files of pure-background scenes
    generator: dict               # config echo
    acceptance_rate: float
    hand_size_mm: float

    def to_dict(self) -> dict:
        return {
            "format_version": MANIFEST_VERSION,
            "camera": self.camera.to_dict(),
            "hand_size_mm": float(self.hand_size_mm),
            "acceptance_rate": float(self.acceptance_rate),
            "generator": self.generator,
            "samples": [s.to_dict() for s in self.samples],
            "negatives": self.negatives,
            "negative_scenes": self.negative_scenes,
        }


def save_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), separators=(",", ":"))
                          + "\n", encoding="utf-8")


def load_manifest(path) -> DatasetManifest:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("format_version")
    if version != MANIFEST_VERSION:
        raise ValidationError(f"unsupported manifest version {version!r}")
    return DatasetManifest(
        camera=PinholeCamera.from_dict(doc["camera"]),
        samples=[Sample.from_dict(s) for s in doc["samples"]],
        negatives=doc["negatives"],
        negative_scenes=doc["negative_scenes"],
        generator=doc["generator"],
        acceptance_rate=float(doc["acceptance_rate"]),
        hand_size_mm=float(doc["hand_size_mm"]),
    )


def _harvest_negatives(depth_q: np.ndarray, gt_box, cfg: SynthConfig,
                       rng: np.random.Generator) -> list:
    """Window boxes usable as negatives: valid in-range grid locations
    whose canonical window overlaps the ground truth below the IoU cap."""
    filtered = median_filter(depth_q, cfg.median_radius_px)
    scan = ScanConfig(stride_px=cfg.negative_stride_px,
                      max_range_mm=cfg.negative_max_range_mm,
                      hand_size_mm=cfg.shape.hand_size)
    pts, _ = valid_grid(filtered, scan)
    smap = scale_map(filtered, cfg.camera, cfg.shape.hand_size)
    boxes = []
    for x, y in pts:
        side = float(smap[y, x])
        box = (x - side / 2.0, y - side / 2.0, side, side)
        if box[0] < 0 or box[1] < 0 or box[0] + side > cfg.camera.width \
                or box[1] + side > cfg.camera.height:
            continue
        if gt_box is not None and iou(box, gt_box) >= cfg.negative_iou_max:
            continue
        boxes.append(box)
    if len(boxes) > cfg.negatives_per_image:
        pick = rng.choice(len(boxes), size=cfg.negatives_per_image, replace=False)
        boxes = [boxes[i] for i in sorted(pick)]
    return [[float(v) for v in b] for b in boxes]


def generate_dataset(cfg: SynthConfig, out_dir) -> DatasetManifest:
    """Render the dataset into out_dir and write manifest.json."""
    out = Path(out_dir)
    if not out.is_dir():
        raise OSError(f"output directory {out} does not exist")

    seq = np.random.SeedSequence(cfg.seed)
    seq_sample, seq_render, seq_neg, seq_bg = seq.spawn(4)
    perturb = PerturbationConfig(sigma=cfg.sigma, seed=cfg.seed)
    drafts, acceptance, rejections = rejection_sample(
        cfg.grasps, cfg.n, perturb, cfg.viewpoint, cfg.camera, cfg.shape,
        seed=seq_sample, stratified=cfg.stratified)

    render_streams = seq_render.spawn(cfg.n)
    neg_streams = seq_neg.spawn(cfg.n + cfg.background_scenes)
    samples = []
    negatives = []
    for i, draft in enumerate(drafts):
        skeleton = forward_kinematics(draft.pose, cfg.shape)
        objects = []
        if draft.grasp.primitive is not None:
            r_global = euler_to_matrix(draft.pose[3], draft.pose[4], draft.pose[5])
            objects.append(draft.grasp.primitive.transformed(r_global, draft.pose[0:3]))
        rng_render = np.random.default_rng(render_streams[i])
        depth, vis = render_depth(cfg.camera, skeleton, objects,
                                  background=cfg.background, rng=rng_render)
        name = f"sample_{i:05d}.pgm"
        write_pgm16(out / name, depth)
        depth_q = np.clip(np.rint(depth), 0, 65535)

        samples.append(Sample(
            depth_file=name, grasp=draft.grasp.name, pose=draft.pose,
            keypoints3d=draft.points3d, keypoints2d=draft.uvz[1:, 0:2],
            visibility=vis, box=draft.box,
            has_object=draft.grasp.primitive is not None))
        rng_neg = np.random.default_rng(neg_streams[i])
        for box in _harvest_negatives(depth_q, draft.box, cfg, rng_neg):
            negatives.append({"file": name, "box": box})

    bg_streams = seq_bg.spawn(cfg.background_scenes)
    negative_scenes = []
    for j in range(cfg.background_scenes):
        rng_bg = np.random.default_rng(bg_streams[j])
        lo, hi = cfg.background_scene_depth_mm
        plane = BackgroundModel(depth_mm=float(rng_bg.uniform(lo, hi)),
                                noise_sigma=cfg.background.noise_sigma,
                                invalid_fraction=cfg.background.invalid_fraction)
        depth = render_shapes(cfg.camera, [], background=plane, rng=rng_bg)
        name = f"background_{j:05d}.pgm"
        write_pgm16(out / name, depth)
        negative_scenes.append(name)
        depth_q = np.clip(np.rint(depth), 0, 65535)
        rng_neg = np.random.default_rng(neg_streams[cfg.n + j])
        for box in _harvest_negatives(depth_q, None, cfg, rng_neg):
            negatives.append({"file": name, "box": box})

    generator = cfg.to_dict()
    generator["rejections"] = {k: int(v) for k, v in sorted(rejections.items())}
    manifest = DatasetManifest(camera=cfg.camera, samples=samples,
                               negatives=negatives,
                               negative_scenes=negative_scenes,
                               generator=generator,
                               acceptance_rate=acceptance,
                               hand_size_mm=cfg.shape.hand_size)
    save_manifest(manifest, out / "manifest.json")
    return manifest
