"""Hierarchical rejector cascades: weak part classifiers, sequential
coarse-to-fine training, and the three classification routines.

A weak classifier is a thresholded linear template w supported on a
cell-aligned subregion of the descriptor grid (bias included), firing
when w.x > 0. A node holds a pool of M such members. A single cascade
instantiation picks one member per node and ANDs the firing tests along
each root-to-leaf path; the implicit-ensemble classifier aggregates all
M^V instantiations at once by propagating the product of per-node firing
counts down the tree, so a leaf's vote equals the product of firing
counts along its ancestor path.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .features import FeatureConfig, PartRegion, region_mask
from .pose_tree import PoseTree, ancestors

MODEL_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# Linear training (hinge loss, L2 regularization, SGD with step 1/(lam*t))
# ---------------------------------------------------------------------------

def svm_objective(x: np.ndarray, y: np.ndarray, w: np.ndarray, lam: float) -> float:
    """Regularized hinge objective: lam/2 ||w||^2 + mean hinge loss."""
    margins = y * (x @ w)
    hinge = np.maximum(0.0, 1.0 - margins)
    return 0.5 * lam * float(w @ w) + float(hinge.mean())


def train_linear(x: np.ndarray, y: np.ndarray, lam: float = 1e-4,
                 epochs: int = 20, seed: int = 0, batch_size: int = 64,
                 objective_trace: list | None = None) -> np.ndarray:
    """Stochastic subgradient descent on the regularized hinge loss.

    Step size 1/(lam*t), iterates projected onto the 1/sqrt(lam) ball,
    returns the averaged iterate. Deterministic under the seed. Raises
    ValidationError when only one class is present.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or len(x) != len(y):
        raise ValidationError("x must be (N, D) with matching labels")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValidationError("training needs both classes present")

    rng = np.random.default_rng(seed)
    n, d = x.shape
    full_batch = batch_size >= n
    steps_per_epoch = max(1, (n + batch_size - 1) // batch_size)
    w = np.zeros(d)
    w_sum = np.zeros(d)
    radius = 1.0 / np.sqrt(lam)
    t = 0
    for _ in range(epochs):
        for _ in range(steps_per_epoch):
            t += 1
            # batch_size >= n degenerates to deterministic subgradient
            # descent on the whole set.
            idx = np.arange(n) if full_batch else rng.integers(n, size=batch_size)
            eta = 1.0 / (lam * t)
            xb, yb = x[idx], y[idx]
            viol = yb * (xb @ w) < 1.0
            grad = (yb[viol, None] * xb[viol]).sum(axis=0) / len(idx)
            w = (1.0 - eta * lam) * w + eta * grad
            norm = np.linalg.norm(w)
            if norm > radius:
                w *= radius / norm
            w_sum += w
        if objective_trace is not None:
            objective_trace.append(svm_objective(x, y, w_sum / t, lam))
    return w_sum / t


# ---------------------------------------------------------------------------
# Model structures
# ---------------------------------------------------------------------------

@dataclass
class WeakClassifier:
    region: PartRegion
    weights: np.ndarray           # (D,), zero outside region except bias
    node_id: int = -1
    pool_index: int = -1

    def fires(self, x: np.ndarray) -> bool:
        return float(self.weights @ x) > 0.0


@dataclass
class NodeEnsemble:
    node_id: int
    members: list
    degenerate: bool = False

    def weight_matrix(self) -> np.ndarray:
        return np.stack([m.weights for m in self.members])


@dataclass
class CascadeModel:
    tree: PoseTree
    ensembles: list               # NodeEnsemble per node id
    feature_config: FeatureConfig
    leaf_templates: np.ndarray    # (K, 40) canonical keypoints per class
    hand_size_mm: float
    # Ratio of ground-truth box side to the raw scale-map side, measured
    # on training data: the scale map keys off the near surface depth
    # while boxes key off the keypoint centroid, which sits deeper.
    box_scale: float = 1.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.ensembles) != self.tree.n_nodes:
            raise ValidationError("one ensemble per tree node required")
        for node, ens in enumerate(self.ensembles):
            if ens.node_id != node or not ens.members:
                raise ValidationError(f"ensemble for node {node} is malformed")
        self._weights = [e.weight_matrix() for e in self.ensembles]

    @property
    def n_members(self) -> int:
        return len(self.ensembles[0].members)

    def node_weights(self, node: int) -> np.ndarray:
        return self._weights[node]


@dataclass
class VoteResult:
    votes: np.ndarray             # (K,) non-negative instantiation counts
    margins: np.ndarray           # (K,) accumulated positive margins
    nodes_visited: int = 0

    def ranking_key(self, class_id: int):
        """Sort key: more votes, then larger margin, then smaller class."""
        return (-int(self.votes[class_id]), -float(self.margins[class_id]), class_id)


# ---------------------------------------------------------------------------
# Ensemble training
# ---------------------------------------------------------------------------

def _always_pass_member(cfg: FeatureConfig, node_id: int, idx: int) -> WeakClassifier:
    w = np.zeros(cfg.dim)
    w[-1] = 1.0
    region = PartRegion(0, 0, cfg.cells, cfg.cells)
    return WeakClassifier(region=region, weights=w, node_id=node_id, pool_index=idx)


def _random_region(rng: np.random.Generator, cfg: FeatureConfig,
                   min_cells: int = 2, max_cells: int = 5) -> PartRegion:
    hi = min(max_cells, cfg.cells)
    w = int(rng.integers(min_cells, hi + 1))
    h = int(rng.integers(min_cells, hi + 1))
    x0 = int(rng.integers(0, cfg.cells - w + 1))
    y0 = int(rng.integers(0, cfg.cells - h + 1))
    return PartRegion(x0, y0, w, h)


def train_node_ensemble(x: np.ndarray, pos_mask: np.ndarray, m: int,
                        cfg: FeatureConfig, seed: int = 0, lam: float = 1e-4,
                        epochs: int = 20, recall_floor: float = 0.98,
                        node_id: int = -1) -> NodeEnsemble:
    """Train M weak part classifiers on random cell-aligned regions.

    After training, each member's bias is shifted until at least
    recall_floor of the node positives pass it, which keeps coarse nodes
    from rejecting poses their subtree must still discriminate.
    """
    pos_mask = np.asarray(pos_mask, dtype=bool)
    n_pos = int(pos_mask.sum())
    n_neg = int((~pos_mask).sum())
    if n_pos == 0 or n_neg == 0:
        return NodeEnsemble(node_id=node_id,
                            members=[_always_pass_member(cfg, node_id, i) for i in range(m)],
                            degenerate=True)

    y = np.where(pos_mask, 1.0, -1.0)
    root_seq = np.random.SeedSequence(entropy=seed)
    members = []
    for j, child in enumerate(root_seq.spawn(m)):
        rng = np.random.default_rng(child)
        region = _random_region(rng, cfg)
        mask = region_mask(region, cfg)
        sub = x[:, mask]
        w_sub = train_linear(sub, y, lam=lam, epochs=epochs,
                             seed=int(rng.integers(2 ** 63)))
        w = np.zeros(cfg.dim)
        w[mask] = w_sub
        # Recall-floor calibration: lift the bias so the k-th smallest
        # positive margin lands strictly above zero.
        margins = np.sort(x[pos_mask] @ w)
        k = int(np.floor((1.0 - recall_floor) * n_pos))
        thr = margins[k]
        if thr <= 0.0:
            w[-1] += -thr + 1e-9
        members.append(WeakClassifier(region=region, weights=w,
                                      node_id=node_id, pool_index=j))
    return NodeEnsemble(node_id=node_id, members=members)


@dataclass
class TrainingRecord:
    """Per-node bookkeeping from sequential training, for audits and the
    training report. reached[i] is the bool mask of windows that survived
    every strict ancestor of node i."""

    reached: list
    report: list


def train_sequential(tree: PoseTree, x: np.ndarray, leaf_class: np.ndarray,
                     cfg: FeatureConfig, m: int = 3, lam: float = 1e-4,
                     epochs: int = 20, seed: int = 0,
                     recall_floor: float = 0.98):
    """Breadth-first sequential training over the pose tree.

    leaf_class holds the quantized class per window, -1 for background.
    At node i the positives are surviving windows whose class is in the
    node's member set, negatives all other survivors; only windows with
    at least one firing member continue to the children.

    Returns (ensembles, TrainingRecord).
    """
    x = np.asarray(x, dtype=float)
    leaf_class = np.asarray(leaf_class)
    n = len(x)
    if n == 0:
        raise ValidationError("no training windows")
    for cls in range(tree.n_classes):
        if not np.any(leaf_class == cls):
            raise ValidationError(f"class {cls} has no training windows")

    seqs = np.random.SeedSequence(entropy=seed).spawn(tree.n_nodes)
    ensembles: list = [None] * tree.n_nodes
    reached: list = [None] * tree.n_nodes
    report = []
    alive = [None] * tree.n_nodes
    alive[0] = np.ones(n, dtype=bool)
    order = sorted(range(tree.n_nodes), key=lambda i: (tree.levels[i], i))
    for i in order:
        cur = alive[i]
        reached[i] = cur.copy()
        member_set = np.isin(leaf_class, tree.members[i])
        # Train on the surviving subset only.
        sub_x = x[cur]
        sub_pos = member_set[cur]
        ens = train_node_ensemble(sub_x, sub_pos, m=m, cfg=cfg,
                                  seed=int(np.random.default_rng(seqs[i]).integers(2 ** 63)),
                                  lam=lam, epochs=epochs,
                                  recall_floor=recall_floor, node_id=i)
        ensembles[i] = ens
        w = ens.weight_matrix()
        fired_sub = (sub_x @ w.T > 0).any(axis=1)
        passed = np.zeros(n, dtype=bool)
        passed[np.where(cur)[0][fired_sub]] = True
        n_pos = int(sub_pos.sum())
        n_neg = int((~sub_pos).sum())
        report.append({
            "node": i,
            "level": tree.levels[i],
            "n_pos": n_pos,
            "n_neg": n_neg,
            "degenerate": ens.degenerate,
            "pos_pass_rate": float((fired_sub & sub_pos).sum() / n_pos) if n_pos else None,
            "neg_pass_rate": float((fired_sub & ~sub_pos).sum() / n_neg) if n_neg else None,
        })
        for child in tree.children[i]:
            alive[child] = passed
    return ensembles, TrainingRecord(reached=reached, report=report)


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

def classify_single(x: np.ndarray, model: CascadeModel,
                    member_choice: np.ndarray) -> np.ndarray:
    """One cascade instantiation: BFS with a FIFO queue, a node's children
    are visited only when its chosen member fires; a childless node that
    fires votes 1 for its class. Returns (K,) 0/1 votes."""
    tree = model.tree
    choice = np.asarray(member_choice, dtype=int)
    if choice.shape != (tree.n_nodes,):
        raise ValidationError("need one member index per tree node")
    votes = np.zeros(tree.n_classes, dtype=np.int64)
    queue = [0]
    while queue:
        i = queue.pop(0)
        member = model.ensembles[i].members[int(choice[i])]
        if member.fires(x):
            kids = tree.children[i]
            if kids:
                queue.extend(kids)
            else:
                votes[tree.class_of_leaf(i)] = 1
    return votes


def classify_ensemble(x: np.ndarray, model: CascadeModel) -> VoteResult:
    """Exact vote aggregation over all M^V cascade instantiations.

    BFS carries the running product t of per-node firing counts; children
    are enqueued only while t > 0, and a leaf's vote is the product along
    its path. Margins accumulate the positive member responses along the
    path for rank tie-breaking.
    """
    tree = model.tree
    votes = np.zeros(tree.n_classes, dtype=np.int64)
    margins = np.zeros(tree.n_classes)
    visited = 0
    queue = [(0, 1, 0.0)]
    while queue:
        i, t, acc = queue.pop(0)
        visited += 1
        resp = model.node_weights(i) @ x
        fired = resp > 0
        t = t * int(fired.sum())
        if t > 0:
            acc = acc + float(resp[fired].sum())
            kids = tree.children[i]
            if kids:
                queue.extend((k, t, acc) for k in kids)
            else:
                cls = tree.class_of_leaf(i)
                votes[cls] = t
                margins[cls] = acc
    return VoteResult(votes=votes, margins=margins, nodes_visited=visited)


def classify_oracle(x: np.ndarray, model: CascadeModel,
                    n_samples: int | None = None, seed: int = 0,
                    max_enumeration: int = 300_000) -> VoteResult:
    """Reference semantics: explicitly evaluate cascade instantiations
    with classify_single and sum their votes.

    Full enumeration over all M^V instantiations by default; when that
    exceeds max_enumeration an error demands sampling mode (n_samples
    random instantiations instead).
    """
    tree = model.tree
    m = model.n_members
    if n_samples is None:
        total = m ** tree.n_nodes
        if total > max_enumeration:
            raise ValidationError(
                f"enumeration of {total} instantiations exceeds the cap; "
                "pass n_samples to use sampling mode")
        choices = itertools.product(range(m), repeat=tree.n_nodes)
        iterator = (np.array(c) for c in choices)
    else:
        rng = np.random.default_rng(seed)
        iterator = (rng.integers(m, size=tree.n_nodes) for _ in range(n_samples))

    votes = np.zeros(tree.n_classes, dtype=np.int64)
    for choice in iterator:
        votes += classify_single(x, model, choice)
    return VoteResult(votes=votes, margins=np.zeros(tree.n_classes))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_model(model: CascadeModel, path) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "feature_config": model.feature_config.to_dict(),
        "flattening_order": "cell-major rows then orientation bins, bias last",
        "hand_size_mm": float(model.hand_size_mm),
        "box_scale": float(model.box_scale),
        "tree": model.tree.to_dict(),
        "leaf_templates": [[float(v) for v in row] for row in model.leaf_templates],
        "ensembles": [
            {
                "node": e.node_id,
                "degenerate": e.degenerate,
                "members": [
                    {"region": m.region.to_list(),
                     "weights": [float(v) for v in m.weights]}
                    for m in e.members
                ],
            }
            for e in model.ensembles
        ],
        "metadata": model.metadata,
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n",
                          encoding="utf-8")


def load_model(path) -> CascadeModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValidationError(f"unsupported model format version {version!r}")
    cfg = FeatureConfig.from_dict(doc["feature_config"])
    tree = PoseTree.from_dict(doc["tree"])
    ensembles = []
    for e in doc["ensembles"]:
        members = [
            WeakClassifier(region=PartRegion(*m["region"]),
                           weights=np.array(m["weights"], dtype=float),
                           node_id=int(e["node"]), pool_index=j)
            for j, m in enumerate(e["members"])
        ]
        ensembles.append(NodeEnsemble(node_id=int(e["node"]), members=members,
                                      degenerate=bool(e["degenerate"])))
    return CascadeModel(tree=tree, ensembles=ensembles, feature_config=cfg,
                        leaf_templates=np.array(doc["leaf_templates"], dtype=float),
                        hand_size_mm=float(doc["hand_size_mm"]),
                        box_scale=float(doc.get("box_scale", 1.0)),
                        metadata=doc.get("metadata", {}))
