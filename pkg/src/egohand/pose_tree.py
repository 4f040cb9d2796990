"""Pose-label quantization and the coarse-to-fine class hierarchy.

Canonical labels (40-dim vectors of normalized 2D keypoints) are
quantized into K classes with k-means, then merged bottom-up with
average-linkage agglomeration into a binary dendrogram, which is
flattened to a fixed number of levels. Every leaf sits at the same
depth; chain nodes (single child) are kept when a cluster survives
unchanged between levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass
class PoseClass:
    """One quantized pose: centroid of its members' canonical labels."""

    class_id: int
    centroid: np.ndarray          # (40,)
    member_ids: np.ndarray        # indices into the training label list
    mean_keypoints: np.ndarray    # (20, 2) centroid reshaped, for reporting


@dataclass
class KMeansResult:
    assignments: np.ndarray
    classes: list
    objective_history: list


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # ||p - c||^2 expanded; clamped at 0 against rounding.
    d = (np.sum(points ** 2, axis=1)[:, None]
         + np.sum(centers ** 2, axis=1)[None, :]
         - 2.0 * points @ centers.T)
    return np.maximum(d, 0.0)


def kmeans_quantize(labels: np.ndarray, k: int, seed: int = 0,
                    iters: int = 100) -> KMeansResult:
    """Lloyd's k-means with k-means++ seeding.

    Deterministic under the seed. Empty clusters are re-seeded at the
    point farthest from its assigned center (smallest index on ties).
    Raises ValidationError when k exceeds the number of distinct labels.
    """
    x = np.asarray(labels, dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise ValidationError("labels must be a non-empty 2-D array")
    n = len(x)
    distinct = np.unique(x, axis=0).shape[0]
    if k > distinct:
        raise ValidationError(f"k={k} exceeds the {distinct} distinct labels")
    if k < 1:
        raise ValidationError("k must be >= 1")

    rng = np.random.default_rng(seed)

    # k-means++ seeding.
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = _squared_distances(x, centers[:1]).ravel()
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = x[rng.integers(n)]
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r))
            centers[j] = x[min(idx, n - 1)]
        d2 = np.minimum(d2, _squared_distances(x, centers[j:j + 1]).ravel())

    assign = np.full(n, -1)
    history = []
    for _ in range(iters):
        dist = _squared_distances(x, centers)
        new_assign = dist.argmin(axis=1)
        point_d2 = dist[np.arange(n), new_assign]
        for j in range(k):
            if not np.any(new_assign == j):
                far = int(np.argmax(point_d2))
                new_assign[far] = j
                point_d2[far] = 0.0
        history.append(float(point_d2.sum()))
        converged = np.array_equal(new_assign, assign)
        assign = new_assign
        for j in range(k):
            centers[j] = x[assign == j].mean(axis=0)
        if converged:
            break

    classes = []
    for j in range(k):
        members = np.where(assign == j)[0]
        centroid = x[members].mean(axis=0)
        classes.append(PoseClass(class_id=j, centroid=centroid,
                                 member_ids=members,
                                 mean_keypoints=centroid.reshape(-1, 2).copy()))
    return KMeansResult(assignments=assign, classes=classes,
                        objective_history=history)


@dataclass
class PoseTree:
    """Flattened class hierarchy. Node 0 is the root; ids are assigned in
    BFS order, siblings sorted by their smallest member class id."""

    parents: list                  # parent id per node, None for root
    children: list                 # list of child-id lists
    levels: list                   # 1-based level per node, leaves at n_levels
    members: list                  # tuple of member class ids per node
    centroids: np.ndarray          # (V, dim) mean of descendant-leaf centroids
    leaf_nodes: list               # node id of the leaf for each class id
    n_levels: int

    @property
    def n_nodes(self) -> int:
        return len(self.parents)

    @property
    def n_classes(self) -> int:
        return len(self.leaf_nodes)

    def is_leaf(self, node: int) -> bool:
        return not self.children[node]

    def class_of_leaf(self, node: int) -> int:
        if not self.is_leaf(node):
            raise ValidationError(f"node {node} is not a leaf")
        return self.members[node][0]

    def validate(self) -> None:
        if self.parents[0] is not None:
            raise ValidationError("node 0 must be the root")
        for i, p in enumerate(self.parents[1:], start=1):
            if p is None or not (0 <= p < self.n_nodes) or i not in self.children[p]:
                raise ValidationError(f"node {i} has a broken parent link")
        seen = set()
        for cls, leaf in enumerate(self.leaf_nodes):
            if not self.is_leaf(leaf) or self.members[leaf] != (cls,):
                raise ValidationError(f"leaf for class {cls} is inconsistent")
            seen.add(leaf)
        if len(seen) != self.n_classes:
            raise ValidationError("leaf nodes are not in bijection with classes")

    def to_dict(self) -> dict:
        return {
            "parents": [(-1 if p is None else int(p)) for p in self.parents],
            "levels": [int(v) for v in self.levels],
            "members": [[int(c) for c in m] for m in self.members],
            "centroids": [[float(v) for v in row] for row in self.centroids],
            "leaf_nodes": [int(v) for v in self.leaf_nodes],
            "n_levels": int(self.n_levels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PoseTree":
        parents = [None if p < 0 else int(p) for p in d["parents"]]
        children = [[] for _ in parents]
        for i, p in enumerate(parents):
            if p is not None:
                children[p].append(i)
        tree = cls(parents=parents, children=children,
                   levels=[int(v) for v in d["levels"]],
                   members=[tuple(m) for m in d["members"]],
                   centroids=np.array(d["centroids"], dtype=float),
                   leaf_nodes=[int(v) for v in d["leaf_nodes"]],
                   n_levels=int(d["n_levels"]))
        tree.validate()
        return tree


def _average_linkage_merges(centroids: np.ndarray):
    """UPGMA dendrogram over class centroids.

    Returns (merge list, heights): each merge is (cluster_a, cluster_b,
    members_tuple). Ties break on the smallest member class id pair.
    """
    k = len(centroids)
    clusters = {i: (i,) for i in range(k)}
    # Average pairwise distance between singleton clusters = point distance.
    dist = {}
    for i in range(k):
        for j in range(i + 1, k):
            dist[(i, j)] = float(np.linalg.norm(centroids[i] - centroids[j]))
    sizes = {i: 1 for i in range(k)}
    reps = {i: i for i in range(k)}  # smallest member id, for tie-breaking
    merges = []
    heights = []
    next_id = k
    while len(clusters) > 1:
        best = None
        for (i, j), d in dist.items():
            key = (d, min(reps[i], reps[j]), max(reps[i], reps[j]))
            if best is None or key < best[0]:
                best = (key, i, j)
        _, a, b = best
        h = dist[(a, b) if (a, b) in dist else (b, a)]
        members = tuple(sorted(clusters[a] + clusters[b]))
        merges.append((a, b, members))
        heights.append(h)
        new = next_id
        next_id += 1
        # UPGMA update: size-weighted average of the two old distances.
        for other in list(clusters):
            if other in (a, b):
                continue
            da = dist.pop((min(a, other), max(a, other)))
            db = dist.pop((min(b, other), max(b, other)))
            dist[(min(new, other), max(new, other))] = (
                (sizes[a] * da + sizes[b] * db) / (sizes[a] + sizes[b]))
        dist.pop((a, b), None)
        clusters[new] = members
        sizes[new] = sizes[a] + sizes[b]
        reps[new] = min(reps[a], reps[b])
        for c in (a, b):
            del clusters[c], sizes[c], reps[c]
    return merges, heights


def build_hierarchy(classes: list, n_levels: int) -> PoseTree:
    """Flattened agglomerative hierarchy over pose classes.

    The binary dendrogram is cut at n_levels - 1 merge-height quantiles;
    level 1 is the root, level n_levels the singleton leaves.
    """
    if n_levels < 2:
        raise ValidationError("need at least 2 levels")
    k = len(classes)
    if k < 1:
        raise ValidationError("need at least one class")
    cents = np.stack([c.centroid for c in classes])

    # Partition per level: a list of member tuples.
    partitions = []
    if k == 1:
        partitions = [[(0,)] for _ in range(n_levels)]
    else:
        merges, heights = _average_linkage_merges(cents)
        hs = np.array(heights)
        for lev in range(1, n_levels):
            q = (n_levels - lev) / (n_levels - 1)
            cut = float(np.quantile(hs, q))
            m = int(np.sum(hs <= cut + 1e-12))
            # Apply the first m merges.
            parts = {i: (i,) for i in range(k)}
            next_id = k
            for a, b, members in merges[:m]:
                parts[next_id] = members
                del parts[a], parts[b]
                next_id += 1
            partitions.append(sorted(parts.values(), key=lambda t: t[0]))
        partitions.append([(i,) for i in range(k)])
        # Level 1 must be a single root cluster (quantile 1 = max height).
        assert len(partitions[0]) == 1

    parents, children, levels, members = [], [], [], []
    prev_ids = {}
    for lev_idx, part in enumerate(partitions):
        lev = lev_idx + 1
        cur_ids = {}
        for cluster in part:
            node = len(parents)
            if lev == 1:
                parents.append(None)
            else:
                parent = prev_ids[_containing(partitions[lev_idx - 1], cluster)]
                parents.append(parent)
                children[parent].append(node)
            children.append([])
            levels.append(lev)
            members.append(cluster)
            cur_ids[cluster] = node
        prev_ids = cur_ids

    leaf_nodes = [0] * k
    for node, m in enumerate(members):
        if not children[node]:
            leaf_nodes[m[0]] = node
    node_centroids = np.stack([cents[list(m)].mean(axis=0) for m in members])
    tree = PoseTree(parents=parents, children=children, levels=levels,
                    members=members, centroids=node_centroids,
                    leaf_nodes=leaf_nodes, n_levels=n_levels)
    tree.validate()
    return tree


def _containing(partition, cluster) -> tuple:
    head = cluster[0]
    for c in partition:
        if head in c:
            return c
    raise ValidationError("refinement broken: cluster not contained in parent level")


def ancestors(tree: PoseTree, node: int) -> list:
    """Path of node ids from the root down to (and including) the node."""
    if not (0 <= node < tree.n_nodes):
        raise ValidationError(f"unknown node id {node}")
    path = []
    cur = node
    while cur is not None:
        path.append(cur)
        cur = tree.parents[cur]
    return path[::-1]
