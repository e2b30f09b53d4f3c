"""Unsupervised random forest over real points and virtual uniform noise.

Trees discriminate the dataset (class A) from a uniform background (class
C) that is never materialized: every node assumes noise mass equal to its
real point count, spread uniformly over the node box, and split candidates
score children with the analytic noise share of each side. Pruning by
i_min on the inherited child impurity controls granularity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import FeatureMatrix

# Stream tags keep bootstrap draws and per-node dimension draws apart.
_BAG_STREAM = 7
_NODE_STREAM = 11


class ZeroWidthDimension(ValueError):
    """Raised when a box dimension has no extent; callers skip the dimension."""


@dataclass(frozen=True)
class ForestConfig:
    """Training settings.

    i_min is the impurity floor: a node whose inherited impurity is at or
    below it becomes a leaf, so 0.0 grows full trees and 0.5 stops at the
    root (the balanced root impurity is exactly 0.5). m_min is the minimum
    number of bagged points a node needs to be splittable; 2 disables that
    criterion in practice. subspace_size None means floor(sqrt(Q)), at
    least 1, dimensions resampled at every node.
    """

    tree_count: int = 200
    i_min: float = 0.29
    m_min: int = 2
    seed: int = 0
    subspace_size: int | None = None

    def __post_init__(self) -> None:
        if self.tree_count < 1:
            raise ValueError("tree_count must be >= 1")
        if not (0.0 <= self.i_min <= 0.5):
            raise ValueError("i_min must lie in [0, 0.5]")
        if self.m_min < 2:
            raise ValueError("m_min must be >= 2")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a non-negative 64-bit integer")
        if self.subspace_size is not None and self.subspace_size < 1:
            raise ValueError("subspace_size must be >= 1 when given")

    def to_dict(self) -> dict:
        return {
            "tree_count": self.tree_count,
            "i_min": self.i_min,
            "m_min": self.m_min,
            "seed": self.seed,
            "subspace_size": self.subspace_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestConfig":
        return cls(
            tree_count=int(d["tree_count"]),
            i_min=float(d["i_min"]),
            m_min=int(d["m_min"]),
            seed=int(d["seed"]),
            subspace_size=None if d.get("subspace_size") is None else int(d["subspace_size"]),
        )


def gini_impurity(real: float, noise: float) -> float:
    """Two-class Gini impurity of a node holding real points and noise mass.

    An empty node has impurity 0 by definition.
    """
    if real < 0.0 or noise < 0.0:
        raise ValueError("counts must be non-negative")
    total = real + noise
    if total == 0.0:
        return 0.0
    # Rounding can land a hair below zero when one count dwarfs the other.
    return max(0.0, 1.0 - (real / total) ** 2 - (noise / total) ** 2)


def noise_density(box: np.ndarray, dim: int, real_count: float) -> float:
    """Uniform noise mass per unit length along one box dimension.

    The node's noise count equals its real count, spread over the box
    extent in the split dimension.
    """
    lo = float(box[0, dim])
    hi = float(box[1, dim])
    width = hi - lo
    if width <= 0.0:
        raise ZeroWidthDimension(f"dimension {dim} has zero width [{lo}, {hi}]")
    if real_count < 0.0:
        raise ValueError("real_count must be non-negative")
    return real_count / width


def virtual_child_counts(
    box: np.ndarray, dim: int, tau: float, real_count: float
) -> tuple[float, float]:
    """Noise mass falling left and right of a threshold.

    The left share is the noise density times the offset of tau from the
    box minimum; the right share is the remainder, so the pair sums back
    to the node's real count up to one rounding.
    """
    lo = float(box[0, dim])
    hi = float(box[1, dim])
    if not (lo <= tau <= hi):
        raise ValueError(f"tau {tau} outside box [{lo}, {hi}] in dimension {dim}")
    density = noise_density(box, dim, real_count)
    left = density * (tau - lo)
    return left, real_count - left


@dataclass(frozen=True)
class SplitChoice:
    dim: int
    tau: float
    relative_gain: float


def _gini_vec(real: np.ndarray, noise: np.ndarray) -> np.ndarray:
    total = real + noise
    with np.errstate(invalid="ignore", divide="ignore"):
        g = 1.0 - (real / total) ** 2 - (noise / total) ** 2
    return np.where(total == 0.0, 0.0, np.maximum(0.0, g))


def best_split(
    points: np.ndarray, box: np.ndarray, dims: Sequence[int]
) -> SplitChoice | None:
    """Highest relative impurity reduction over candidate thresholds.

    Candidates are midpoints between consecutive distinct values of the
    node's points in each sampled dimension. Children are scored with
    their real counts and analytic noise shares against the balanced
    parent impurity of 0.5. Ties break toward the lowest dimension index,
    then the smallest threshold. Returns None when no candidate yields a
    strictly positive gain.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < 2:
        return None
    best: SplitChoice | None = None
    for dim in sorted(int(d) for d in dims):
        lo = float(box[0, dim])
        width = float(box[1, dim]) - lo
        if width <= 0.0:
            continue
        uniq, counts = np.unique(points[:, dim], return_counts=True)
        if uniq.size < 2:
            continue
        taus = 0.5 * (uniq[:-1] + uniq[1:])
        real_left = np.cumsum(counts[:-1]).astype(np.float64)
        real_right = n - real_left
        virt_left = (n / width) * (taus - lo)
        virt_right = n - virt_left
        i_left = _gini_vec(real_left, virt_left)
        i_right = _gini_vec(real_right, virt_right)
        total_left = real_left + virt_left
        total_right = real_right + virt_right
        weighted = (total_left * i_left + total_right * i_right) / (2.0 * n)
        gain = (0.5 - weighted) / 0.5
        k = int(np.argmax(gain))
        if gain[k] > 0.0 and (best is None or gain[k] > best.relative_gain):
            best = SplitChoice(dim=dim, tau=float(taus[k]), relative_gain=float(gain[k]))
    return best


@dataclass(frozen=True)
class Tree:
    """One grown tree as parallel node arrays in preorder.

    feature is -1 at leaves; leaf_id numbers leaves in creation order and
    is -1 at internal nodes. label is 1 where real points outnumber or
    match the inherited noise mass, else 0. Boxes are recomputed from each
    node's own points.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_id: np.ndarray
    label: np.ndarray
    real_count: np.ndarray
    virtual_count: np.ndarray
    impurity: np.ndarray
    box_lo: np.ndarray
    box_hi: np.ndarray

    @property
    def node_count(self) -> int:
        return int(self.feature.shape[0])

    @property
    def leaf_count(self) -> int:
        return int(self.leaf_id.max()) + 1


def _node_rng(seed: int, tree_index: int, heap_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, tree_index, _NODE_STREAM, heap_id])


def _subspace(config: ForestConfig, q: int) -> int:
    size = config.subspace_size
    if size is None:
        size = max(1, int(math.isqrt(q)))
    return min(size, q)


def grow_tree(points: np.ndarray, config: ForestConfig, tree_index: int = 0) -> Tree:
    """Grow one tree on an already-bagged point set.

    A node becomes a leaf when it holds fewer than m_min points, when its
    inherited impurity is at or below i_min, or when no candidate split has
    positive gain. Dimension draws are keyed by (seed, tree_index, node
    path), so trees grown at different i_min from the same seed share their
    common prefix.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise ValueError("points must be a non-empty 2-D array")
    q = points.shape[1]
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    leaf_id: list[int] = []
    label: list[int] = []
    real_count: list[int] = []
    virtual_count: list[float] = []
    impurity: list[float] = []
    box_lo: list[np.ndarray] = []
    box_hi: list[np.ndarray] = []
    n_leaves = 0

    root = (np.arange(points.shape[0]), float(points.shape[0]), 0.5, 1, -1, 0)
    stack = [root]
    while stack:
        idx, virtual, inherited, heap_id, parent_slot, side = stack.pop()
        slot = len(feature)
        if parent_slot >= 0:
            if side == 0:
                left[parent_slot] = slot
            else:
                right[parent_slot] = slot
        node_points = points[idx]
        real = int(idx.shape[0])
        lo = node_points.min(axis=0)
        hi = node_points.max(axis=0)
        box = np.stack([lo, hi])

        choice = None
        if real >= config.m_min and inherited > config.i_min:
            rng = _node_rng(config.seed, tree_index, heap_id)
            dims = rng.choice(q, size=_subspace(config, q), replace=False)
            choice = best_split(node_points, box, dims)

        feature.append(-1 if choice is None else choice.dim)
        threshold.append(math.nan if choice is None else choice.tau)
        left.append(-1)
        right.append(-1)
        label.append(1 if real >= virtual else 0)
        real_count.append(real)
        virtual_count.append(virtual)
        impurity.append(inherited)
        box_lo.append(lo)
        box_hi.append(hi)
        if choice is None:
            leaf_id.append(n_leaves)
            n_leaves += 1
            continue
        leaf_id.append(-1)
        mask = node_points[:, choice.dim] <= choice.tau
        left_idx = idx[mask]
        right_idx = idx[~mask]
        virt_l, virt_r = virtual_child_counts(box, choice.dim, choice.tau, float(real))
        i_l = gini_impurity(float(left_idx.shape[0]), virt_l)
        i_r = gini_impurity(float(right_idx.shape[0]), virt_r)
        # Right child pushed first so the left subtree is numbered first.
        stack.append((right_idx, virt_r, i_r, 2 * heap_id + 1, slot, 1))
        stack.append((left_idx, virt_l, i_l, 2 * heap_id, slot, 0))

    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        leaf_id=np.asarray(leaf_id, dtype=np.int32),
        label=np.asarray(label, dtype=np.int8),
        real_count=np.asarray(real_count, dtype=np.int64),
        virtual_count=np.asarray(virtual_count, dtype=np.float64),
        impurity=np.asarray(impurity, dtype=np.float64),
        box_lo=np.asarray(box_lo, dtype=np.float64),
        box_hi=np.asarray(box_hi, dtype=np.float64),
    )


def apply(tree: Tree, point: np.ndarray) -> int:
    """Route one point to its leaf id; left on value <= threshold."""
    point = np.asarray(point, dtype=np.float64)
    node = 0
    while tree.feature[node] >= 0:
        if point[tree.feature[node]] <= tree.threshold[node]:
            node = int(tree.left[node])
        else:
            node = int(tree.right[node])
    return int(tree.leaf_id[node])


def apply_batch(tree: Tree, points: np.ndarray) -> np.ndarray:
    """Leaf ids for every row of points."""
    points = np.asarray(points, dtype=np.float64)
    node = np.zeros(points.shape[0], dtype=np.int32)
    while True:
        f = tree.feature[node]
        active = np.nonzero(f >= 0)[0]
        if active.size == 0:
            break
        cur = node[active]
        vals = points[active, f[active]]
        go_left = vals <= tree.threshold[cur]
        node[active] = np.where(go_left, tree.left[cur], tree.right[cur])
    return tree.leaf_id[node].astype(np.int64)


@dataclass(frozen=True)
class ClusterForest:
    """A trained forest plus the bootstrap record that produced it."""

    config: ForestConfig
    q: int
    trees: tuple[Tree, ...]
    bag_indices: tuple[np.ndarray, ...]

    def to_json(self) -> str:
        doc = {
            "format": "urf-forest",
            "version": 1,
            "config": self.config.to_dict(),
            "q": self.q,
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": [None if math.isnan(v) else v for v in t.threshold],
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "leaf_id": t.leaf_id.tolist(),
                    "label": t.label.tolist(),
                    "real_count": t.real_count.tolist(),
                    "virtual_count": t.virtual_count.tolist(),
                    "impurity": t.impurity.tolist(),
                    "box_lo": t.box_lo.tolist(),
                    "box_hi": t.box_hi.tolist(),
                }
                for t in self.trees
            ],
            "bag_indices": [b.tolist() for b in self.bag_indices],
        }
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ClusterForest":
        doc = json.loads(text)
        if doc.get("format") != "urf-forest" or doc.get("version") != 1:
            raise ValueError("unrecognized forest document")
        trees = []
        for t in doc["trees"]:
            trees.append(
                Tree(
                    feature=np.asarray(t["feature"], dtype=np.int32),
                    threshold=np.asarray(
                        [math.nan if v is None else v for v in t["threshold"]],
                        dtype=np.float64,
                    ),
                    left=np.asarray(t["left"], dtype=np.int32),
                    right=np.asarray(t["right"], dtype=np.int32),
                    leaf_id=np.asarray(t["leaf_id"], dtype=np.int32),
                    label=np.asarray(t["label"], dtype=np.int8),
                    real_count=np.asarray(t["real_count"], dtype=np.int64),
                    virtual_count=np.asarray(t["virtual_count"], dtype=np.float64),
                    impurity=np.asarray(t["impurity"], dtype=np.float64),
                    box_lo=np.asarray(t["box_lo"], dtype=np.float64),
                    box_hi=np.asarray(t["box_hi"], dtype=np.float64),
                )
            )
        return cls(
            config=ForestConfig.from_dict(doc["config"]),
            q=int(doc["q"]),
            trees=tuple(trees),
            bag_indices=tuple(
                np.asarray(b, dtype=np.int64) for b in doc["bag_indices"]
            ),
        )


def train_forest(matrix: FeatureMatrix | np.ndarray, config: ForestConfig) -> ClusterForest:
    """Train tree_count trees, each on an M-draw bootstrap of the rows.

    Deterministic: the bootstrap of tree t is keyed by (seed, t) and node
    dimension draws by (seed, t, node path), so identical (data, config)
    reproduce the forest exactly.
    """
    rows = matrix.rows if isinstance(matrix, FeatureMatrix) else np.asarray(matrix, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("training data must be 2-D")
    m, q = rows.shape
    if m < 2:
        raise ValueError("training needs at least 2 rows")
    trees = []
    bags = []
    for t in range(config.tree_count):
        rng = np.random.default_rng([config.seed, t, _BAG_STREAM])
        bag = rng.integers(0, m, size=m)
        trees.append(grow_tree(rows[bag], config, tree_index=t))
        bags.append(bag.astype(np.int64))
    return ClusterForest(config=config, q=q, trees=tuple(trees), bag_indices=tuple(bags))
