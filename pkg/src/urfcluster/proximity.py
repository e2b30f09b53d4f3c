"""Forest proximity: co-leaf frequency over all trees, and its dissimilarity."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import FeatureMatrix
from .forest import ClusterForest, apply_batch


def _sha256_json(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


@dataclass(frozen=True)
class ProximityMatrix:
    """Symmetric pairwise proximity in [0, 1], diagonal exactly 1.

    Every entry is a count of shared leaves divided by the tree count, so
    values are integer multiples of 1/tree_count. row_ids keep the link to
    the originating dataset rows; provenance records the hashes of the
    forest config and dataset that produced the matrix.
    """

    values: np.ndarray
    row_ids: np.ndarray
    tree_count: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32))
        ids = np.ascontiguousarray(np.asarray(self.row_ids, dtype=np.int64))
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("proximity must be square")
        if ids.shape != (values.shape[0],):
            raise ValueError("row_ids must align with the matrix")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("row_ids must be unique")
        if self.tree_count < 1:
            raise ValueError("tree_count must be >= 1")
        if not np.array_equal(values, values.T):
            raise ValueError("proximity must be symmetric")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValueError("proximity entries must lie in [0, 1]")
        if not np.all(np.diag(values) == 1.0):
            raise ValueError("proximity diagonal must be exactly 1")
        values.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_ids", ids)

    @property
    def m(self) -> int:
        return int(self.values.shape[0])


def build_proximity(
    forest: ClusterForest,
    matrix: FeatureMatrix,
    a_leaves_only: bool = False,
) -> ProximityMatrix:
    """Route every row through every tree and count shared leaves.

    All rows participate in every tree regardless of the tree's bootstrap.
    By default any shared leaf counts; with a_leaves_only, only leaves
    whose real points outnumber their noise mass contribute.
    """
    if matrix.q != forest.q:
        raise ValueError(
            f"matrix has {matrix.q} columns but the forest was trained on {forest.q}"
        )
    m = matrix.m
    counts = np.zeros((m, m), dtype=np.int32)
    for tree in forest.trees:
        leaves = apply_batch(tree, matrix.rows)
        if a_leaves_only:
            leaf_nodes = tree.leaf_id >= 0
            label_of_leaf = np.empty(int(tree.leaf_id.max()) + 1, dtype=np.int8)
            label_of_leaf[tree.leaf_id[leaf_nodes]] = tree.label[leaf_nodes]
            keep = label_of_leaf[leaves] == 1
        order = np.argsort(leaves, kind="stable")
        sorted_leaves = leaves[order]
        boundaries = np.nonzero(np.diff(sorted_leaves))[0] + 1
        for group in np.split(order, boundaries):
            if a_leaves_only and not keep[group[0]]:
                continue
            counts[np.ix_(group, group)] += 1
    values = counts.astype(np.float32) / np.float32(forest.config.tree_count)
    if a_leaves_only:
        # Rows routed to noise leaves in every tree would otherwise have a
        # zero diagonal; pin the self-proximity at 1 by definition.
        np.fill_diagonal(values, 1.0)
    provenance = {
        "forest_config": forest.config.to_dict(),
        "forest_config_sha256": _sha256_json(forest.config.to_dict()),
        "dataset_sha256": matrix.content_hash(),
        "a_leaves_only": a_leaves_only,
    }
    return ProximityMatrix(
        values=values,
        row_ids=matrix.row_ids.copy(),
        tree_count=forest.config.tree_count,
        provenance=provenance,
    )


def to_dissimilarity(p: ProximityMatrix) -> np.ndarray:
    """D = sqrt(1 - P) as float32 with an exactly zero diagonal."""
    d = np.sqrt(1.0 - p.values.astype(np.float64)).astype(np.float32)
    np.fill_diagonal(d, 0.0)
    return d


def subset(p: ProximityMatrix, row_ids: Sequence[int]) -> ProximityMatrix:
    """Principal submatrix for the given original row ids, order preserved."""
    wanted = np.asarray(row_ids, dtype=np.int64)
    if wanted.size == 0:
        raise ValueError("row_ids must not be empty")
    if len(np.unique(wanted)) != len(wanted):
        raise ValueError("row_ids must be distinct")
    id_to_pos = {int(rid): i for i, rid in enumerate(p.row_ids)}
    try:
        pos = np.array([id_to_pos[int(r)] for r in wanted], dtype=np.int64)
    except KeyError as missing:
        raise ValueError(f"row id {missing} not present in the matrix") from None
    return ProximityMatrix(
        values=p.values[np.ix_(pos, pos)],
        row_ids=wanted,
        tree_count=p.tree_count,
        provenance=dict(p.provenance, subset_of=p.provenance.get("dataset_sha256")),
    )


def export_binary(array: np.ndarray, path, sidecar_path, provenance: dict | None = None) -> dict:
    """Write a float32 row-major dump plus a JSON sidecar describing it."""
    data = np.ascontiguousarray(array, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(data.tobytes())
    sidecar = {
        "dtype": "float32",
        "order": "C",
        "shape": list(data.shape),
        "sha256": hashlib.sha256(data.tobytes()).hexdigest(),
    }
    if provenance:
        sidecar["provenance"] = provenance
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return sidecar
