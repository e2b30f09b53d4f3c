"""Agglomerative dendrograms and leaf orders for proximity heatmaps."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LINKAGE_METHODS = ("average", "single", "complete")

# Conventions recorded with every dendrogram so downstream consumers do not
# have to guess: merge rows ascend by height (stable on discovery order for
# exact ties), the smaller cluster id is the left child, cluster M + k is
# created by merge row k.
CONVENTIONS = {
    "merge_order": "height ascending, ties by chain discovery order",
    "child_order": "smaller cluster id first",
    "cluster_ids": "leaves 0..M-1, merge k creates id M+k",
}


@dataclass(frozen=True)
class Dendrogram:
    """Merge table in canonical form plus the leaf identity map.

    merges has one row per merge: (left id, right id, height, size), ids
    following the convention above. row_ids maps leaf position to the
    originating dataset row.
    """

    merges: np.ndarray
    row_ids: np.ndarray
    method: str

    def __post_init__(self) -> None:
        merges = np.ascontiguousarray(np.asarray(self.merges, dtype=np.float64))
        ids = np.ascontiguousarray(np.asarray(self.row_ids, dtype=np.int64))
        m = ids.shape[0]
        if merges.shape != (max(m - 1, 0), 4):
            raise ValueError("merge table shape must be (M-1, 4)")
        if m > 1:
            heights = merges[:, 2]
            if np.any(np.diff(heights) < 0):
                raise ValueError("merge heights must be non-decreasing")
            if heights[0] < 0:
                raise ValueError("merge heights must be non-negative")
        merges.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "merges", merges)
        object.__setattr__(self, "row_ids", ids)

    @property
    def m(self) -> int:
        return int(self.row_ids.shape[0])

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "dendrogram",
                "version": 1,
                "method": self.method,
                "conventions": CONVENTIONS,
                "row_ids": self.row_ids.tolist(),
                "merges": self.merges.tolist(),
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "Dendrogram":
        doc = json.loads(text)
        if doc.get("format") != "dendrogram" or doc.get("version") != 1:
            raise ValueError("unrecognized dendrogram document")
        return cls(
            merges=np.asarray(doc["merges"], dtype=np.float64).reshape(-1, 4),
            row_ids=np.asarray(doc["row_ids"], dtype=np.int64),
            method=doc["method"],
        )


@dataclass(frozen=True)
class LeafOrder:
    """A permutation of leaf positions 0..M-1 with its producing stage."""

    permutation: np.ndarray
    stage: str

    def __post_init__(self) -> None:
        perm = np.ascontiguousarray(np.asarray(self.permutation, dtype=np.int64))
        if sorted(perm.tolist()) != list(range(perm.shape[0])):
            raise ValueError("not a permutation of 0..M-1")
        perm.setflags(write=False)
        object.__setattr__(self, "permutation", perm)


def _check_dissimilarity(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("dissimilarity must be square")
    if d.shape[0] < 2:
        raise ValueError("need at least 2 points")
    if not np.allclose(d, d.T, atol=0.0, rtol=0.0, equal_nan=False):
        raise ValueError("dissimilarity must be symmetric")
    if np.any(np.diag(d) != 0.0):
        raise ValueError("dissimilarity diagonal must be zero")
    if d.min() < 0.0:
        raise ValueError("dissimilarity entries must be non-negative")
    return d


def linkage(
    d: np.ndarray, method: str = "average", row_ids: Sequence[int] | None = None
) -> Dendrogram:
    """Agglomerate with the nearest-neighbor chain; canonical merge order.

    average is unweighted pair-group mean, single takes minima, complete
    maxima. Nearest-neighbor ties prefer the earlier chain member, then the
    smallest active slot; chains restart at the smallest active slot.
    """
    if method not in LINKAGE_METHODS:
        raise ValueError(f"unknown linkage method {method!r}")
    d = _check_dissimilarity(d)
    m = d.shape[0]
    ids = (
        np.arange(m, dtype=np.int64)
        if row_ids is None
        else np.asarray(row_ids, dtype=np.int64)
    )
    if ids.shape[0] != m:
        raise ValueError("row_ids must align with the matrix")

    work = d.copy()
    np.fill_diagonal(work, np.inf)
    active = np.ones(m, dtype=bool)
    sizes = np.ones(m, dtype=np.int64)
    cluster_id = np.arange(m, dtype=np.int64)  # merged clusters take ids m, m+1, ...
    raw = []  # (id_a, id_b, height, size) in discovery order
    next_id = m
    chain: list[int] = []
    inf_row = np.full(m, np.inf)

    while next_id < 2 * m - 1:
        if not chain:
            chain.append(int(np.argmax(active)))
        x = chain[-1]
        row = np.where(active, work[x], inf_row)
        row[x] = np.inf
        y = int(np.argmin(row))
        dist = row[y]
        if len(chain) >= 2 and work[x, chain[-2]] == dist:
            y = chain[-2]
        if len(chain) >= 2 and y == chain[-2]:
            chain.pop()
            chain.pop()
            a, b = (x, y) if x < y else (y, x)
            raw.append(
                (int(cluster_id[a]), int(cluster_id[b]), float(dist), int(sizes[a] + sizes[b]))
            )
            if method == "average":
                merged = (sizes[a] * work[a] + sizes[b] * work[b]) / (sizes[a] + sizes[b])
            elif method == "single":
                merged = np.minimum(work[a], work[b])
            else:
                merged = np.maximum(work[a], work[b])
            work[a] = merged
            work[:, a] = merged
            work[a, a] = np.inf
            work[b] = np.inf
            work[:, b] = np.inf
            sizes[a] += sizes[b]
            active[b] = False
            cluster_id[a] = next_id
            next_id += 1
        else:
            chain.append(y)

    # Canonical order: stable sort by height, then relabel internal ids so
    # merge row k creates cluster M + k.
    order = np.argsort([r[2] for r in raw], kind="stable")
    relabel = {}
    merges = np.empty((m - 1, 4), dtype=np.float64)
    for new_pos, raw_pos in enumerate(order):
        id_a, id_b, height, size = raw[raw_pos]
        id_a = relabel.get(id_a, id_a)
        id_b = relabel.get(id_b, id_b)
        lo, hi = (id_a, id_b) if id_a < id_b else (id_b, id_a)
        merges[new_pos] = (lo, hi, height, size)
        relabel[m + raw_pos] = m + new_pos
    return Dendrogram(merges=merges, row_ids=ids, method=method)


def _children(dendrogram: Dendrogram) -> np.ndarray:
    return dendrogram.merges[:, :2].astype(np.int64)


def hc_order(dendrogram: Dendrogram) -> LeafOrder:
    """Depth-first leaf order of the dendrogram, smaller cluster id first."""
    m = dendrogram.m
    if m == 1:
        return LeafOrder(np.array([0], dtype=np.int64), "HC")
    children = _children(dendrogram)
    out = np.empty(m, dtype=np.int64)
    pos = 0
    stack = [2 * m - 2]
    while stack:
        node = stack.pop()
        if node < m:
            out[pos] = node
            pos += 1
            continue
        left, right = children[node - m]
        stack.append(int(right))
        stack.append(int(left))
    return LeafOrder(out, "HC")


def _min_plus(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tropical matrix product: out[i, j] = min_h a[i, h] + b[h, j].

    Chunked over rows of a so the broadcast temporary stays small.
    """
    rows, inner = a.shape
    out = np.empty((rows, b.shape[1]))
    step = max(1, 4_000_000 // max(1, inner * b.shape[1]))
    for i in range(0, rows, step):
        out[i : i + step] = (a[i : i + step, :, None] + b[None, :, :]).min(axis=1)
    return out


def olo_order(dendrogram: Dendrogram, d: np.ndarray) -> LeafOrder:
    """Leaf order minimizing the summed successive dissimilarity.

    Exact dynamic program over all orders reachable by flipping subtrees
    of the dendrogram: for every node it tabulates the cheapest path
    through the node's leaves for each feasible (first, last) endpoint
    pair, then backtracks from the best root endpoints. The result is a
    relayout of the same tree, never a new clustering. Work grows with
    the product of sibling subtree sizes (cubic in M for the worst tree),
    so keep it for display-sized matrices.
    """
    m = dendrogram.m
    if m == 1:
        return LeafOrder(np.array([0], dtype=np.int64), "OLO")
    d = _check_dissimilarity(d)
    if d.shape[0] != m:
        raise ValueError("dissimilarity size must match the dendrogram")
    children = _children(dendrogram)

    # Bottom-up endpoint tables. leaves_of[v] lists the leaves of node v in
    # a fixed internal order; table[v][i, j] is the cheapest path over all
    # of v's leaves starting at leaves_of[v][i] and ending at
    # leaves_of[v][j] (inf where no flip assignment allows that pair).
    leaves_of: list[np.ndarray | None] = [None] * (2 * m - 1)
    table: list[np.ndarray | None] = [None] * (2 * m - 1)
    for i in range(m):
        leaves_of[i] = np.array([i], dtype=np.int64)
        table[i] = np.zeros((1, 1))
    for j in range(m - 1):
        a_id, b_id = int(children[j, 0]), int(children[j, 1])
        la, lb = leaves_of[a_id], leaves_of[b_id]
        ta, tb = table[a_id], table[b_id]
        # C[u, w] = min_{h, k} ta[u, h] + d[h, k] + tb[k, w]
        cross = _min_plus(ta, _min_plus(d[np.ix_(la, lb)], tb))
        na, nb = la.shape[0], lb.shape[0]
        full = np.full((na + nb, na + nb), np.inf)
        full[:na, na:] = cross
        full[na:, :na] = cross.T
        leaves_of[m + j] = np.concatenate([la, lb])
        table[m + j] = full

    root = 2 * m - 2
    flat = int(np.argmin(table[root]))
    n_root = table[root].shape[0]
    u = int(leaves_of[root][flat // n_root])
    w = int(leaves_of[root][flat % n_root])

    # Top-down reconstruction of the split leaves between the endpoints.
    out = np.empty(m, dtype=np.int64)
    pos = 0
    stack = [(root, u, w)]
    while stack:
        node, u, w = stack.pop()
        if node < m:
            out[pos] = node
            pos += 1
            continue
        a_id, b_id = int(children[node - m, 0]), int(children[node - m, 1])
        if np.any(leaves_of[a_id] == u):
            l_id, r_id = a_id, b_id
        else:
            l_id, r_id = b_id, a_id
        ll, lr = leaves_of[l_id], leaves_of[r_id]
        u_loc = int(np.nonzero(ll == u)[0][0])
        w_loc = int(np.nonzero(lr == w)[0][0])
        costs = (
            table[l_id][u_loc][:, None]
            + d[np.ix_(ll, lr)]
            + table[r_id][:, w_loc][None, :]
        )
        h_loc, k_loc = np.unravel_index(int(np.argmin(costs)), costs.shape)
        stack.append((r_id, int(lr[k_loc]), w))
        stack.append((l_id, u, int(ll[h_loc])))
    return LeafOrder(out, "OLO")


def order_cost(d: np.ndarray, order: LeafOrder | np.ndarray) -> float:
    """Sum of dissimilarities between successive leaves of an order."""
    perm = order.permutation if isinstance(order, LeafOrder) else np.asarray(order)
    d = np.asarray(d)
    return float(d[perm[:-1], perm[1:]].sum())


def permute_matrix(values: np.ndarray, order: LeafOrder | np.ndarray) -> np.ndarray:
    """Reorder rows and columns of a square matrix by a leaf order."""
    perm = order.permutation if isinstance(order, LeafOrder) else np.asarray(order, dtype=np.int64)
    values = np.asarray(values)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("matrix must be square")
    if perm.shape[0] != values.shape[0]:
        raise ValueError("order length must match the matrix")
    return values[np.ix_(perm, perm)]


def flat_clusters(
    dendrogram: Dendrogram, k: int | None = None, height: float | None = None
) -> dict[int, int]:
    """Cut the dendrogram into flat clusters.

    Exactly one of k (target cluster count) or height (merge cutoff,
    merges with height <= cutoff applied) must be given. Returns a map
    from original row id to cluster id; cluster ids are 0-based and
    assigned by first appearance in leaf position order.
    """
    if (k is None) == (height is None):
        raise ValueError("give exactly one of k or height")
    m = dendrogram.m
    if k is not None:
        if not (1 <= k <= m):
            raise ValueError(f"k must lie in [1, {m}]")
        n_merges = m - k
    else:
        n_merges = int(np.sum(dendrogram.merges[:, 2] <= height)) if m > 1 else 0

    parent = list(range(2 * m - 1))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    children = _children(dendrogram) if m > 1 else np.empty((0, 2), dtype=np.int64)
    for j in range(n_merges):
        # Merge row j creates cluster id m + j; both children collapse into it.
        parent[find(int(children[j, 0]))] = m + j
        parent[find(int(children[j, 1]))] = m + j

    labels: dict[int, int] = {}
    next_label = 0
    out: dict[int, int] = {}
    for pos in range(m):
        root = find(pos)
        if root not in labels:
            labels[root] = next_label
            next_label += 1
        out[int(dendrogram.row_ids[pos])] = labels[root]
    return out
