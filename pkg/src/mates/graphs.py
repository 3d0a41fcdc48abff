"""Similarity graphs and edge weights over a dissimilarity matrix.

A view's weighted graph is built in two steps: an adjacency structure
(directed k-nearest-neighbor graph or union of k edge-disjoint successive
minimum spanning trees) and a weighting scheme on the present edges. Raw
weights can be asymmetric for the k-NN graph; they are always returned
symmetrized as ``(W + W^T)/2``, which leaves the within-group sums used by
the test unchanged.

All tie-breaking is deterministic: k-NN ties in distance go to the smaller
observation index, and minimum-spanning-tree edge ties are resolved in
lexicographic ``(i, j)`` order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal, Sequence, Union

import numpy as np

from .dissim import (
    DissimilarityMatrix,
    SampleMatrix,
    lp_distance,
    moment_manhattan,
    precomputed,
)
from .errors import DataError, DegenerateStatisticError

__all__ = [
    "GraphSpec",
    "WeightedView",
    "ViewSpec",
    "resolve_k",
    "median_bandwidth",
    "build_knn",
    "build_kmst",
    "attach_weights",
    "build_view",
    "build_views",
    "default_view_specs",
]

GraphKind = Literal["knn", "kmst"]
WeightScheme = Literal["binary", "similarity", "kernel", "rank"]

AUTO = "auto"
MEDIAN = "median"


def resolve_k(k: Union[int, str], n_total: int) -> int:
    """Resolve a graph size, with ``"auto"`` meaning ``floor(N^0.8)``.

    The auto value is clamped to ``N - 1`` so tiny samples stay legal.
    """
    if k == AUTO:
        # guard against floor(16.000000000000004) style double noise
        resolved = int(math.floor(n_total**0.8 + 1e-9))
        return min(max(resolved, 1), n_total - 1)
    k = int(k)
    if k < 1:
        raise DataError(f"graph size k must be >= 1, got {k}")
    return k


@dataclass(frozen=True)
class GraphSpec:
    """Configuration of one view's graph and weights."""

    kind: GraphKind = "knn"
    k: Union[int, str] = AUTO
    weight_scheme: WeightScheme = "kernel"
    bandwidth: Union[float, str] = MEDIAN

    def __post_init__(self):
        if self.kind not in ("knn", "kmst"):
            raise DataError(f"unknown graph kind {self.kind!r}")
        if self.weight_scheme not in ("binary", "similarity", "kernel", "rank"):
            raise DataError(f"unknown weight scheme {self.weight_scheme!r}")
        if self.k != AUTO:
            try:
                valid = int(self.k) == self.k and self.k >= 1
            except (TypeError, ValueError):
                valid = False
            if not valid:
                raise DataError(f"k must be a positive integer or 'auto', got {self.k!r}")
        if self.bandwidth != MEDIAN:
            try:
                valid = float(self.bandwidth) > 0
            except (TypeError, ValueError):
                valid = False
            if not valid:
                raise DataError(f"bandwidth must be positive or 'median', got {self.bandwidth!r}")


@dataclass(frozen=True)
class WeightedView:
    """Realized view: adjacency, symmetric weight matrix and its spec.

    ``adjacency`` is the raw 0/1 structure (directed for k-NN), ``weights``
    the symmetrized nonnegative matrix actually used by the test.
    """

    adjacency: np.ndarray
    weights: np.ndarray
    spec: GraphSpec
    view_index: int

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def median_bandwidth(dissim: DissimilarityMatrix) -> float:
    """Median of the N(N-1)/2 off-diagonal pairwise dissimilarities."""
    iu = np.triu_indices(dissim.n, k=1)
    return float(np.median(dissim.entries[iu]))


def build_knn(dissim: DissimilarityMatrix, k: int) -> np.ndarray:
    """Directed k-nearest-neighbor adjacency.

    Row i has ones exactly at i's k nearest observations under the
    dissimilarity, self excluded, distance ties broken by smaller index.
    """
    n = dissim.n
    if not 1 <= k <= n - 1:
        raise DataError(f"k-NN needs 1 <= k <= N-1, got k={k}, N={n}")
    entries = dissim.entries
    adjacency = np.zeros((n, n), dtype=np.int8)
    cols = np.arange(n)
    for i in range(n):
        order = np.lexsort((cols, entries[i]))
        order = order[order != i]
        adjacency[i, order[:k]] = 1
    return adjacency


class _UnionFind:
    __slots__ = ("parent", "rank")

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, a: int) -> int:
        parent = self.parent
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def build_kmst(dissim: DissimilarityMatrix, k: int) -> np.ndarray:
    """Union of k successive edge-disjoint minimum spanning trees.

    Tree t is a minimum spanning tree of the complete graph with the edges
    of trees 1..t-1 removed (Kruskal over a single global edge sort, used
    edges masked). The result is a symmetric adjacency with exactly
    k(N-1) undirected edges.
    """
    n = dissim.n
    if not 1 <= k <= (n - 1) // 2:
        raise DataError(f"k-MST needs 1 <= k <= floor((N-1)/2), got k={k}, N={n}")
    entries = dissim.entries
    iu, ju = np.triu_indices(n, k=1)
    order = np.lexsort((ju, iu, entries[iu, ju]))
    edges_i, edges_j = iu[order], ju[order]

    used = np.zeros(len(edges_i), dtype=bool)
    adjacency = np.zeros((n, n), dtype=np.int8)
    for tree in range(k):
        uf = _UnionFind(n)
        added = 0
        for e in range(len(edges_i)):
            if used[e]:
                continue
            a, b = int(edges_i[e]), int(edges_j[e])
            if uf.union(a, b):
                used[e] = True
                adjacency[a, b] = 1
                adjacency[b, a] = 1
                added += 1
                if added == n - 1:
                    break
        if added != n - 1:
            raise DataError(
                f"cannot build spanning tree {tree + 1}: remaining graph is disconnected"
            )
    return adjacency


def _knn_ranks(dissim: DissimilarityMatrix, k: int) -> np.ndarray:
    """Rank matrix: entry (i, j) = l if j is i's l-th nearest neighbor (l <= k), else 0."""
    n = dissim.n
    entries = dissim.entries
    ranks = np.zeros((n, n), dtype=np.int64)
    cols = np.arange(n)
    for i in range(n):
        order = np.lexsort((cols, entries[i]))
        order = order[order != i]
        ranks[i, order[:k]] = np.arange(1, k + 1)
    return ranks


def attach_weights(
    dissim: DissimilarityMatrix, adjacency: np.ndarray, spec: GraphSpec
) -> WeightedView:
    """Attach edge weights to an adjacency and symmetrize.

    Schemes on a present edge (i, j):

    * ``binary``:     1
    * ``similarity``: ``max(D) - D_ij``
    * ``kernel``:     ``exp(-D_ij / bandwidth)`` with the median heuristic
      when no bandwidth is given
    * ``rank``:       ``k - l + 1`` when j is i's l-th nearest neighbor
      (k-NN adjacency only)

    The raw weights are replaced by ``(W + W^T)/2`` with a zero diagonal.
    """
    n = dissim.n
    adjacency = np.asarray(adjacency)
    if adjacency.shape != (n, n):
        raise DataError(
            f"adjacency shape {adjacency.shape} does not match dissimilarity size {n}"
        )
    mask = (adjacency != 0).astype(float)
    np.fill_diagonal(mask, 0.0)

    scheme = spec.weight_scheme
    if scheme == "binary":
        raw = mask
    elif scheme == "similarity":
        raw = (dissim.max_entry - dissim.entries) * mask
    elif scheme == "kernel":
        if spec.bandwidth == MEDIAN:
            bandwidth = median_bandwidth(dissim)
        else:
            bandwidth = float(spec.bandwidth)
        if bandwidth <= 0:
            raise DegenerateStatisticError(
                "zero kernel bandwidth: the median pairwise dissimilarity vanishes "
                "(duplicate observations?)"
            )
        raw = np.exp(-dissim.entries / bandwidth) * mask
    elif scheme == "rank":
        if spec.kind != "knn":
            raise DataError("rank weights are defined only for k-NN graphs")
        k = resolve_k(spec.k, n)
        ranks = _knn_ranks(dissim, k)
        if not np.array_equal((ranks > 0).astype(np.int8), (adjacency != 0).astype(np.int8)):
            raise DataError("rank weights require the k-NN adjacency of this dissimilarity")
        raw = (k - ranks + 1.0) * (ranks > 0)
    else:  # pragma: no cover - guarded by GraphSpec
        raise DataError(f"unknown weight scheme {scheme!r}")

    weights = (raw + raw.T) / 2.0
    iu = np.triu_indices(n, k=1)
    weights[(iu[1], iu[0])] = weights[iu]
    np.fill_diagonal(weights, 0.0)
    return WeightedView(
        adjacency=adjacency, weights=weights, spec=spec, view_index=dissim.view_index
    )


@dataclass(frozen=True)
class ViewSpec:
    """One configured view: a dissimilarity choice plus a graph spec.

    ``kind`` selects the dissimilarity: ``"moment"`` (Manhattan on s-th
    powers, ``param`` = integer s), ``"lp"`` (l_s distance, ``param`` = s),
    or ``"precomputed"`` (``param`` = an N x N matrix).
    """

    kind: Literal["moment", "lp", "precomputed"]
    param: object
    graph: GraphSpec = GraphSpec()

    def dissimilarity(self, sample: SampleMatrix | None, view_index: int) -> DissimilarityMatrix:
        if self.kind == "moment":
            return moment_manhattan(sample, int(self.param))
        if self.kind == "lp":
            return lp_distance(sample, float(self.param), view_index=view_index)
        if self.kind == "precomputed":
            expected = sample.n_total if sample is not None else None
            return precomputed(self.param, view_index=view_index, expected_n=expected)
        raise DataError(f"unknown view kind {self.kind!r}")


def default_view_specs(graph: GraphSpec | None = None, moments: Sequence[int] = (1, 2, 3, 4)):
    """Default configuration: moment-Manhattan views s = 1..4 on a k-NN
    graph with k = floor(N^0.8) and median-bandwidth kernel weights."""
    graph = graph if graph is not None else GraphSpec()
    return [ViewSpec(kind="moment", param=s, graph=graph) for s in moments]


def build_view(sample: SampleMatrix | None, spec: ViewSpec, view_index: int) -> WeightedView:
    """Build one weighted view from the pooled sample."""
    dissim = spec.dissimilarity(sample, view_index)
    dissim = replace(dissim, view_index=view_index) if dissim.view_index != view_index else dissim
    k = resolve_k(spec.graph.k, dissim.n)
    if spec.graph.kind == "knn":
        adjacency = build_knn(dissim, k)
    else:
        adjacency = build_kmst(dissim, k)
    return attach_weights(dissim, adjacency, spec.graph)


def build_views(sample: SampleMatrix | None, specs: Sequence[ViewSpec]) -> list[WeightedView]:
    """Build all views; view indices are 1-based positions in ``specs``."""
    return [build_view(sample, spec, s + 1) for s, spec in enumerate(specs)]
