"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

from itertools import combinations

import numpy as np
import pytest

from mates import (
    GraphSpec,
    SampleMatrix,
    ViewSpec,
    WeightedView,
    build_views,
)

# Populated by tests/test_acceptance.py; echoed after the run so the
# per-criterion lines show without -s.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def enumerate_group_sums(weights, m):
    """(U_x, U_y) per view for ALL C(N, m) group assignments.

    Independent brute-force oracle for the permutation null: every m-subset
    of the pooled indices is taken as the X group exactly once.
    """
    n_total = weights[0].shape[0]
    u_x, u_y = [], []
    for subset in combinations(range(n_total), m):
        ix = np.array(subset)
        iy = np.array([i for i in range(n_total) if i not in subset])
        u_x.append([w[np.ix_(ix, ix)].sum() for w in weights])
        u_y.append([w[np.ix_(iy, iy)].sum() for w in weights])
    return np.array(u_x), np.array(u_y)


def population_cov(a, b):
    """Population (divide by count) covariance between row-aligned samples."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    return ac.T @ bc / a.shape[0]


def random_symmetric_weights(rng, n_total, sparsity=0.5):
    """Random nonnegative symmetric weight matrix with zero diagonal."""
    w = rng.random((n_total, n_total))
    w *= rng.random((n_total, n_total)) < sparsity
    w = (w + w.T) / 2.0
    np.fill_diagonal(w, 0.0)
    return w


def as_view(weights, spec=None, view_index=1):
    """Wrap a raw symmetric weight matrix as a WeightedView for core-level tests."""
    weights = np.asarray(weights, dtype=float)
    adjacency = (weights != 0).astype(np.int8)
    return WeightedView(
        adjacency=adjacency,
        weights=weights,
        spec=spec or GraphSpec(kind="knn", k=1, weight_scheme="binary"),
        view_index=view_index,
    )


def random_fixture(rng, n_total=None, n_views=None):
    """Random small pooled sample with mixed graph/weight view configs.

    Returns (sample, views) with N in 4..8, S in 1..3; the graph kind,
    size and weighting scheme vary across draws.
    """
    n_total = int(rng.integers(4, 9)) if n_total is None else n_total
    n_views = int(rng.integers(1, 4)) if n_views is None else n_views
    m = int(rng.integers(2, n_total - 1))
    n = n_total - m
    d = int(rng.integers(1, 4))
    sample = SampleMatrix(values=rng.standard_normal((n_total, d)), m=m, n=n)

    specs = []
    for s in range(n_views):
        kind = rng.choice(["knn", "kmst"])
        if kind == "knn":
            k = int(rng.integers(1, n_total - 1))
            scheme = rng.choice(["binary", "similarity", "kernel", "rank"])
        else:
            k = int(rng.integers(1, max(2, (n_total - 1) // 2)))
            scheme = rng.choice(["binary", "similarity", "kernel"])
        graph = GraphSpec(kind=kind, k=k, weight_scheme=scheme, bandwidth="median")
        specs.append(ViewSpec(kind="moment", param=s + 1, graph=graph))
    views = build_views(sample, specs)
    return sample, views


@pytest.fixture
def tiny_line_views():
    """The 4-point line {0, 1, 2, 10}: 1-NN graph, binary weights.

    Symmetrized weights are W01 = 1, W12 = 0.5, W23 = 0.5 and the hand
    sums are U_x = 2, U_y = 1, W1 = 4, W2 = 3, W3 = 4.5.
    """
    sample = SampleMatrix(values=np.array([[0.0], [1.0], [2.0], [10.0]]), m=2, n=2)
    graph = GraphSpec(kind="knn", k=1, weight_scheme="binary")
    views = build_views(sample, [ViewSpec(kind="moment", param=1, graph=graph)])
    return sample, views
