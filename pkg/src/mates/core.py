"""Within-group sums, exact permutation-null moments and the statistic.

For each view s with symmetric weight matrix W, the test works with the
within-group weight sums

    U_x = sum over the first m rows/columns of W,
    U_y = sum over the last  n rows/columns of W,

and the derived pair U_w = ((n-1) U_x + (m-1) U_y)/(N-2), U_diff = U_x - U_y,
whose fluctuations are uncorrelated under the permutation null (the uniform
distribution over assignments of m of the N pooled observations to X, with
the graphs held fixed).

The permutation-null mean and covariance of (U_x, U_y) across views have
closed forms in the graph sums

    W1        = sum_ij W_ij,
    W2(s,s')  = sum_ij W_ij^(s) W_ij^(s'),
    W3(s,s')  = sum_i  W_i.^(s) W_i.^(s')   (row sums W_i. = sum_j W_ij),
    ~W2       = W2 - W1^(s) W1^(s') / (N(N-1)),
    ~W3       = W3 - W1^(s) W1^(s') / N,

which are computed here exactly. The aggregated statistic is the
Mahalanobis norm of the centered (U_x, U_y) stack; it is evaluated through
the orthogonal (U_w, U_diff) decomposition, which is algebraically equal to
the full 2S x 2S quadratic form and better conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DataError, DegenerateStatisticError
from .graphs import WeightedView

__all__ = [
    "ViewSums",
    "PermutationMoments",
    "ViewIndependenceReport",
    "StatisticValue",
    "view_sums",
    "permutation_moments",
    "independence_report",
    "statistic",
]

# Numerical rank threshold (relative to the largest singular value) and
# positive-definiteness floor (relative to the largest eigenvalue).
RANK_RTOL = 1e-10
PD_RTOL = 1e-10
PSD_CHECK_RTOL = 1e-9


@dataclass(frozen=True)
class ViewSums:
    """All sums of one pooled sample's weighted views.

    Vectors are indexed by view (length S); ``w2``..``w3t`` are S x S with
    the (s, s') pair sums. ``row_sums`` and ``centered_row_sums`` hold
    W_i. and W_i. - W1/N per view (S x N). The symmetrized weight matrices
    are retained for permutation resampling and singularity diagnosis.
    """

    u_x: np.ndarray
    u_y: np.ndarray
    u_w: np.ndarray
    u_diff: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    w2t: np.ndarray
    w3t: np.ndarray
    row_sums: np.ndarray
    centered_row_sums: np.ndarray
    m: int
    n: int
    weights: tuple[np.ndarray, ...] = field(repr=False, default=())

    @property
    def n_views(self) -> int:
        return len(self.u_x)

    @property
    def n_total(self) -> int:
        return self.m + self.n


@dataclass(frozen=True)
class PermutationMoments:
    """Exact permutation-null moments of the view sums.

    ``sigma_s`` is the 2S x 2S covariance of the interleaved vector
    (U_x^(1), U_y^(1), ..., U_x^(S), U_y^(S)); ``sigma_w`` and
    ``sigma_diff`` are the S x S covariances of the orthogonal components.
    """

    mu_x: np.ndarray
    mu_y: np.ndarray
    sigma_s: np.ndarray
    sigma_w: np.ndarray
    sigma_diff: np.ndarray
    c: float
    m: int
    n: int

    def __post_init__(self):
        for name in ("sigma_s", "sigma_w", "sigma_diff"):
            mat = getattr(self, name)
            if not np.allclose(mat, mat.T, rtol=0, atol=1e-12 * max(1.0, np.abs(mat).max())):
                raise DataError(f"{name} is not symmetric")
            eigs = np.linalg.eigvalsh(mat)
            scale = np.abs(eigs).max(initial=0.0)
            if eigs.min(initial=0.0) < -PSD_CHECK_RTOL * scale:
                raise DataError(f"{name} is not positive semidefinite")

    @property
    def mu_w(self) -> np.ndarray:
        n_total = self.m + self.n
        return ((self.n - 1) * self.mu_x + (self.m - 1) * self.mu_y) / (n_total - 2)

    @property
    def mu_diff(self) -> np.ndarray:
        return self.mu_x - self.mu_y


@dataclass(frozen=True)
class ViewIndependenceReport:
    """Numerical-rank diagnosis of the two linear-independence conditions.

    The covariance of the centered U_w stack is positive-definite exactly
    when the doubly-centered matrices ``w_hat`` are linearly independent
    across views; the U_diff covariance needs the centered row-sum vectors
    ``w_v`` independent. Views flagged in ``singular_views_*`` add no rank
    beyond their predecessors (in view order) and break positive
    definiteness.
    """

    rank_w: int
    rank_diff: int
    singular_views_w: tuple[int, ...]
    singular_views_diff: tuple[int, ...]
    w_hat: tuple[np.ndarray, ...] = field(repr=False, default=())
    w_v: tuple[np.ndarray, ...] = field(repr=False, default=())

    @property
    def n_views(self) -> int:
        return len(self.w_hat)

    @property
    def sigma_w_positive_definite(self) -> bool:
        return self.rank_w == self.n_views

    @property
    def sigma_diff_positive_definite(self) -> bool:
        return self.rank_diff == self.n_views


@dataclass(frozen=True)
class StatisticValue:
    """The aggregated statistic, its two orthogonal parts and per-view values."""

    t_stat: float
    t_w: float
    t_diff: float
    t_prime: np.ndarray
    z_w: np.ndarray
    z_diff: np.ndarray


def _check_views(views: Sequence[WeightedView], m: int, n: int) -> int:
    if not views:
        raise DataError("need at least one view")
    n_total = m + n
    for view in views:
        if view.weights.shape != (n_total, n_total):
            raise DataError(
                f"view {view.view_index} has weight shape {view.weights.shape}, "
                f"expected ({n_total}, {n_total})"
            )
    return n_total


def view_sums(views: Sequence[WeightedView], m: int, n: int) -> ViewSums:
    """Compute all per-view and per-pair sums by direct summation."""
    n_total = _check_views(views, m, n)
    n_views = len(views)
    weights = tuple(v.weights for v in views)

    u_x = np.array([w[:m, :m].sum() for w in weights])
    u_y = np.array([w[m:, m:].sum() for w in weights])
    u_w = ((n - 1) * u_x + (m - 1) * u_y) / (n_total - 2)
    u_diff = u_x - u_y

    w1 = np.array([w.sum() for w in weights])
    row_sums = np.stack([w.sum(axis=1) for w in weights])
    centered_row_sums = row_sums - w1[:, None] / n_total

    w2 = np.empty((n_views, n_views))
    for a in range(n_views):
        for b in range(a, n_views):
            w2[a, b] = w2[b, a] = float((weights[a] * weights[b]).sum())
    # sum_ijr W_ij W_ir collapses to the row-sum inner product
    w3 = row_sums @ row_sums.T
    w3 = (w3 + w3.T) / 2.0

    w2t = w2 - np.outer(w1, w1) / (n_total * (n_total - 1))
    w3t = w3 - np.outer(w1, w1) / n_total

    return ViewSums(
        u_x=u_x,
        u_y=u_y,
        u_w=u_w,
        u_diff=u_diff,
        w1=w1,
        w2=w2,
        w3=w3,
        w2t=w2t,
        w3t=w3t,
        row_sums=row_sums,
        centered_row_sums=centered_row_sums,
        m=m,
        n=n,
        weights=weights,
    )


def permutation_moments(sums: ViewSums, m: int | None = None, n: int | None = None) -> PermutationMoments:
    """Exact closed-form permutation-null moments of the view sums."""
    m = sums.m if m is None else m
    n = sums.n if n is None else n
    n_total = m + n
    if n_total < 4:
        raise DataError(f"permutation moments need N >= 4, got N={n_total}")

    w1, w2t, w3t = sums.w1, sums.w2t, sums.w3t
    mu_x = m * (m - 1) / (n_total * (n_total - 1)) * w1
    mu_y = n * (n - 1) / (n_total * (n_total - 1)) * w1
    c = 2.0 * m * n / (n_total * (n_total - 1) * (n_total - 2) * (n_total - 3))

    cov_xx = c * (m - 1) * ((n - 1) * w2t + 2 * (m - 2) * w3t)
    cov_yy = c * (n - 1) * ((m - 1) * w2t + 2 * (n - 2) * w3t)
    cov_xy = c * (m - 1) * (n - 1) * (w2t - 2 * w3t)

    n_views = sums.n_views
    sigma_s = np.empty((2 * n_views, 2 * n_views))
    sigma_s[0::2, 0::2] = cov_xx
    sigma_s[1::2, 1::2] = cov_yy
    sigma_s[0::2, 1::2] = cov_xy
    sigma_s[1::2, 0::2] = cov_xy.T

    sigma_w = (
        2.0 * m * n * (m - 1) * (n - 1) / (n_total * (n_total - 1) * (n_total - 2) * (n_total - 3))
    ) * (w2t - 2.0 * w3t / (n_total - 2))
    sigma_diff = (4.0 * m * n / (n_total * (n_total - 1))) * w3t

    return PermutationMoments(
        mu_x=mu_x,
        mu_y=mu_y,
        sigma_s=sigma_s,
        sigma_w=sigma_w,
        sigma_diff=sigma_diff,
        c=c,
        m=m,
        n=n,
    )


def _centered_structures(weights: Sequence[np.ndarray]) -> tuple[list[np.ndarray], list[np.ndarray]]:
    w_hat, w_v = [], []
    for w in weights:
        n_total = w.shape[0]
        w1 = w.sum()
        rows = w.sum(axis=1)
        tilde = rows - w1 / n_total
        hat = w - w1 / (n_total * (n_total - 1)) - (tilde[:, None] + tilde[None, :]) / (n_total - 2)
        np.fill_diagonal(hat, 0.0)
        w_hat.append(hat)
        w_v.append(tilde)
    return w_hat, w_v


def _greedy_ranks(stack: np.ndarray) -> tuple[int, tuple[int, ...]]:
    """Numerical rank of the row stack plus the 1-based rows adding no rank."""
    implicated = []
    rank = 0
    for s in range(1, stack.shape[0] + 1):
        sub = stack[:s]
        svals = np.linalg.svd(sub, compute_uv=False)
        new_rank = int((svals > RANK_RTOL * svals[0]).sum()) if svals[0] > 0 else 0
        if new_rank <= rank:
            implicated.append(s)
        rank = new_rank
    return rank, tuple(implicated)


def _report_from_weights(weights: Sequence[np.ndarray]) -> ViewIndependenceReport:
    w_hat, w_v = _centered_structures(weights)
    rank_w, singular_w = _greedy_ranks(np.stack([h.ravel() for h in w_hat]))
    rank_diff, singular_diff = _greedy_ranks(np.stack(w_v))
    return ViewIndependenceReport(
        rank_w=rank_w,
        rank_diff=rank_diff,
        singular_views_w=singular_w,
        singular_views_diff=singular_diff,
        w_hat=tuple(w_hat),
        w_v=tuple(w_v),
    )


def independence_report(views: Sequence[WeightedView], m: int, n: int) -> ViewIndependenceReport:
    """Diagnose linear dependence among the views' centered structures."""
    n_total = _check_views(views, m, n)
    n_views = len(views)
    if n_total < max(3, n_views):
        raise DataError(f"need N >= max(3, S), got N={n_total}, S={n_views}")
    return _report_from_weights([v.weights for v in views])


def _pd_cho_factor(mat: np.ndarray, name: str, report_source):
    eigs = np.linalg.eigvalsh(mat)
    if eigs[-1] <= 0 or eigs[0] <= PD_RTOL * eigs[-1]:
        raise DegenerateStatisticError(
            f"{name} is singular (eigenvalue range [{eigs[0]:.3e}, {eigs[-1]:.3e}]); "
            "remove redundant views",
            report=report_source(),
        )
    try:
        return cho_factor(mat, lower=True)
    except np.linalg.LinAlgError:  # pragma: no cover - caught by the eigenvalue gate
        raise DegenerateStatisticError(f"{name} could not be factorized", report=report_source())


def statistic(sums: ViewSums, moments: PermutationMoments) -> StatisticValue:
    """Aggregate the centered view sums into the Mahalanobis-type statistic.

    Evaluated as the sum of the two orthogonal quadratic forms in
    (U_w, U_diff); linear systems are solved via Cholesky factorization,
    never by explicit inversion. Per-view statistics come from each view's
    2 x 2 covariance of (U_x, U_y).

    Raises :class:`DegenerateStatisticError` (carrying the independence
    report when the weight matrices are available) if either component
    covariance is numerically singular.
    """

    def report_source():
        return _report_from_weights(sums.weights) if sums.weights else None

    v_w = sums.u_w - moments.mu_w
    v_diff = sums.u_diff - moments.mu_diff

    cho_w = _pd_cho_factor(moments.sigma_w, "the covariance of the weighted sums", report_source)
    cho_d = _pd_cho_factor(
        moments.sigma_diff, "the covariance of the sum differences", report_source
    )
    t_w = float(v_w @ cho_solve(cho_w, v_w))
    t_diff = float(v_diff @ cho_solve(cho_d, v_diff))

    var_w = np.diagonal(moments.sigma_w)
    var_diff = np.diagonal(moments.sigma_diff)
    z_w = v_w / np.sqrt(var_w)
    z_diff = v_diff / np.sqrt(var_diff)

    # per-view 2x2 quadratic forms in (U_x, U_y)
    n_views = sums.n_views
    t_prime = np.empty(n_views)
    for s in range(n_views):
        u = np.array([sums.u_x[s] - moments.mu_x[s], sums.u_y[s] - moments.mu_y[s]])
        cov2 = moments.sigma_s[2 * s : 2 * s + 2, 2 * s : 2 * s + 2]
        cho2 = _pd_cho_factor(cov2, f"the view-{s + 1} covariance", report_source)
        t_prime[s] = float(u @ cho_solve(cho2, u))

    return StatisticValue(
        t_stat=t_w + t_diff,
        t_w=t_w,
        t_diff=t_diff,
        t_prime=t_prime,
        z_w=z_w,
        z_diff=z_diff,
    )
