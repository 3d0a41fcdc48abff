"""Dissimilarity matrices for the pooled two-sample data.

Each view of the data starts from an N x N dissimilarity matrix computed on
the pooled sample (group labels play no role here). Two families are
provided, plus an entry point for precomputed matrices so that arbitrary
non-Euclidean dissimilarities can be plugged in:

* ``moment_manhattan``: Manhattan distance between s-th powers,
  ``D_ij = sum_r |z_ir^s - z_jr^s|``. View s is sensitive to differences in
  the s-th moment of the coordinate distributions.
* ``lp_distance``: the l_s distance ``D_ij = (sum_r |z_ir - z_jr|^s)^(1/s)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError, PowerOverflowError

__all__ = [
    "SampleMatrix",
    "DissimilarityMatrix",
    "moment_manhattan",
    "lp_distance",
    "precomputed",
]

# Relative tolerance for accepting a user matrix as symmetric.
SYMMETRY_RTOL = 1e-9


@dataclass(frozen=True)
class SampleMatrix:
    """Pooled observations with group sizes.

    Rows ``0..m-1`` are the first sample (X), rows ``m..m+n-1`` the second
    (Y). Entries must be finite and both groups need at least two rows.
    """

    values: np.ndarray
    m: int
    n: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError(f"sample must be a 2-D matrix, got ndim={values.ndim}")
        object.__setattr__(self, "values", values)
        if self.m < 2 or self.n < 2:
            raise DataError(f"need at least 2 observations per group, got m={self.m}, n={self.n}")
        if values.shape[0] != self.m + self.n:
            raise DataError(
                f"row count {values.shape[0]} does not match m + n = {self.m + self.n}"
            )
        if values.shape[1] < 1:
            raise DataError("sample needs at least one column")
        if not np.isfinite(values).all():
            bad = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite sample entry at row {bad[0]}, column {bad[1]}")

    @property
    def n_total(self) -> int:
        return self.m + self.n

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def x(self) -> np.ndarray:
        return self.values[: self.m]

    @property
    def y(self) -> np.ndarray:
        return self.values[self.m :]


@dataclass(frozen=True)
class DissimilarityMatrix:
    """Symmetric nonnegative N x N matrix with zero diagonal."""

    entries: np.ndarray
    view_index: int = 1

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", entries)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DataError(f"dissimilarity matrix must be square, got shape {entries.shape}")
        if not np.isfinite(entries).all():
            raise DataError("dissimilarity matrix contains non-finite entries")
        if (entries < 0).any():
            i, j = np.argwhere(entries < 0)[0]
            raise DataError(f"negative dissimilarity at ({i}, {j})")
        if np.diagonal(entries).any():
            raise DataError("dissimilarity matrix must have a zero diagonal")
        if not np.array_equal(entries, entries.T):
            raise DataError("dissimilarity matrix must be exactly symmetric")

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def max_entry(self) -> float:
        return float(self.entries.max())


def _exact_symmetrize(matrix: np.ndarray) -> np.ndarray:
    # (M + M.T)/2 is symmetric in exact arithmetic but not always bitwise;
    # force bitwise symmetry so downstream equality checks are safe.
    out = (matrix + matrix.T) / 2.0
    iu = np.triu_indices_from(out, k=1)
    out[(iu[1], iu[0])] = out[iu]
    np.fill_diagonal(out, 0.0)
    return out


def moment_manhattan(sample: SampleMatrix, s: int) -> DissimilarityMatrix:
    """Manhattan distance between the elementwise s-th powers of the rows.

    ``D_ij = sum_r |z_ir^s - z_jr^s|`` for integer ``s >= 1``.

    Raises :class:`PowerOverflowError` when some ``z_ir^s`` (or the final
    distance sum) leaves the double range; the offending row, column and s
    are named in the message. No rescaling is attempted since it would
    silently change the graph topology built on top of this matrix.
    """
    if int(s) != s or s < 1:
        raise DataError(f"moment order must be a positive integer, got {s!r}")
    s = int(s)
    with np.errstate(over="ignore", invalid="ignore"):
        powered = sample.values**s
    if not np.isfinite(powered).all():
        i, r = np.argwhere(~np.isfinite(powered))[0]
        raise PowerOverflowError(
            f"moment power overflow: entry at row {i}, column {r} is not "
            f"representable when raised to s={s}"
        )
    entries = cdist(powered, powered, metric="cityblock")
    if not np.isfinite(entries).all():
        i, j = np.argwhere(~np.isfinite(entries))[0]
        raise PowerOverflowError(
            f"moment-{s} Manhattan distance overflowed for rows {i} and {j}"
        )
    return DissimilarityMatrix(_exact_symmetrize(entries), view_index=s)


def lp_distance(sample: SampleMatrix, s: float, view_index: int | None = None) -> DissimilarityMatrix:
    """l_s distance matrix, ``D_ij = (sum_r |z_ir - z_jr|^s)^(1/s)``, s > 0.

    For ``s >= 1`` this is a metric; for ``0 < s < 1`` the entries are still
    valid dissimilarities but the triangle inequality can fail.
    """
    s = float(s)
    if not np.isfinite(s) or s <= 0:
        raise DataError(f"l_s order must be a positive real, got {s!r}")
    with np.errstate(over="ignore", invalid="ignore"):
        entries = cdist(sample.values, sample.values, metric="minkowski", p=s)
    if not np.isfinite(entries).all():
        i, j = np.argwhere(~np.isfinite(entries))[0]
        raise PowerOverflowError(f"l_{s} distance overflowed for rows {i} and {j}")
    if view_index is None:
        view_index = max(1, int(round(s)))
    return DissimilarityMatrix(_exact_symmetrize(entries), view_index=view_index)


def precomputed(
    matrix: np.ndarray, view_index: int = 1, expected_n: int | None = None
) -> DissimilarityMatrix:
    """Validate and adopt a user-supplied dissimilarity matrix.

    The matrix must be square, nonnegative, zero on the diagonal and
    symmetric up to a relative tolerance of ``1e-9`` (relative to the
    largest entry); small asymmetries are averaged away. ``expected_n``
    ties the matrix to a pooled sample size when one is known.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DataError(f"precomputed dissimilarity must be square, got shape {matrix.shape}")
    if expected_n is not None and matrix.shape[0] != expected_n:
        raise DataError(
            f"precomputed dissimilarity is {matrix.shape[0]} x {matrix.shape[0]} "
            f"but the pooled sample has {expected_n} observations"
        )
    if not np.isfinite(matrix).all():
        raise DataError("precomputed dissimilarity contains non-finite entries")
    if (matrix < 0).any():
        i, j = np.argwhere(matrix < 0)[0]
        raise DataError(f"negative dissimilarity at ({i}, {j})")
    scale = matrix.max() if matrix.size else 0.0
    tol = SYMMETRY_RTOL * max(scale, 1e-300)
    asym = np.abs(matrix - matrix.T).max() if matrix.size else 0.0
    if asym > tol:
        i, j = np.unravel_index(np.argmax(np.abs(matrix - matrix.T)), matrix.shape)
        raise DataError(
            f"asymmetry beyond tolerance at ({i}, {j}): "
            f"|{matrix[i, j]!r} - {matrix[j, i]!r}| > {tol:g}"
        )
    if np.abs(np.diagonal(matrix)).max(initial=0.0) > tol:
        i = int(np.argmax(np.abs(np.diagonal(matrix))))
        raise DataError(f"nonzero diagonal at ({i}, {i})")
    return DissimilarityMatrix(_exact_symmetrize(matrix.copy()), view_index=view_index)
