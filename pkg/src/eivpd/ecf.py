"""Empirical characteristic-function sums and log-CF second derivatives.

For a frequency point ``s`` in R^{K+1} (one entry per regressor, the last
for Y) write ``t_n = <s, (X_n, Y_n)>``.  The sums

    s0       = mean_n exp(i t_n)
    s1[a]    = mean_n A_n exp(i t_n)
    s2[a, b] = mean_n A_n B_n exp(i t_n)

with A, B ranging over the columns (X_1, ..., X_K, Y) give the plug-in
second derivative of the log characteristic function,

    d2 phi / ds_a ds_b  ~=  s1[a] s1[b] / s0**2 - s2[a, b] / s0.

The estimator evaluates this along the line s = (b_1 u, ..., b_K u, -u).
Indices are 0-based for regressors; ``"y"`` selects the outcome.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DenominatorUnderflow, InsufficientData

Y = "y"
Index = Union[int, str]


def column_index(k: Index, K: int) -> int:
    """Map a regressor index (0..K-1) or ``"y"`` to a column of [X, Y]."""
    if isinstance(k, str):
        if k.lower() == Y:
            return K
        raise IndexError(f"unknown column {k!r}")
    k = int(k)
    if not 0 <= k < K:
        raise IndexError(f"regressor index {k} out of range for K={K}")
    return k


def pair_label(k1: Index, k2: Index) -> str:
    """``(0, 1) -> "s1s2"``, ``(0, "y") -> "s1sy"``."""

    def one(k):
        return "sy" if isinstance(k, str) else f"s{int(k) + 1}"

    return one(k1) + one(k2)


def estimation_pairs(K: int) -> list:
    """All pairs k1 < k2 followed by every (k1, y): K(K-1)/2 + K of them."""
    pairs = [(a, b) for a in range(K) for b in range(a + 1, K)]
    return pairs + [(a, Y) for a in range(K)]


@dataclass(frozen=True, eq=False)
class WeightedEcfSums:
    s0: complex
    s1: np.ndarray
    s2: np.ndarray
    point: np.ndarray

    @property
    def K(self) -> int:
        return self.s1.shape[0] - 1

    @property
    def u(self) -> float:
        """Frequency along the estimation line (the negated Y coordinate)."""
        return float(-self.point[-1])


@dataclass(frozen=True)
class PdEstimate:
    value: complex
    pair: tuple
    at_u: float
    denom_mag: float


def ecf_sums_at(data, point) -> WeightedEcfSums:
    """Weighted ECF sums at an arbitrary point of R^{K+1}.

    One pass over the observations; every mean is a pairwise (numpy
    contiguous-axis) sum, so results are reproducible and well conditioned.
    """
    cols = data.columns()
    point = np.asarray(point, dtype=float).reshape(-1)
    if point.shape[0] != cols.shape[1]:
        raise ValueError(f"point must have K+1={cols.shape[1]} entries")
    n = cols.shape[0]
    t = cols @ point
    c, s = np.cos(t), np.sin(t)
    a = np.ascontiguousarray(cols.T)
    s0 = complex(_row_means(c), _row_means(s))
    s1 = _row_means(a * c) + 1j * _row_means(a * s)
    prods = a[:, None, :] * a[None, :, :]
    s2 = _row_means(prods * c) + 1j * _row_means(prods * s)
    return WeightedEcfSums(s0, s1, s2, point)


def _row_means(arr: np.ndarray):
    # contiguous last-axis reductions use numpy's pairwise summation
    arr = np.ascontiguousarray(arr)
    return arr.sum(axis=-1) / arr.shape[-1]


def weighted_sums(data, b, u: float) -> WeightedEcfSums:
    """Sums at s = (b_1 u, ..., b_K u, -u)."""
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.shape[0] != data.K:
        raise ValueError(f"b must have K={data.K} entries")
    return ecf_sums_at(data, np.append(b * u, -u))


def pd_formula(s0, s1a, s1b, s2ab):
    """Ratio-minus-ratio second derivative; broadcasts over arrays."""
    return s1a * s1b / s0**2 - s2ab / s0


def pd_hat(sums: WeightedEcfSums, k1: Index, k2: Index, denom_floor: float = 0.0) -> PdEstimate:
    K = sums.K
    a, b = column_index(k1, K), column_index(k2, K)
    mag = abs(sums.s0)
    if mag == 0.0 or mag < denom_floor:
        raise DenominatorUnderflow(mag, sums.u)
    value = complex(pd_formula(sums.s0, sums.s1[a], sums.s1[b], sums.s2[a, b]))
    return PdEstimate(value, (k1, k2), sums.u, mag)


def sample_cov(data, k1: Index, k2: Index) -> float:
    """Plug-in covariance with divisor N: mean(AB) - mean(A) mean(B)."""
    if data.n < 2:
        raise InsufficientData("sample covariance needs at least 2 observations")
    cols = np.ascontiguousarray(data.columns().T)
    a = cols[column_index(k1, data.K)]
    b = cols[column_index(k2, data.K)]
    return float(_row_means(a * b) - _row_means(a) * _row_means(b))


def cov_matrix(cols: np.ndarray) -> np.ndarray:
    """Divisor-N covariance of the columns of an N x p matrix."""
    c = cols - cols.mean(axis=0)
    return c.T @ c / cols.shape[0]


def _phases(t: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """exp(i u t) for every node u (rows) and observation (columns).

    Uniform positive grids u_m = m h are built by repeated multiplication
    with exp(i h t); anything else falls back to direct evaluation.
    """
    nodes = np.asarray(nodes, dtype=float)
    m = nodes.shape[0]
    if m > 1 and nodes[0] > 0:
        h = nodes[0]
        steps = nodes / h
        if np.allclose(steps, np.arange(1, m + 1), rtol=0, atol=1e-9):
            out = np.empty((m, t.shape[0]), dtype=complex)
            z = np.exp(1j * h * t)
            out[0] = z
            for j in range(1, m):
                np.multiply(out[j - 1], z, out=out[j])
            return out
    return np.exp(1j * np.outer(nodes, t))


class LineSums:
    """Vectorised ECF sums along ``s = u * direction`` for many ``u``.

    ``columns`` is the N x (K+1) matrix [X, Y]; ``pairs`` lists the column
    pairs whose second-moment sums are needed.

    The second derivative is unchanged by shifting any column or adding a
    constant to every phase, so the weights use centred columns and the
    phase argument is centred too.  When the data make the phase argument
    exactly constant the phases are then exactly 1.
    """

    def __init__(self, columns: np.ndarray, pairs):
        raw = np.ascontiguousarray(columns, dtype=float)
        self.raw = raw
        self.columns = raw - raw.mean(axis=0)
        n, p = self.columns.shape
        self.pairs = [(column_index(a, p - 1), column_index(b, p - 1)) for a, b in pairs]
        prods = [self.columns[:, a] * self.columns[:, b] for a, b in self.pairs]
        self._w = np.column_stack([np.ones(n), self.columns] + prods)
        self.n = n
        self.p = p

    def phase_argument(self, direction) -> np.ndarray:
        t = self.raw @ np.asarray(direction, dtype=float)
        return t - t.mean()

    def __call__(self, direction, nodes):
        """Return (s0, s1, s2) with shapes (M,), (M, K+1), (M, n_pairs)."""
        e = _phases(self.phase_argument(direction), nodes)
        sums = (e @ self._w) / self.n
        p = self.p
        return sums[:, 0], sums[:, 1 : 1 + p], sums[:, 1 + p :]

    def pd(self, direction, nodes):
        """Second-derivative estimates for every pair, plus |s0| per node."""
        s0, s1, s2 = self(direction, nodes)
        a = [i for i, _ in self.pairs]
        b = [j for _, j in self.pairs]
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = pd_formula(s0[:, None], s1[:, a], s1[:, b], s2)
        return vals, np.abs(s0)
