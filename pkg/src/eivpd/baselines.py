"""OLS and higher-moment instrumental-variable baselines.

C3 instruments are products of pairs of demeaned observables; they are
relevant when the latent regressors are skewed.  C4 instruments are
products of triples with the Gaussian part removed, so they only carry
fourth-order (kurtosis) information.  Both estimators are two-stage least
squares on demeaned data.

A product of observables is a valid instrument as long as no single error
(U_k or eps) enters every factor, which rules out x_k^2, y^2, x_k^3, y^3.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, combinations_with_replacement

import numpy as np

from .errors import SingularDesign, Underidentified
from .report import EstimateReport


@dataclass(frozen=True)
class IvSpec:
    instrument_kind: str = "C3"
    ridge: float = 1e-10
    # "full": every triple of (x_1..x_K, y) except pure cubes;
    # "restricted": x-only triples plus x_i x_j y with i < j
    c4_set: str = "full"

    def __post_init__(self):
        if self.c4_set not in ("full", "restricted"):
            raise ValueError("c4_set must be 'full' or 'restricted'")
        kind = self.instrument_kind.upper()
        if kind not in ("C3", "C4"):
            raise ValueError(f"instrument_kind must be C3 or C4, got {self.instrument_kind!r}")
        object.__setattr__(self, "instrument_kind", kind)
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")


def ols(data) -> EstimateReport:
    """Least squares of Y on (1, X); slopes in ``b_hat``, intercept in diagnostics."""
    x, y = data.x, data.y
    design = np.column_stack([np.ones(data.n), x])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise SingularDesign("OLS design matrix is rank deficient")
    xm, ym = x.mean(axis=0), y.mean()
    xc, yc = x - xm, y - ym
    slopes = np.linalg.solve(xc.T @ xc, xc.T @ yc)
    intercept = float(ym - xm @ slopes)
    return EstimateReport("OLS", tuple(slopes), diagnostics={"intercept": intercept})


def _demeaned(data):
    xc = data.x - data.x.mean(axis=0)
    yc = data.y - data.y.mean()
    return xc, yc


def _plug_cov(a, b):
    # inputs already demeaned
    return float(np.mean(a * b))


def build_instruments(data, spec: IvSpec = IvSpec()) -> np.ndarray:
    """N x m instrument matrix built from demeaned products.

    C3: x_i x_j (i < j) and x_k y.
    C4 (``c4_set="full"``): every product a b c of three of the demeaned
    columns (x_1, ..., x_K, y), not all the same column.  The restricted set
    keeps the x-only triples and x_i x_j y with i < j.  Each C4 product has
    the linear terms removed that make it uncorrelated with any jointly
    normal component.
    """
    if data.n < 10:
        raise ValueError("instrument construction needs at least 10 observations")
    xc, yc = _demeaned(data)
    K = data.K
    cols = []
    if spec.instrument_kind == "C3":
        for i, j in combinations(range(K), 2):
            cols.append(xc[:, i] * xc[:, j])
        for k in range(K):
            cols.append(xc[:, k] * yc)
    elif spec.c4_set == "full":
        v = [xc[:, k] for k in range(K)] + [yc]
        for i, j, l in combinations_with_replacement(range(K + 1), 3):
            if i == j == l:
                continue
            cols.append(_gauss_corrected(v[i], v[j], v[l]))
    else:
        v = [xc[:, k] for k in range(K)]
        for i, j, l in combinations_with_replacement(range(K), 3):
            if i == j == l:
                continue
            cols.append(_gauss_corrected(v[i], v[j], v[l]))
        for i, j in combinations(range(K), 2):
            cols.append(_gauss_corrected(v[i], v[j], yc))
    if not cols:
        return np.empty((data.n, 0))
    return np.column_stack(cols)


def _gauss_corrected(a, b, c):
    return a * b * c - a * _plug_cov(b, c) - b * _plug_cov(a, c) - c * _plug_cov(a, b)


def iv_estimate(data, spec: IvSpec = IvSpec()) -> EstimateReport:
    """Two-stage least squares with C3 or C4 instruments.

    A ridge (``spec.ridge`` times the mean diagonal) is added to the
    instrument Gram matrix when its condition number exceeds 1e12.  The
    diagnostics carry two weak-instrument measures: the smallest singular
    value of Z'X, and the Cragg-Donald minimum-eigenvalue statistic, whose
    value below 10 sets ``weak_instruments``.
    """
    z = build_instruments(data, spec)
    n, m = z.shape
    K = data.K
    if m < K:
        raise Underidentified(f"{spec.instrument_kind} gives {m} instruments for {K} regressors")
    xc, yc = _demeaned(data)
    gram = z.T @ z
    ridged = False
    if np.linalg.cond(gram) > 1e12:
        gram = gram + spec.ridge * np.trace(gram) / m * np.eye(m)
        ridged = True
    zx = z.T @ xc
    first = np.linalg.solve(gram, zx)  # m x K first-stage coefficients
    xhat = z @ first
    lhs = xhat.T @ xc
    if np.linalg.matrix_rank(lhs) < K:
        raise SingularDesign("second-stage matrix is singular")
    b = np.linalg.solve(lhs, xhat.T @ yc)

    sv_min = float(np.linalg.svd(zx, compute_uv=False).min())
    v = xc - xhat
    sigma_vv = v.T @ v / max(n - m, 1)
    cd = _cragg_donald(xhat.T @ xc, sigma_vv, m)
    diagnostics = {
        "n_instruments": m,
        "ridge_applied": ridged,
        "min_sv_cross_moment": sv_min,
        "cross_moment_weak": sv_min < 1e-3 * n,
        "cragg_donald": cd,
        "weak_instruments": cd < 10.0,
    }
    return EstimateReport(spec.instrument_kind, tuple(b), diagnostics=diagnostics)


def _cragg_donald(xpx, sigma_vv, m):
    """Minimum eigenvalue of Sigma^{-1/2} X'P_Z X Sigma^{-1/2} / m."""
    w, q = np.linalg.eigh(sigma_vv)
    if np.any(w <= 0):
        return float("inf")
    root_inv = q @ np.diag(w**-0.5) @ q.T
    mat = root_inv @ (0.5 * (xpx + xpx.T)) @ root_inv / m
    return float(np.linalg.eigvalsh(mat).min())


def c3(data) -> EstimateReport:
    return iv_estimate(data, IvSpec("C3"))


def c4(data) -> EstimateReport:
    return iv_estimate(data, IvSpec("C4"))
