"""Second-derivative curve bands, the constant-fit check and the
observational-equivalence construction.

Curves are the plug-in log-CF second derivatives at the point
(u, ..., u, 0): every regressor frequency equal to u and the outcome
frequency zero.  Across Monte Carlo replications the pointwise 5/50/95%
quantiles of the real and imaginary parts form bands.  If no constant fits
inside a pair's band envelope, that pair shows variation away from the
origin, which is what identification needs; a jointly normal latent vector
gives flat curves.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .datagen import DesignSpec, gen_dataset, replication_seeds
from .ecf import LineSums, estimation_pairs, pair_label
from .errors import InvalidScaling

QUANTILES = (0.05, 0.50, 0.95)
BAND_COLUMNS = ("u", "q05_re", "q50_re", "q95_re", "q05_im", "q50_im", "q95_im", "n_reps")


def default_u_grid(size: int = 41, u_max: float = 1.0) -> np.ndarray:
    g = np.linspace(-u_max, u_max, size)
    if size % 2:
        g[size // 2] = 0.0
    return g


def curve_values(data, u_grid, denom_floor: float = 0.05):
    """pd_hat along (u, ..., u, 0) for every pair.

    Returns (values, mags): complex array (len(u_grid), n_pairs) and |s0|
    per node.  Nodes with |s0| below ``denom_floor`` hold NaN.
    """
    pairs = estimation_pairs(data.K)
    sums = LineSums(data.columns(), pairs)
    direction = np.append(np.ones(data.K), 0.0)
    vals, mags = sums.pd(direction, np.asarray(u_grid, dtype=float))
    vals = np.where((mags >= denom_floor)[:, None], vals, complex(math.nan, math.nan))
    return vals, mags


@dataclass(eq=False)
class DerivativeCurveSet:
    """Per-replication curves and their pointwise quantile bands.

    ``values`` has shape (reps, nodes, pairs); NaN marks nodes where the
    ECF denominator fell below the floor in that replication.
    """

    u_grid: np.ndarray
    pairs: list
    values: np.ndarray
    design: Optional[DesignSpec] = None
    quantiles: tuple = QUANTILES
    bands_re: np.ndarray = field(init=False)
    bands_im: np.ndarray = field(init=False)
    n_valid: np.ndarray = field(init=False)

    def __post_init__(self):
        self.u_grid = np.asarray(self.u_grid, dtype=float)
        ok = ~np.isnan(self.values.real)
        self.n_valid = ok.sum(axis=0)
        q = np.asarray(self.quantiles)
        with np.errstate(all="ignore"):
            self.bands_re = _nanquantile(self.values.real, q)
            self.bands_im = _nanquantile(self.values.imag, q)

    @property
    def reps(self) -> int:
        return self.values.shape[0]

    @property
    def truncated_nodes(self) -> dict:
        """pair label -> list of u values where some replication was dropped."""
        out = {}
        for j, p in enumerate(self.pairs):
            bad = self.u_grid[self.n_valid[:, j] < self.reps]
            if bad.size:
                out[pair_label(*p)] = [float(v) for v in bad]
        return out

    def band_rows(self, pair_index: int) -> list:
        rows = []
        for i, u in enumerate(self.u_grid):
            re = self.bands_re[:, i, pair_index]
            im = self.bands_im[:, i, pair_index]
            rows.append([float(u), *map(float, re), *map(float, im), int(self.n_valid[i, pair_index])])
        return rows

    def with_quantiles(self, quantiles) -> "DerivativeCurveSet":
        return DerivativeCurveSet(self.u_grid, self.pairs, self.values, self.design, tuple(quantiles))


def _nanquantile(a, q):
    # all-NaN columns give NaN without a warning
    out = np.full((len(q),) + a.shape[1:], math.nan)
    has = ~np.all(np.isnan(a), axis=0)
    if has.any():
        out[:, has] = np.nanquantile(a[:, has], q, axis=0)
    return out


def curve_bands(design: DesignSpec, reps: int = 100, u_grid=None, master_seed: Optional[int] = None, denom_floor: float = 0.05) -> DerivativeCurveSet:
    """Simulate ``reps`` datasets from ``design`` and band their curves.

    Replication seeds are derived from ``master_seed`` (default: the
    design's own seed).
    """
    if reps < 20:
        raise ValueError("curve bands need at least 20 replications")
    grid = default_u_grid() if u_grid is None else np.asarray(u_grid, dtype=float)
    seed = design.seed if master_seed is None else master_seed
    vals = []
    for s in replication_seeds(seed, reps):
        data = gen_dataset(design.replace(seed=s), keep_latent=False)
        vals.append(curve_values(data, grid, denom_floor)[0])
    return DerivativeCurveSet(grid, estimation_pairs(design.K), np.array(vals), design)


@dataclass(frozen=True)
class ConstantFitVerdict:
    pair: str
    verdict: str
    margin: float
    margin_re: float
    margin_im: float


def constant_fit_check(curves: DerivativeCurveSet, lower: int = 0, upper: int = -1) -> list:
    """Does a constant fit inside each pair's band envelope?

    For a pair, the real-part gap is max_u q_low - min_u q_high (likewise
    for the imaginary part).  A positive gap in either part means no
    constant stays within the bands at every u: verdict "variation".  The
    reported margin is the larger of the two gaps.  Only nodes where every
    replication survived the denominator floor enter, so truncation cannot
    bias the envelope.
    """
    out = []
    for j, p in enumerate(curves.pairs):
        complete = curves.n_valid[:, j] == curves.reps
        gaps = []
        for bands in (curves.bands_re, curves.bands_im):
            lo, hi = bands[lower, :, j], bands[upper, :, j]
            keep = complete & ~(np.isnan(lo) | np.isnan(hi))
            if not keep.any():
                gaps.append(-math.inf)
                continue
            gaps.append(float(np.max(lo[keep]) - np.min(hi[keep])))
        margin = max(gaps)
        verdict = "variation" if margin > 0 else "no-variation"
        out.append(ConstantFitVerdict(pair_label(*p), verdict, margin, gaps[0], gaps[1]))
    return out


def verdict_text(verdicts, curves: Optional[DerivativeCurveSet] = None) -> str:
    lines = []
    if curves is not None:
        lines.append(f"reps = {curves.reps}")
        lines.append(f"u_min = {curves.u_grid.min()!r}")
        lines.append(f"u_max = {curves.u_grid.max()!r}")
    for v in verdicts:
        lines.append(f"{v.pair}.verdict = {v.verdict}")
        lines.append(f"{v.pair}.margin = {v.margin!r}")
        lines.append(f"{v.pair}.margin_re = {v.margin_re!r}")
        lines.append(f"{v.pair}.margin_im = {v.margin_im!r}")
    if curves is not None:
        for label, us in sorted(curves.truncated_nodes.items()):
            lines.append(f"{label}.truncated_u = " + ",".join(repr(u) for u in us))
    return "\n".join(lines) + "\n"


def write_band_csvs(curves: DerivativeCurveSet, out_dir, prefix: str = "bands", header_lines=()) -> list:
    """One CSV per pair; returns the written paths."""
    import pathlib

    out_dir = pathlib.Path(out_dir)
    paths = []
    for j, p in enumerate(curves.pairs):
        path = out_dir / f"{prefix}_{pair_label(*p)}.csv"
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(BAND_COLUMNS)
            for row in curves.band_rows(j):
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        paths.append(path)
    return paths


@dataclass(frozen=True)
class EquivalenceReport:
    """Outcome of the rescaled-coefficient construction on one latent draw."""

    c: tuple
    beta_base: tuple
    beta_tilde: tuple
    max_abs_diff_x: float
    max_abs_diff_y: float
    corr_xstar_eps: tuple
    threshold: float
    n_obs: int
    data_scale: float = 1.0

    @property
    def observables_match(self) -> bool:
        """Equal up to floating-point rounding (sums are reassociated)."""
        tol = 1e-12 * max(1.0, self.data_scale)
        return self.max_abs_diff_x <= tol and self.max_abs_diff_y <= tol

    @property
    def dependence_detected(self) -> bool:
        return abs(self.corr_xstar_eps[0]) > self.threshold

    def to_text(self) -> str:
        lines = [
            "c = " + ",".join(repr(v) for v in self.c),
            "beta_base = " + ",".join(repr(v) for v in self.beta_base),
            "beta_tilde = " + ",".join(repr(v) for v in self.beta_tilde),
            f"n_obs = {self.n_obs}",
            f"max_abs_diff_x = {self.max_abs_diff_x!r}",
            f"max_abs_diff_y = {self.max_abs_diff_y!r}",
            f"observables_match = {str(self.observables_match).lower()}",
        ]
        for k, r in enumerate(self.corr_xstar_eps):
            lines.append(f"corr_xstar{k + 1}_eps = {r!r}")
        lines.append(f"dependence_threshold = {self.threshold!r}")
        lines.append(f"dependence_detected = {str(self.dependence_detected).lower()}")
        return "\n".join(lines) + "\n"


def tilde_model(x_star, u, eps, beta, c):
    """Rescaled latent story producing the same observables.

    The measurement errors are folded into the regressors, the slopes are
    multiplied by ``c`` and the outcome error absorbs the difference.
    Returns (x_star_tilde, u_tilde, eps_tilde, beta_tilde).
    """
    beta = np.asarray(beta, dtype=float)
    c = np.asarray(c, dtype=float)
    x_t = x_star + u
    u_t = np.zeros_like(u)
    eps_t = eps + (x_star * (1.0 - c) - c * u) @ beta
    return x_t, u_t, eps_t, c * beta


def equivalence_demo(base: DesignSpec, c) -> EquivalenceReport:
    """Check that the rescaled latent story reproduces the observables.

    Raises InvalidScaling when some c_k is 0 or 1 (no rescaling or a
    degenerate one).
    """
    c = tuple(float(v) for v in c)
    if len(c) != base.K:
        raise ValueError(f"c needs K={base.K} entries")
    if any(v in (0.0, 1.0) for v in c):
        raise InvalidScaling("scaling factors must differ from 0 and 1")
    if all(m.is_degenerate for m in base.meas_error_law) and base.eps_law.is_degenerate:
        raise ValueError("the base design needs measurement error or outcome noise")
    data = gen_dataset(base, keep_latent=True)
    lat = data.latent
    x_t, u_t, eps_t, beta_t = tilde_model(lat.x_star, lat.u, lat.eps, base.beta_true, c)
    alpha = np.asarray(base.intercepts)
    x_tilde = alpha[: base.K] + x_t + u_t
    y_tilde = alpha[base.K] + x_t @ beta_t + eps_t
    corr = tuple(float(np.corrcoef(x_t[:, k], eps_t)[0, 1]) for k in range(base.K))
    return EquivalenceReport(
        c,
        tuple(base.beta_true),
        tuple(float(v) for v in beta_t),
        float(np.max(np.abs(x_tilde - data.x))),
        float(np.max(np.abs(y_tilde - data.y))),
        corr,
        4.0 / math.sqrt(base.n_obs),
        base.n_obs,
        float(max(np.max(np.abs(data.x)), np.max(np.abs(data.y)))),
    )
