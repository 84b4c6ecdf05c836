"""Multistart Nelder-Mead maximisation of the PD objective over a box."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .baselines import ols
from .errors import EivError, GridDegenerate, OptimizationFailed
from .objective import Objective, ObjectiveSpec
from .report import EstimateReport


@dataclass(frozen=True)
class SearchConfig:
    """Search box, starting points and stopping rules.

    ``bounds=None`` and ``starts=None`` mean "derive from the OLS fit": the
    box is b_ols +/- (5 |b_ols| + 1) per axis and the starts are b_ols, its
    2K axis perturbations by +/- ``perturb`` and one uniform draw from the
    box seeded by ``seed``.
    """

    bounds: Optional[tuple] = None
    starts: Optional[tuple] = None
    tol_x: float = 1e-6
    tol_f: float = 1e-10
    max_iter: int = 2000
    seed: int = 0
    perturb: float = 0.5
    step: float = 0.2
    n_probes: int = 8

    def __post_init__(self):
        if self.bounds is not None:
            b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
            if any(not lo < hi for lo, hi in b):
                raise ValueError("each bound needs lo < hi")
            object.__setattr__(self, "bounds", b)
        if self.starts is not None:
            object.__setattr__(self, "starts", tuple(tuple(float(v) for v in s) for s in self.starts))
        if self.bounds is not None and self.starts is not None:
            for s in self.starts:
                if len(s) != len(self.bounds) or any(not lo <= v <= hi for v, (lo, hi) in zip(s, self.bounds)):
                    raise ValueError(f"start {s} lies outside the search box")
        if self.max_iter < 1 or self.tol_x <= 0 or self.tol_f < 0:
            raise ValueError("invalid stopping rule")


def default_bounds(b_ols) -> tuple:
    b = np.asarray(b_ols, dtype=float)
    half = 5.0 * np.abs(b) + 1.0
    return tuple(zip(b - half, b + half))


def _fold(x, lo, hi):
    """Reflect coordinates back into [lo, hi]."""
    x = np.array(x, dtype=float)
    width = hi - lo
    y = np.mod(x - lo, 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    return lo + y


class _Abort(Exception):
    pass


@dataclass
class LocalResult:
    x: np.ndarray
    f: float
    n_evals: int
    converged: bool
    diameter: float
    spread: float
    start: np.ndarray


def nelder_mead_max(
    func: Callable,
    start,
    lo,
    hi,
    tol_x: float = 1e-6,
    tol_f: float = 1e-10,
    max_iter: int = 2000,
    step: float = 0.2,
) -> LocalResult:
    """Maximise ``func`` from ``start`` inside the box [lo, hi].

    Trial points leaving the box are reflected back in.  ``func`` may raise
    GridDegenerate (treated as -inf); a non-finite value other than -inf
    aborts the run with OptimizationFailed.  Stops when the simplex diameter
    drops below ``tol_x`` or the spread of vertex values below ``tol_f``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    start = _fold(start, lo, hi)
    dim = start.shape[0]
    n_evals = 0

    def cost(x):
        nonlocal n_evals
        n_evals += 1
        try:
            v = func(x)
        except GridDegenerate:
            return math.inf
        if math.isnan(v) or v == math.inf:
            raise _Abort
        return -v

    pts = [start]
    for i in range(dim):
        x = start.copy()
        h = step * min(1.0, (hi[i] - lo[i]) / 2.0)
        x[i] = x[i] + h if x[i] + h <= hi[i] else x[i] - h
        pts.append(x)
    try:
        vals = [cost(p) for p in pts]
    except _Abort:
        raise OptimizationFailed("objective not finite at the initial simplex") from None
    sim = np.array(pts)
    fv = np.array(vals)

    converged = False
    diameter = spread = math.inf
    it = 0
    try:
        while it < max_iter:
            order = np.argsort(fv, kind="stable")
            sim, fv = sim[order], fv[order]
            diameter = float(np.max(np.linalg.norm(sim[1:] - sim[0], axis=1)))
            spread = float(fv[-1] - fv[0]) if np.isfinite(fv).all() else math.inf
            if diameter < tol_x or spread < tol_f:
                converged = True
                break
            it += 1
            centroid = sim[:-1].mean(axis=0)
            xr = _fold(centroid + (centroid - sim[-1]), lo, hi)
            fr = cost(xr)
            if fr < fv[0]:
                xe = _fold(centroid + 2.0 * (centroid - sim[-1]), lo, hi)
                fe = cost(xe)
                if fe < fr:
                    sim[-1], fv[-1] = xe, fe
                else:
                    sim[-1], fv[-1] = xr, fr
                continue
            if fr < fv[-2]:
                sim[-1], fv[-1] = xr, fr
                continue
            if fr < fv[-1]:
                xc = _fold(centroid + 0.5 * (xr - centroid), lo, hi)
            else:
                xc = _fold(centroid + 0.5 * (sim[-1] - centroid), lo, hi)
            fc = cost(xc)
            if fc < min(fr, fv[-1]):
                sim[-1], fv[-1] = xc, fc
                continue
            for j in range(1, dim + 1):
                sim[j] = sim[0] + 0.5 * (sim[j] - sim[0])
                fv[j] = cost(sim[j])
    except _Abort:
        raise OptimizationFailed("objective became non-finite") from None
    best = int(np.argmin(fv))
    return LocalResult(sim[best].copy(), -float(fv[best]), n_evals, converged, diameter, spread, start)


def _starts_and_bounds(data, cfg: SearchConfig, func):
    b_ols = None
    if cfg.bounds is None or cfg.starts is None:
        try:
            b_ols = np.array(ols(data).b_hat)
        except EivError:
            b_ols = None
    if cfg.bounds is not None:
        bounds = cfg.bounds
    elif b_ols is not None:
        bounds = default_bounds(b_ols)
    else:
        bounds = tuple((-5.0, 5.0) for _ in range(data.K))
    lo = np.array([a for a, _ in bounds])
    hi = np.array([b for _, b in bounds])
    if cfg.starts is not None:
        starts = [np.array(s) for s in cfg.starts]
    else:
        if b_ols is not None:
            centre = b_ols
        else:
            # no OLS anchor: coarse lattice search picks the centre
            centre = grid_refine(data, None, bounds, 5, objective=func)
        centre = np.clip(centre, lo, hi)
        starts = [centre]
        for k in range(data.K):
            for sign in (1.0, -1.0):
                s = centre.copy()
                s[k] += sign * cfg.perturb
                starts.append(np.clip(s, lo, hi))
        rng = np.random.default_rng(cfg.seed)
        starts.append(lo + (hi - lo) * rng.random(data.K))
    return bounds, lo, hi, starts


def maximize(data, spec: ObjectiveSpec = ObjectiveSpec(), cfg: SearchConfig = SearchConfig(), objective=None) -> EstimateReport:
    """PD estimate: argmax of Q_N over the search box.

    ``objective`` replaces Q_N by any callable of b (used for testing the
    search itself).  The best terminal point over all starts wins; ties go
    to the lexicographically smallest b.
    """
    func = objective if objective is not None else Objective(data, spec)
    bounds, lo, hi, starts = _starts_and_bounds(data, cfg, func)
    results = []
    failures = 0
    n_evals = 0
    for s in starts:
        try:
            r = nelder_mead_max(func, s, lo, hi, cfg.tol_x, cfg.tol_f, cfg.max_iter, cfg.step)
        except OptimizationFailed:
            failures += 1
            continue
        n_evals += r.n_evals
        if math.isfinite(r.f):
            results.append(r)
        else:
            failures += 1
    if not results:
        raise OptimizationFailed("every start ended in a degenerate region of the objective")
    best = max(results, key=lambda r: (r.f, tuple(-v for v in r.x)))
    terminal = np.array([r.f for r in results])
    xs = np.array([r.x for r in results])

    rng = np.random.default_rng(cfg.seed + 1)
    probes = []
    for _ in range(cfg.n_probes):
        try:
            probes.append(func(lo + (hi - lo) * rng.random(data.K)))
        except GridDegenerate:
            probes.append(-math.inf)
        n_evals += 1
    probes = np.array(probes)
    same_value = terminal.max() - terminal.min() < cfg.tol_f
    distinct_points = len(results) > 1 and float(np.max(np.ptp(xs, axis=0))) > math.sqrt(cfg.tol_x)
    finite_probes = probes[np.isfinite(probes)]
    flat_probes = finite_probes.size == probes.size and probes.size > 0 and np.ptp(np.append(finite_probes, best.f)) < cfg.tol_f
    flat = bool((same_value and distinct_points) or flat_probes)

    diagnostics = {
        "n_starts": len(starts),
        "failed_starts": failures,
        "bounds_lo": tuple(lo),
        "bounds_hi": tuple(hi),
        "simplex_diameter": best.diameter,
        "objective_spread": best.spread,
        "terminal_spread": float(terminal.max() - terminal.min()),
        "on_boundary": bool(np.any(np.isclose(best.x, lo) | np.isclose(best.x, hi))),
    }
    return EstimateReport(
        "PD",
        tuple(best.x),
        objective_at_opt=best.f,
        n_evals=n_evals,
        converged=best.converged,
        start_used=tuple(best.start),
        flat_objective=flat,
        diagnostics=diagnostics,
    )


def grid_refine(data, spec: ObjectiveSpec, box, per_axis: int, objective=None) -> np.ndarray:
    """Best node of a per_axis^K lattice over ``box`` (first wins on ties)."""
    if per_axis < 3:
        raise ValueError("per_axis must be at least 3")
    func = objective if objective is not None else Objective(data, spec)
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in box]
    best, best_val = None, -math.inf
    for node in itertools.product(*axes):
        b = np.array(node)
        try:
            v = func(b)
        except GridDegenerate:
            continue
        if best is None or v > best_val:
            best, best_val = b, v
    if best is None:
        best = np.array([0.5 * (lo + hi) for lo, hi in box])
    return best


def estimate_pd(data, spec: ObjectiveSpec = ObjectiveSpec(), cfg: SearchConfig = SearchConfig()) -> EstimateReport:
    return maximize(data, spec, cfg)


__all__ = ["SearchConfig", "maximize", "grid_refine", "nelder_mead_max", "default_bounds", "estimate_pd"]
