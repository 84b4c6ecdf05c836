"""Monte Carlo replication engine: per-design studies, the six-cell
comparison table and the sqrt(N) consistency sweep."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .baselines import c3, c4, ols
from .datagen import DesignSpec, gen_dataset, preset_design, replication_seeds
from .errors import EivError
from .objective import ObjectiveSpec
from .optimizer import SearchConfig, maximize
from .report import METHODS, EstimateReport

TABLE1_DESIGNS = ("1", "2", "3")
TABLE1_LABELS = {"1": "beta(1,2)", "2": "chisquare(5)", "3": "t(5)"}


@dataclass(frozen=True)
class McStudySpec:
    design: DesignSpec
    reps: int = 100
    methods: tuple = METHODS
    objective: ObjectiveSpec = ObjectiveSpec()
    search: SearchConfig = SearchConfig()
    master_seed: int = 0

    def __post_init__(self):
        if self.reps < 2:
            raise ValueError("a study needs at least 2 replications")
        methods = tuple(m.upper() for m in self.methods)
        if not methods:
            raise ValueError("no methods requested")
        bad = [m for m in methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}")
        # canonical order so the output does not depend on how methods were listed
        object.__setattr__(self, "methods", tuple(m for m in METHODS if m in methods))


@dataclass(frozen=True)
class ReplicationRecord:
    rep: int
    seed: int
    method: str
    report: Optional[EstimateReport]
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.report is not None


def run_method(method: str, data, objective: ObjectiveSpec = ObjectiveSpec(), search: SearchConfig = SearchConfig()) -> EstimateReport:
    if method == "PD":
        return maximize(data, objective, search)
    if method == "OLS":
        return ols(data)
    if method == "C3":
        return c3(data)
    if method == "C4":
        return c4(data)
    raise ValueError(f"unknown method {method!r}")


def _one_replication(args):
    spec, rep, seed = args
    data = gen_dataset(spec.design.replace(seed=seed), keep_latent=False)
    out = []
    for m in spec.methods:
        try:
            rec = ReplicationRecord(rep, seed, m, run_method(m, data, spec.objective, spec.search))
        except (EivError, ArithmeticError, np.linalg.LinAlgError) as exc:
            rec = ReplicationRecord(rep, seed, m, None, type(exc).__name__)
        out.append(rec)
    return out


def worker_count(threads: Optional[int] = None) -> int:
    """--threads, else EIV_THREADS, else 1."""
    if threads is None:
        env = os.environ.get("EIV_THREADS", "").strip()
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("thread count must be positive")
    return threads


def simulate(spec: McStudySpec, threads: Optional[int] = None) -> list:
    """All replication records, ordered by (rep, method)."""
    seeds = replication_seeds(spec.master_seed, spec.reps)
    jobs = [(spec, r, s) for r, s in enumerate(seeds)]
    workers = min(worker_count(threads), spec.reps)
    if workers == 1:
        chunks = [_one_replication(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_one_replication, jobs, chunksize=max(1, spec.reps // (4 * workers))))
    return [rec for chunk in chunks for rec in chunk]


@dataclass(frozen=True)
class MethodSummary:
    method: str
    n_ok: int
    n_failed: int
    mean: tuple
    sd: tuple
    q05: tuple
    q50: tuple
    q95: tuple
    weak_rate: float = math.nan
    failures: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def status(self) -> str:
        return "MethodFailed" if self.n_ok == 0 else "ok"


def _moments(values: np.ndarray):
    """Mean and SD (divisor n-1) that do not depend on the order of values."""
    n = values.shape[0]
    mean = tuple(math.fsum(values[:, k]) / n for k in range(values.shape[1]))
    if n < 2:
        return mean, tuple(math.nan for _ in mean)
    sd = tuple(math.sqrt(math.fsum((values[:, k] - mean[k]) ** 2) / (n - 1)) for k in range(values.shape[1]))
    return mean, sd


def summarize_method(method: str, records, K: int) -> MethodSummary:
    recs = [r for r in records if r.method == method]
    ok = [r for r in recs if r.ok]
    failures = {}
    for r in recs:
        if not r.ok:
            failures[r.error] = failures.get(r.error, 0) + 1
    nan = tuple(math.nan for _ in range(K))
    if not ok:
        return MethodSummary(method, 0, len(recs), nan, nan, nan, nan, nan, math.nan, failures)
    vals = np.array([r.report.b_hat for r in ok])
    mean, sd = _moments(vals)
    q = np.quantile(vals, [0.05, 0.5, 0.95], axis=0)
    weak = [r.report.diagnostics["weak_instruments"] for r in ok if "weak_instruments" in r.report.diagnostics]
    weak_rate = sum(bool(w) for w in weak) / len(weak) if weak else math.nan
    return MethodSummary(method, len(ok), len(recs) - len(ok), mean, sd, *(tuple(float(v) for v in row) for row in q), weak_rate, failures)


@dataclass(frozen=True)
class McSummary:
    spec: McStudySpec
    methods: dict

    def __getitem__(self, method: str) -> MethodSummary:
        return self.methods[method]


def summarize(spec: McStudySpec, records) -> McSummary:
    return McSummary(spec, {m: summarize_method(m, records, spec.design.K) for m in spec.methods})


def run_study(spec: McStudySpec, long_csv=None, threads: Optional[int] = None, header_lines=()) -> McSummary:
    """Simulate, optionally write the per-replication CSV, and summarise.

    Failed fits are excluded from the moments and counted per method.
    """
    records = simulate(spec, threads)
    if long_csv is not None:
        write_long_csv(records, spec.design.K, long_csv, header_lines)
    return summarize(spec, records)


def long_header(K: int) -> list:
    return ["rep", "seed"] + EstimateReport.csv_header(K) + ["status"]


def long_rows(records, K: int) -> list:
    rows = []
    for r in records:
        if r.ok:
            rows.append([r.rep, r.seed] + r.report.csv_row() + ["ok"])
        else:
            rows.append([r.rep, r.seed, r.method] + ["nan"] * K + ["nan", 0, 0, "", 0, r.error])
    return rows


def write_long_csv(records, K: int, path, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(long_header(K))
        w.writerows(long_rows(records, K))


def read_long_csv(path) -> list:
    """Rows of the per-replication CSV as dicts (comment lines skipped)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


@dataclass(frozen=True)
class TableCell:
    design: str
    with_error: bool
    summary: McSummary


def table1(
    reps: int = 100,
    n_obs: int = 1000,
    master_seed: int = 0,
    methods=METHODS,
    objective: ObjectiveSpec = ObjectiveSpec(),
    search: SearchConfig = SearchConfig(),
    threads: Optional[int] = None,
    designs=TABLE1_DESIGNS,
    long_csv_dir=None,
    header_lines=(),
) -> list:
    """Three designs, each with and without N(0,1) measurement error.

    Each cell gets its own master seed derived from ``master_seed``.
    """
    cells = [(d, we) for d in designs for we in (False, True)]
    seeds = replication_seeds(master_seed, len(cells))
    out = []
    for (d, we), seed in zip(cells, seeds):
        spec = McStudySpec(preset_design(d, with_error=we, n_obs=n_obs), reps, tuple(methods), objective, search, seed)
        path = None
        if long_csv_dir is not None:
            import pathlib

            path = pathlib.Path(long_csv_dir) / f"reps_design{d}_{'error' if we else 'noerror'}.csv"
        out.append(TableCell(d, we, run_study(spec, path, threads, header_lines)))
    return out


TABLE_HEADER = ["design", "latent_law", "meas_error", "method", "mean_b1", "sd_b1", "q05_b1", "q50_b1", "q95_b1", "n_ok", "n_failed", "weak_rate", "status"]


def table_rows(cells) -> list:
    rows = []
    for cell in cells:
        for m, s in cell.summary.methods.items():
            rows.append(
                [
                    cell.design,
                    TABLE1_LABELS.get(cell.design, cell.design),
                    "N(0,1)" if cell.with_error else "none",
                    m,
                    repr(s.mean[0]),
                    repr(s.sd[0]),
                    repr(s.q05[0]),
                    repr(s.q50[0]),
                    repr(s.q95[0]),
                    s.n_ok,
                    s.n_failed,
                    "" if math.isnan(s.weak_rate) else repr(s.weak_rate),
                    s.status,
                ]
            )
    return rows


def write_table_csv(cells, path, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        w.writerows(table_rows(cells))


def format_table(cells) -> str:
    """Compact text layout: one row per method, 'mean (sd)' per cell."""
    methods = []
    for cell in cells:
        for m in cell.summary.methods:
            if m not in methods:
                methods.append(m)
    heads = [f"D{c.design}{'+U' if c.with_error else ''}" for c in cells]
    lines = ["method " + " ".join(f"{h:>14}" for h in heads)]
    for m in methods:
        parts = []
        for c in cells:
            s = c.summary.methods.get(m)
            parts.append(f"{'-':>14}" if s is None or s.n_ok == 0 else f"{s.mean[0]:6.2f} ({s.sd[0]:4.2f})".rjust(14))
        lines.append(f"{m:<6} " + " ".join(parts))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SweepRow:
    n_obs: int
    method: str
    rmse: float
    bias: float
    n_ok: int
    n_failed: int


def consistency_sweep(
    design: DesignSpec,
    n_values,
    reps: int = 100,
    methods=("PD",),
    master_seed: int = 0,
    objective: ObjectiveSpec = ObjectiveSpec(),
    search: SearchConfig = SearchConfig(),
    threads: Optional[int] = None,
) -> list:
    """RMSE of the first slope about its true value at each sample size."""
    n_values = [int(n) for n in n_values]
    if len(n_values) < 2 or any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ValueError("n_values must be strictly ascending with at least 2 entries")
    beta1 = design.beta_true[0]
    rows = []
    for n, seed in zip(n_values, replication_seeds(master_seed, len(n_values))):
        spec = McStudySpec(design.replace(n_obs=n), reps, tuple(methods), objective, search, seed)
        records = simulate(spec, threads)
        for m in spec.methods:
            est = np.array([r.report.b_hat[0] for r in records if r.method == m and r.ok])
            failed = sum(1 for r in records if r.method == m and not r.ok)
            if est.size == 0:
                rows.append(SweepRow(n, m, math.nan, math.nan, 0, failed))
                continue
            err = est - beta1
            rmse = math.sqrt(math.fsum(err**2) / est.size)
            rows.append(SweepRow(n, m, rmse, math.fsum(err) / est.size, int(est.size), failed))
    return rows


def rmse_ratios(rows, method: str = "PD") -> list:
    """Successive RMSE ratios (smaller N over larger N) for one method."""
    sel = [r for r in rows if r.method == method]
    return [a.rmse / b.rmse for a, b in zip(sel, sel[1:])]


def write_sweep_csv(rows, path, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_obs", "method", "rmse_b1", "bias_b1", "n_ok", "n_failed"])
        for r in rows:
            w.writerow([r.n_obs, r.method, repr(r.rmse), repr(r.bias), r.n_ok, r.n_failed])
