"""Command-line interface.

Every command accepts ``--config FILE`` with flat ``key = value`` lines;
any key can also be given as a flag of the same name (underscores become
dashes) and flags win.  Outputs carry a ``#`` provenance line with the
tool version, a hash of the resolved configuration and the master seed.

Exit codes: 0 success, 2 bad usage or configuration, 3 unreadable input
data, 4 estimation or simulation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import pathlib
import sys

from . import __version__
from .baselines import IvSpec, iv_estimate, ols
from .datagen import design_from_config, gen_dataset, read_dataset_csv, write_dataset_csv
from .diagnostics import (
    constant_fit_check,
    curve_bands,
    default_u_grid,
    equivalence_demo,
    verdict_text,
    write_band_csvs,
)
from .errors import ConfigError, DesignError, EivError
from .montecarlo import (
    consistency_sweep,
    format_table,
    rmse_ratios,
    table1,
    write_sweep_csv,
    write_table_csv,
)
from .objective import ObjectiveSpec, WeightSpec, residual_curve_rows
from .optimizer import SearchConfig, maximize
from .report import EstimateReport

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FAILED = 0, 2, 3, 4

DESIGN_KEYS = ("design", "with_error", "K", "latent_law", "target_cov", "intercepts", "beta_true", "meas_error_law", "eps_law", "n_obs", "seed")

# key -> help text; flags default to None so config values are not masked
COMMON_KEYS = {
    "seed": "master seed",
    "u_max": "upper end of the weight support",
    "grid_size": "odd number of quadrature nodes",
    "denom_floor": "mask nodes where |ECF| falls below this",
    "weight": "uniform or truncgauss",
    "sigma": "scale of the truncgauss weight",
    "rule": "quadrature rule: simpson or trapezoid",
    "bounds": "search box, 'lo,hi;lo,hi'",
    "threads": "worker processes (fallback: EIV_THREADS)",
    "out_dir": "output directory",
}

DESIGN_FLAG_KEYS = {
    "design": "preset: 1, 2, 3, t10, commonfactor, normal",
    "with_error": "true/false: add N(0,1) measurement error",
    "n_obs": "observations per dataset",
    "latent_law": "e.g. beta(1,2), chisquare(5), t(5)",
    "meas_error_law": "law of each measurement error",
    "eps_law": "law of the outcome error",
    "beta_true": "comma-separated slopes",
    "target_cov": "latent covariance, rows split by ';'",
    "intercepts": "K+1 comma-separated intercepts",
    "K": "number of regressors",
}

COMMAND_KEYS = {
    "gen": {"out": "output CSV path"},
    "estimate": {"data": "input CSV with header x1..xK,y", "method": "PD, OLS, C3 or C4", "c4_set": "full or restricted"},
    "table1": {"reps": "replications per cell", "n_obs": "observations per dataset", "methods": "comma-separated subset of PD,OLS,C3,C4"},
    "curves": {"reps": "replications", "curve_points": "nodes on the u grid"},
    "normality-check": {"reps": "replications", "curve_points": "nodes on the u grid"},
    "equivalence-demo": {"c": "comma-separated scaling factors"},
    "consistency": {"reps": "replications per sample size", "n_values": "ascending sample sizes", "methods": "comma-separated methods"},
}

USES_DESIGN = {"gen", "curves", "normality-check", "equivalence-demo", "consistency"}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment line."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=lineno)
        key = key.replace("-", "_")
        if key in cfg:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        cfg[key] = value
    return cfg


def read_config(path) -> dict:
    try:
        text = pathlib.Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)


# keys that only say where or how fast to write; they never change results
NON_SEMANTIC_KEYS = ("out", "out_dir", "threads")


def config_hash(cfg: dict) -> str:
    canon = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg) if k not in NON_SEMANTIC_KEYS)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def provenance(cfg: dict, seed) -> str:
    return f"eivpd {__version__} config_hash={config_hash(cfg)} master_seed={seed}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eivpd", description="Errors-in-variables estimation from log-CF second derivatives.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, keys in COMMAND_KEYS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="flat key = value file")
        options = dict(COMMON_KEYS)
        if cmd in USES_DESIGN:
            options.update(DESIGN_FLAG_KEYS)
        options.update(keys)
        for key, text in options.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=text)
    return parser


def resolve(args) -> dict:
    cfg = read_config(args.config) if args.config else {}
    for key, val in vars(args).items():
        if key in ("command", "config") or val is None:
            continue
        cfg[key] = str(val)
    return cfg


def _int(cfg, key, default):
    try:
        return int(cfg.get(key, default))
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {cfg[key]!r}") from None


def _float(cfg, key, default):
    try:
        return float(cfg.get(key, default))
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {cfg[key]!r}") from None


def objective_spec(cfg) -> ObjectiveSpec:
    sigma = cfg.get("sigma")
    weight = WeightSpec(cfg.get("weight", "uniform"), _float(cfg, "u_max", 1.0), None if sigma is None else _float(cfg, "sigma", 1.0))
    return ObjectiveSpec(weight, _int(cfg, "grid_size", 41), _float(cfg, "denom_floor", 0.05), cfg.get("rule", "simpson"))


def search_config(cfg) -> SearchConfig:
    bounds = None
    if "bounds" in cfg:
        try:
            bounds = tuple(tuple(float(v) for v in part.split(",")) for part in cfg["bounds"].split(";"))
        except ValueError:
            raise ConfigError(f"bounds: cannot parse {cfg['bounds']!r}") from None
        if any(len(b) != 2 for b in bounds):
            raise ConfigError("bounds: each axis needs 'lo,hi'")
    try:
        return SearchConfig(bounds=bounds, seed=_int(cfg, "seed", 0))
    except ValueError as exc:
        raise ConfigError(f"bounds: {exc}") from None


def _design(cfg):
    return design_from_config({k: cfg[k] for k in DESIGN_KEYS if k in cfg})


def _methods(cfg, default):
    return tuple(m.strip().upper() for m in cfg.get("methods", default).split(",") if m.strip())


def _out_dir(cfg) -> pathlib.Path:
    out = pathlib.Path(cfg.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _threads(cfg):
    return _int(cfg, "threads", 1) if "threads" in cfg else None


class InputDataError(Exception):
    """The dataset file could not be read or parsed."""


def cmd_gen(cfg) -> int:
    spec = _design(cfg)
    out = pathlib.Path(cfg.get("out", "dataset.csv"))
    if "out_dir" in cfg:
        out = _out_dir(cfg) / out
    data = gen_dataset(spec)
    header = [provenance(cfg, spec.seed)] + [f"{k} = {v}" for k, v in spec.to_config().items()]
    write_dataset_csv(data, out, header)
    print(out)
    return EXIT_OK


def cmd_estimate(cfg) -> int:
    if "data" not in cfg:
        raise ConfigError("estimate needs --data")
    method = cfg.get("method", "PD").upper()
    obj = objective_spec(cfg)
    try:
        data = read_dataset_csv(cfg["data"])
    except (ConfigError, OSError) as exc:
        raise InputDataError(f"{cfg['data']}: {exc}") from None
    if method == "PD":
        report = maximize(data, obj, search_config(cfg))
    elif method == "OLS":
        report = ols(data)
    elif method in ("C3", "C4"):
        report = iv_estimate(data, IvSpec(method, c4_set=cfg.get("c4_set", "full")))
    else:
        raise ConfigError(f"unknown method {method!r}")
    out = _out_dir(cfg)
    head = f"# {provenance(cfg, cfg.get('seed', 0))}\n"
    stem = f"estimate_{method.lower()}"
    with open(out / f"{stem}.csv", "w", encoding="utf-8") as fh:
        fh.write(head)
        fh.write(",".join(EstimateReport.csv_header(data.K)) + "\n")
        fh.write(",".join(str(v) for v in report.csv_row()) + "\n")
    (out / f"{stem}.txt").write_text(head + report.to_text(), encoding="utf-8")
    if method == "PD":
        with open(out / "residual_curves.csv", "w", encoding="utf-8") as fh:
            fh.write(head)
            fh.write("u,pair,re_residual,im_residual,denom_mag\n")
            for u, pair, re, im, mag in residual_curve_rows(data, report.b_hat, obj):
                fh.write(f"{u!r},{pair},{re!r},{im!r},{mag!r}\n")
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_table1(cfg) -> int:
    seed = _int(cfg, "seed", 0)
    out = _out_dir(cfg)
    head = [provenance(cfg, seed)]
    cells = table1(
        reps=_int(cfg, "reps", 100),
        n_obs=_int(cfg, "n_obs", 1000),
        master_seed=seed,
        methods=_methods(cfg, "PD,OLS,C3,C4"),
        objective=objective_spec(cfg),
        search=search_config(cfg),
        threads=_threads(cfg),
        long_csv_dir=out,
        header_lines=head,
    )
    write_table_csv(cells, out / "table1.csv", head)
    sys.stdout.write(format_table(cells))
    return EXIT_OK


def _bands(cfg):
    spec = _design(cfg)
    seed = _int(cfg, "seed", 0)
    grid = default_u_grid(_int(cfg, "curve_points", 41), _float(cfg, "u_max", 1.0))
    curves = curve_bands(spec, _int(cfg, "reps", 100), grid, master_seed=seed, denom_floor=_float(cfg, "denom_floor", 0.05))
    return curves, seed


def cmd_curves(cfg) -> int:
    curves, seed = _bands(cfg)
    out = _out_dir(cfg)
    head = [provenance(cfg, seed)]
    for p in write_band_csvs(curves, out, header_lines=head):
        print(p)
    text = verdict_text(constant_fit_check(curves), curves)
    (out / "verdict.txt").write_text(f"# {head[0]}\n" + text, encoding="utf-8")
    return EXIT_OK


def cmd_normality_check(cfg) -> int:
    curves, seed = _bands(cfg)
    verdicts = constant_fit_check(curves)
    text = verdict_text(verdicts, curves)
    lines = [f"{v.pair}: {v.verdict} (margin {v.margin:.4g})" for v in verdicts]
    if all(v.verdict == "no-variation" for v in verdicts):
        lines.append("a constant fits every band: identification is doubtful")
    out = _out_dir(cfg)
    (out / "normality_check.txt").write_text(f"# {provenance(cfg, seed)}\n" + text, encoding="utf-8")
    print("\n".join(lines))
    return EXIT_OK


def cmd_equivalence_demo(cfg) -> int:
    spec = _design(cfg)
    try:
        c = tuple(float(v) for v in cfg.get("c", "2,2").split(","))
    except ValueError:
        raise ConfigError(f"c: cannot parse {cfg['c']!r}") from None
    report = equivalence_demo(spec, c)
    out = _out_dir(cfg)
    text = report.to_text()
    (out / "equivalence.txt").write_text(f"# {provenance(cfg, spec.seed)}\n" + text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK if report.observables_match else EXIT_FAILED


def cmd_consistency(cfg) -> int:
    spec = _design(cfg)
    seed = _int(cfg, "seed", 0)
    try:
        n_values = [int(v) for v in cfg.get("n_values", "1000,4000").split(",")]
    except ValueError:
        raise ConfigError(f"n_values: cannot parse {cfg['n_values']!r}") from None
    methods = _methods(cfg, "PD")
    rows = consistency_sweep(spec, n_values, _int(cfg, "reps", 100), methods, seed, objective_spec(cfg), search_config(cfg), _threads(cfg))
    out = _out_dir(cfg)
    write_sweep_csv(rows, out / "consistency.csv", [provenance(cfg, seed)])
    for r in rows:
        print(f"N={r.n_obs} {r.method} rmse={r.rmse:.4f} bias={r.bias:+.4f} ok={r.n_ok}")
    for m in methods:
        ratios = rmse_ratios(rows, m)
        if ratios:
            print(f"{m} rmse ratios: " + ", ".join(f"{x:.3f}" for x in ratios))
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "estimate": cmd_estimate,
    "table1": cmd_table1,
    "curves": cmd_curves,
    "normality-check": cmd_normality_check,
    "equivalence-demo": cmd_equivalence_demo,
    "consistency": cmd_consistency,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except InputDataError as exc:
        print(f"eivpd {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, DesignError) as exc:
        print(f"eivpd {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EivError as exc:
        print(f"eivpd {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (ValueError, OSError) as exc:
        print(f"eivpd {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
