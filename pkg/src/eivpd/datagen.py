"""Synthetic errors-in-variables data.

The model is

    X_k = alpha_k + X*_k + U_k,      k = 1..K
    Y   = alpha_Y + sum_k beta_k X*_k + eps

with (U_1, ..., U_K, eps) mutually independent and independent of X*.
Latent regressors are drawn iid from a marginal law, centred and scaled
with the law's *analytic* mean and variance, then multiplied by the lower
Cholesky factor of the target covariance so that the population covariance
of X* equals the target exactly.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DesignError

LAW_KINDS = ("beta", "chisquare", "t", "normal", "exponential", "point", "commonfactorexp")

_ALIASES = {
    "chi2": "chisquare",
    "chisq": "chisquare",
    "studentt": "t",
    "student_t": "t",
    "exp": "exponential",
    "gauss": "normal",
    "gaussian": "normal",
    "const": "point",
    "commonfactor": "commonfactorexp",
}

_N_PARAMS = {
    "beta": (2,),
    "chisquare": (1,),
    "t": (1,),
    "normal": (0, 2),
    "exponential": (0, 1),
    "point": (0, 1),
    "commonfactorexp": (0, 1),
}


@dataclass(frozen=True)
class Law:
    """A univariate sampling law, or the common-factor exponential construction.

    ``exponential`` and ``commonfactorexp`` are parametrised by rate.
    ``point`` is a point mass (``point(0)`` is how "no error" is spelled).
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        kind = _ALIASES.get(self.kind.lower(), self.kind.lower())
        if kind not in LAW_KINDS:
            raise DesignError(f"unknown law {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        allowed = _N_PARAMS[kind]
        if len(params) not in allowed:
            raise DesignError(f"law {kind} takes {' or '.join(map(str, allowed))} parameters, got {len(params)}")
        if kind == "normal" and not params:
            params = (0.0, 1.0)
        if kind in ("exponential", "commonfactorexp") and not params:
            params = (1.0,)
        if kind == "point" and not params:
            params = (0.0,)
        if kind == "beta" and min(params) <= 0:
            raise DesignError("beta parameters must be positive")
        if kind in ("chisquare", "t") and params[0] <= 0:
            raise DesignError(f"{kind} degrees of freedom must be positive")
        if kind == "normal" and params[1] < 0:
            raise DesignError("normal variance must be nonnegative")
        if kind in ("exponential", "commonfactorexp") and params[0] <= 0:
            raise DesignError("rate must be positive")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", params)

    @classmethod
    def parse(cls, text: str) -> "Law":
        """Parse ``"beta(1,2)"``, ``"t(5)"``, ``"normal(0,1)"``, ``"none"`` ..."""
        text = text.strip()
        if text.lower() in ("none", "zero", "0"):
            return cls("point", (0.0,))
        m = re.fullmatch(r"([A-Za-z_0-9]+?)\s*(?:\((.*)\))?", text)
        if m is None:
            raise DesignError(f"cannot parse law {text!r}")
        name, args = m.group(1), m.group(2)
        params = ()
        if args is not None and args.strip():
            try:
                params = tuple(float(a) for a in args.split(","))
            except ValueError:
                raise DesignError(f"bad law parameters in {text!r}") from None
        return cls(name, params)

    def __str__(self):
        if not self.params:
            return self.kind
        return f"{self.kind}({','.join(_fmt(p) for p in self.params)})"

    @property
    def is_degenerate(self) -> bool:
        return self.kind == "point" or (self.kind == "normal" and self.params[1] == 0)

    @property
    def mean(self) -> float:
        k, p = self.kind, self.params
        if k == "beta":
            return p[0] / (p[0] + p[1])
        if k == "chisquare":
            return p[0]
        if k == "t":
            if p[0] <= 1:
                return math.nan
            return 0.0
        if k == "normal":
            return p[0]
        if k == "exponential":
            return 1.0 / p[0]
        if k == "point":
            return p[0]
        return 2.0 / p[0]  # commonfactorexp, per coordinate

    @property
    def var(self) -> float:
        """Analytic variance; ``nan`` where it does not exist."""
        k, p = self.kind, self.params
        if k == "beta":
            a, b = p
            return a * b / ((a + b) ** 2 * (a + b + 1))
        if k == "chisquare":
            return 2.0 * p[0]
        if k == "t":
            return p[0] / (p[0] - 2.0) if p[0] > 2 else math.nan
        if k == "normal":
            return p[1]
        if k == "exponential":
            return 1.0 / p[0] ** 2
        if k == "point":
            return 0.0
        return 2.0 / p[0] ** 2

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        k, p = self.kind, self.params
        if k == "beta":
            return rng.beta(p[0], p[1], size)
        if k == "chisquare":
            return rng.chisquare(p[0], size)
        if k == "t":
            return rng.standard_t(p[0], size)
        if k == "normal":
            return rng.normal(p[0], math.sqrt(p[1]), size)
        if k == "exponential":
            return rng.exponential(1.0 / p[0], size)
        if k == "point":
            return np.full(size, p[0], dtype=float)
        raise DesignError("commonfactorexp is a joint construction; use gen_dataset")


def _fmt(v: float) -> str:
    return repr(int(v)) if float(v).is_integer() else repr(float(v))


NO_ERROR = Law("point", (0.0,))
STD_NORMAL = Law("normal", (0.0, 1.0))


def common_factor_cov(K: int, rate: float = 1.0) -> np.ndarray:
    """Population covariance of X*_k = Z_k + Z_0 with Z_i iid Exp(rate)."""
    return (np.eye(K) + np.ones((K, K))) / rate**2


@dataclass(frozen=True)
class DesignSpec:
    """Full description of one simulation design.

    ``intercepts`` holds (alpha_1, ..., alpha_K, alpha_Y).  ``meas_error_law``
    holds one law per regressor.
    """

    K: int
    latent_law: Law
    target_cov: tuple
    intercepts: tuple
    beta_true: tuple
    meas_error_law: tuple
    eps_law: Law
    n_obs: int
    seed: int = 0
    warnings: tuple = field(default=(), compare=False)

    def __post_init__(self):
        K = int(self.K)
        object.__setattr__(self, "K", K)
        if K < 1:
            raise DesignError("K must be at least 1")
        cov = np.asarray(self.target_cov, dtype=float)
        if cov.shape != (K, K):
            raise DesignError(f"target_cov must be {K}x{K}, got shape {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise DesignError("target covariance not symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise DesignError("target covariance not SPD") from None
        object.__setattr__(self, "target_cov", tuple(tuple(float(v) for v in row) for row in cov))

        meas = self.meas_error_law
        if isinstance(meas, Law):
            meas = (meas,) * K
        meas = tuple(meas)
        if len(meas) != K:
            raise DesignError(f"need {K} measurement-error laws, got {len(meas)}")
        if any(m.kind == "commonfactorexp" for m in meas + (self.eps_law,)):
            raise DesignError("commonfactorexp is only valid as a latent law")
        object.__setattr__(self, "meas_error_law", meas)

        intercepts = tuple(float(a) for a in self.intercepts)
        if len(intercepts) != K + 1:
            raise DesignError(f"need {K + 1} intercepts (alpha_1..alpha_K, alpha_Y)")
        object.__setattr__(self, "intercepts", intercepts)
        beta = tuple(float(b) for b in self.beta_true)
        if len(beta) != K:
            raise DesignError(f"beta_true must have {K} entries")
        object.__setattr__(self, "beta_true", beta)

        if int(self.n_obs) < K + 2:
            raise DesignError(f"n_obs must be at least K + 2 = {K + 2}")
        object.__setattr__(self, "n_obs", int(self.n_obs))
        object.__setattr__(self, "seed", int(self.seed))

        flags = []
        law = self.latent_law
        if law.is_degenerate:
            raise DesignError("latent law must be nondegenerate")
        if law.kind == "t":
            df = law.params[0]
            if df <= 2:
                raise DesignError("t latent law needs df > 2 for a finite variance")
            if df <= 4:
                flags.append(f"t({_fmt(df)}) latent law has infinite fourth moment")
        object.__setattr__(self, "warnings", tuple(flags))

    @property
    def cov(self) -> np.ndarray:
        return np.array(self.target_cov)

    def replace(self, **changes) -> "DesignSpec":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__ if f != "warnings"}
        kw.update(changes)
        return DesignSpec(**kw)

    def to_config(self) -> dict:
        """Flat string mapping, the inverse of :func:`design_from_config`."""
        return {
            "K": str(self.K),
            "latent_law": str(self.latent_law),
            "target_cov": ";".join(",".join(_fmt(v) for v in row) for row in self.target_cov),
            "intercepts": ",".join(_fmt(a) for a in self.intercepts),
            "beta_true": ",".join(_fmt(b) for b in self.beta_true),
            "meas_error_law": ";".join(str(m) for m in self.meas_error_law),
            "eps_law": str(self.eps_law),
            "n_obs": str(self.n_obs),
            "seed": str(self.seed),
        }


def _floats(text, key):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {text!r}") from None


def design_from_config(cfg: dict) -> DesignSpec:
    """Build a design from a flat key-value mapping.

    Missing keys fall back to Design 2 of the simulation study
    (chi-square(5) regressors, N(0,1) errors).  A ``design`` key naming a
    preset (``1``, ``2``, ``3``, ``t10``, ``commonfactor``) changes the base.
    """
    base_name = cfg.get("design", "2")
    with_error = cfg.get("with_error", "true").strip().lower() in ("1", "true", "yes", "on")
    base = preset_design(base_name, with_error=with_error)
    kw = {}
    if "K" in cfg:
        kw["K"] = int(cfg["K"])
    if "latent_law" in cfg:
        kw["latent_law"] = Law.parse(cfg["latent_law"])
    if "target_cov" in cfg:
        kw["target_cov"] = tuple(_floats(r, "target_cov") for r in cfg["target_cov"].split(";"))
    if "intercepts" in cfg:
        kw["intercepts"] = _floats(cfg["intercepts"], "intercepts")
    if "beta_true" in cfg:
        kw["beta_true"] = _floats(cfg["beta_true"], "beta_true")
    if "meas_error_law" in cfg:
        laws = tuple(Law.parse(s) for s in cfg["meas_error_law"].split(";"))
        kw["meas_error_law"] = laws[0] if len(laws) == 1 else laws
    if "eps_law" in cfg:
        kw["eps_law"] = Law.parse(cfg["eps_law"])
    if "n_obs" in cfg:
        kw["n_obs"] = int(cfg["n_obs"])
    if "seed" in cfg:
        kw["seed"] = int(cfg["seed"])
    if "K" in kw and kw["K"] != base.K:
        # resize the preset defaults so a bare "K = 3" stays valid
        K = kw["K"]
        kw.setdefault("target_cov", tuple(map(tuple, np.eye(K) + np.ones((K, K)))))
        kw.setdefault("intercepts", (1.0,) * (K + 1))
        kw.setdefault("beta_true", (1.0,) * K)
        if "meas_error_law" not in kw or isinstance(kw["meas_error_law"], Law):
            kw["meas_error_law"] = kw.get("meas_error_law", base.meas_error_law[0])
    try:
        return base.replace(**kw)
    except (DesignError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


TABLE1_LAWS = {
    1: Law("beta", (1, 2)),
    2: Law("chisquare", (5,)),
    3: Law("t", (5,)),
}

TABLE1_COV = ((2.0, 1.0), (1.0, 2.0))


def preset_design(name, with_error: bool = True, n_obs: int = 1000, seed: int = 0) -> DesignSpec:
    """Named designs: the three simulation designs, the t(10) variant, the
    common-factor exponential design and a jointly normal control.

    ``with_error`` applies to every preset, so pass ``with_error=False`` for
    the error-free variants.
    """
    name = str(name).strip().lower()
    meas = STD_NORMAL if with_error else NO_ERROR
    if name in ("1", "2", "3"):
        law = TABLE1_LAWS[int(name)]
    elif name in ("t10", "4"):
        law = Law("t", (10,))
    elif name in ("commonfactor", "commonfactorexp", "cf"):
        return DesignSpec(
            K=2,
            latent_law=Law("commonfactorexp", (1.0,)),
            target_cov=tuple(map(tuple, common_factor_cov(2))),
            intercepts=(1.0, 1.0, 1.0),
            beta_true=(1.0, 1.0),
            meas_error_law=meas,
            eps_law=STD_NORMAL,
            n_obs=n_obs,
            seed=seed,
        )
    elif name in ("normal", "gaussian"):
        law = STD_NORMAL
    else:
        raise DesignError(f"unknown design preset {name!r}")
    return DesignSpec(
        K=2,
        latent_law=law,
        target_cov=TABLE1_COV,
        intercepts=(1.0, 1.0, 1.0),
        beta_true=(1.0, 1.0),
        meas_error_law=meas,
        eps_law=STD_NORMAL,
        n_obs=n_obs,
        seed=seed,
    )


@dataclass(frozen=True)
class Latent:
    x_star: np.ndarray
    u: np.ndarray
    eps: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed regressors ``x`` (N x K) and outcome ``y`` (N,).

    ``latent`` is only present for synthetic data; there
    ``x == alpha[:K] + x_star + u`` and ``y == alpha_Y + x_star @ beta + eps``.
    """

    x: np.ndarray
    y: np.ndarray
    latent: Optional[Latent] = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float, order="C")
        if x.ndim == 1:
            x = x[:, None]
        y = np.array(self.y, dtype=float).reshape(-1)
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise DesignError(f"x has shape {x.shape} but y has {y.shape[0]} rows")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DesignError("dataset contains non-finite values")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def K(self) -> int:
        return self.x.shape[1]

    def columns(self) -> np.ndarray:
        """N x (K+1) matrix [X_1 .. X_K, Y]."""
        return np.column_stack([self.x, self.y])

    def shifted(self, x_shift=0.0, y_shift=0.0) -> "Dataset":
        return Dataset(self.x + np.asarray(x_shift, dtype=float), self.y + float(y_shift))

    def observables(self) -> "Dataset":
        return Dataset(self.x, self.y)


def standardize_and_correlate(raw, target_cov, law: Optional[Law] = None) -> np.ndarray:
    """Centre/scale iid columns to unit variance and impose ``target_cov``.

    With ``law`` given, centring and scaling use the law's analytic mean and
    variance so the *population* covariance of the output is exactly
    ``target_cov``.  Without it the sample moments are used.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise DesignError("raw draws must be an N x K matrix")
    cov = np.asarray(target_cov, dtype=float)
    if cov.shape != (raw.shape[1], raw.shape[1]):
        raise DesignError("target_cov does not match the number of columns")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise DesignError("target covariance not SPD") from None
    if law is None:
        mu = raw.mean(axis=0)
        sd = raw.std(axis=0)
        if np.any(~np.isfinite(sd)) or np.any(sd == 0):
            raise DesignError("raw columns need a finite, nonzero sample variance")
    else:
        mu, var = law.mean, law.var
        if not (math.isfinite(mu) and math.isfinite(var)) or var <= 0:
            raise DesignError(f"law {law} has no finite analytic variance")
        sd = math.sqrt(var)
    z = (raw - mu) / sd
    return z @ chol.T


def _draw_latent(spec: DesignSpec, rng: np.random.Generator) -> np.ndarray:
    law, N, K = spec.latent_law, spec.n_obs, spec.K
    if law.kind != "commonfactorexp":
        return standardize_and_correlate(law.sample(rng, (N, K)), spec.cov, law)
    rate = law.params[0]
    z = rng.exponential(1.0 / rate, (N, K + 1))
    x = z[:, 1:] + z[:, :1] - 2.0 / rate
    natural = common_factor_cov(K, rate)
    if np.allclose(spec.cov, natural, rtol=0, atol=1e-14):
        return x
    # linear map taking the natural covariance to the target one
    m = np.linalg.cholesky(spec.cov) @ np.linalg.inv(np.linalg.cholesky(natural))
    return x @ m.T


def gen_dataset(spec: DesignSpec, keep_latent: bool = True) -> Dataset:
    """Draw one dataset; bit-identical for identical ``spec`` (seed included)."""
    ss_lat, ss_u, ss_eps = np.random.SeedSequence(spec.seed).spawn(3)
    x_star = _draw_latent(spec, np.random.default_rng(ss_lat))
    rng_u = np.random.default_rng(ss_u)
    u = np.column_stack([m.sample(rng_u, spec.n_obs) for m in spec.meas_error_law])
    eps = spec.eps_law.sample(np.random.default_rng(ss_eps), spec.n_obs)
    alpha = np.asarray(spec.intercepts)
    x = alpha[: spec.K] + x_star + u
    y = alpha[spec.K] + x_star @ np.asarray(spec.beta_true) + eps
    latent = Latent(x_star, u, eps) if keep_latent else None
    for arr in (x_star, u, eps):
        arr.flags.writeable = False
    return Dataset(x, y, latent)


def replication_seeds(master_seed: int, reps: int) -> list:
    """Independent per-replication seeds derived from one master seed."""
    children = np.random.SeedSequence(master_seed).spawn(reps)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def write_dataset_csv(data: Dataset, path, header_lines: Sequence[str] = (), latent: bool = True) -> None:
    K = data.K
    cols = [f"x{k + 1}" for k in range(K)] + ["y"]
    arrays = [data.x, data.y[:, None]]
    if latent and data.latent is not None:
        cols += [f"xstar{k + 1}" for k in range(K)] + [f"u{k + 1}" for k in range(K)] + ["eps"]
        arrays += [data.latent.x_star, data.latent.u, data.latent.eps[:, None]]
    table = np.hstack(arrays)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in table:
            w.writerow([repr(float(v)) for v in row])


def read_dataset_csv(path) -> Dataset:
    """Read a CSV with header ``x1..xK,y`` (extra latent columns allowed).

    Lines starting with ``#`` are provenance comments and are skipped.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        lines = list(enumerate(fh, start=1))
    body = [(i, ln) for i, ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not body:
        raise ConfigError("empty dataset file")
    header_line, header_text = body[0]
    header = [h.strip() for h in next(csv.reader([header_text]))]
    xcols = []
    k = 1
    while f"x{k}" in header:
        xcols.append(header.index(f"x{k}"))
        k += 1
    if not xcols or "y" not in header:
        raise ConfigError("header must contain x1..xK and y", line=header_line)
    ycol = header.index("y")
    latent_cols = None
    K = len(xcols)
    names = [f"xstar{j}" for j in range(1, K + 1)] + [f"u{j}" for j in range(1, K + 1)] + ["eps"]
    if all(n in header for n in names):
        latent_cols = [header.index(n) for n in names]
    rows = []
    for lineno, text in body[1:]:
        fields = next(csv.reader([text]))
        if len(fields) != len(header):
            raise ConfigError(f"expected {len(header)} fields, got {len(fields)}", line=lineno)
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise ConfigError("non-numeric field", line=lineno) from None
    if not rows:
        raise ConfigError("dataset has no rows")
    table = np.array(rows)
    latent = None
    if latent_cols is not None:
        lat = table[:, latent_cols]
        latent = Latent(lat[:, :K], lat[:, K : 2 * K], lat[:, 2 * K])
    try:
        return Dataset(table[:, xcols], table[:, ycol], latent)
    except DesignError as exc:
        raise ConfigError(str(exc)) from exc
