"""Simulation benchmarks: M/M/1 mean waiting time, European call price/gamma, and a
single-observation study with a partition-based residual budget.

Every replication draws from its own generator keyed by (master seed, n,
replication index), so reports do not depend on execution order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

from .data import Dataset, ReplicatedDataset
from .errors import SplineError
from .estimator import fit_problem_a, fit_problem_b, fit_problem_c, fit_problem_c_cv, default_cv_grid
from .kernel import make_setup
from .model import SplineModel
from .variance import partition_s_n, replicate_s_n

log = logging.getLogger(__name__)

EXPERIMENTS = ("mm1", "option", "partition")
FULL_REPS = {"mm1": 400, "option": 400, "partition": 1600}


# ---------------------------------------------------------------- M/M/1


def mm1_true(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 1):
        raise ValueError("service rate must exceed the unit arrival rate")
    out = 1.0 / (x * (x - 1.0))
    return float(out) if out.ndim == 0 else out


def mm1_true_d2(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 1):
        raise ValueError("service rate must exceed the unit arrival rate")
    q = x * x - x
    out = (2.0 * (2.0 * x - 1.0) ** 2 - 2.0 * q) / q**3
    return float(out) if out.ndim == 0 else out


def _exponential(rng: np.random.Generator, rate, shape) -> np.ndarray:
    # inverse transform; 1 - U lies in (0, 1]
    return -np.log1p(-rng.random(shape)) / rate


def simulate_mm1_batch(rates, customers: int, runs: int, rng: np.random.Generator) -> np.ndarray:
    """Average wait of the first `customers` customers, shape (len(rates), runs).

    Lindley recursion W_{k+1} = max(0, W_k + S_k - A_k), W_1 = 0, unit arrival rate.
    """
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    if np.any(rates <= 1):
        raise ValueError("service rate must exceed the unit arrival rate")
    if customers < 1:
        raise ValueError("need at least one customer")
    shape = (rates.shape[0], runs)
    w = np.zeros(shape)
    total = np.zeros(shape)
    rate_col = rates[:, None]
    for _ in range(customers - 1):
        s = _exponential(rng, rate_col, shape)
        a = _exponential(rng, 1.0, shape)
        w = np.maximum(0.0, w + s - a)
        total += w
    return total / customers


def simulate_mm1(x: float, customers: int, rng: np.random.Generator) -> float:
    return float(simulate_mm1_batch([x], customers, 1, rng)[0, 0])


# ---------------------------------------------------------------- European call


@dataclass(frozen=True)
class OptionConfig:
    strike: float = 1.3
    rate: float = 0.03
    sigma: float = 0.3
    drift: float = 0.03
    maturity: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.maturity > 0 and self.strike > 0):
            raise ValueError("need sigma > 0, maturity > 0 and strike > 0")


def _d1(x, cfg: OptionConfig):
    with np.errstate(divide="ignore"):
        return (np.log(x / cfg.strike) + (cfg.rate + 0.5 * cfg.sigma**2) * cfg.maturity) / (
            cfg.sigma * math.sqrt(cfg.maturity)
        )


def bs_price(x, cfg: OptionConfig = OptionConfig()):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("spot price must be nonnegative")
    d1 = _d1(x, cfg)
    d2 = d1 - cfg.sigma * math.sqrt(cfg.maturity)
    out = np.where(x > 0, x * ndtr(d1) - cfg.strike * math.exp(-cfg.rate * cfg.maturity) * ndtr(d2), 0.0)
    return float(out) if out.ndim == 0 else out


def bs_gamma(x, cfg: OptionConfig = OptionConfig()):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("spot price must be nonnegative")
    d1 = _d1(x, cfg)
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.exp(-0.5 * d1**2) / math.sqrt(2 * math.pi)
        out = np.where(x > 0, dens / (x * cfg.sigma * math.sqrt(cfg.maturity)), 0.0)
    return float(out) if out.ndim == 0 else out


def simulate_euro_call(x, cfg: OptionConfig, rng: np.random.Generator, size=None):
    """Discounted payoff draws; only the terminal price of the GBM path is sampled."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("spot price must be nonnegative")
    shape = np.broadcast_shapes(x.shape, () if size is None else tuple(np.atleast_1d(size)))
    u = rng.random(shape)
    u[u == 0.0] = np.finfo(float).tiny
    z = ndtri(u)
    T = cfg.maturity
    st = x * np.exp((cfg.drift - 0.5 * cfg.sigma**2) * T + cfg.sigma * math.sqrt(T) * z)
    out = math.exp(-cfg.rate * T) * np.maximum(0.0, st - cfg.strike)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- EIMSE


def eimse(model: SplineModel, truth: Callable, truth_deriv: Callable | None, X, deriv_order=2) -> tuple[float, float]:
    """Mean squared deviation from the truth at X, for values and for one derivative."""
    X = np.asarray(X, dtype=float)
    pts = X.reshape(-1, model.dim)
    arg = pts[:, 0] if model.dim == 1 else pts
    val = float(np.mean((model.evaluate(pts) - truth(arg)) ** 2))
    if truth_deriv is None:
        return val, math.nan
    der = float(np.mean((model.derivative(pts, deriv_order) - truth_deriv(arg)) ** 2))
    return val, der


# ---------------------------------------------------------------- experiments


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n_values: tuple[int, ...]
    methods: tuple[str, ...]
    reps: int = 50
    seed: int = 1
    m: int = 4
    replicates: int = 100
    customers: int = 1000
    lambda_sequences: dict = field(default_factory=dict)
    cv_grid: tuple[float, ...] = tuple(default_cv_grid())
    option: OptionConfig = OptionConfig()
    partition_cells: int = 5
    noise_halfwidth: float = 0.25
    transient_oracle_runs: int = 10000

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment '{self.experiment}'; choose from {EXPERIMENTS}")
        if self.reps < 1:
            raise ValueError("reps must be positive")
        if not self.n_values or any(int(n) < 2 for n in self.n_values):
            raise ValueError("n values must be integers >= 2")
        known = {"A", "B", "CV"} | set(self.lambda_sequences)
        bad = [mth for mth in self.methods if mth not in known]
        if bad or not self.methods:
            raise ValueError(f"unknown method(s) {bad}; available: {sorted(known)}")
        if self.experiment == "partition" and set(self.methods) != {"B"}:
            raise ValueError("the partition study only fits Problem B")


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    base = {
        "mm1": dict(
            n_values=(15, 25, 35), methods=("A", "B", "CV", "lam1", "lam2", "lam3"),
            replicates=100, lambda_sequences={"lam1": 1e-6, "lam2": 1e-7, "lam3": 1e-8},
        ),
        "option": dict(
            n_values=(15, 25, 35), methods=("A", "B", "CV", "lam4", "lam5", "lam6"),
            replicates=5000, lambda_sequences={"lam4": 1e-5, "lam5": 1e-6, "lam6": 1e-7},
        ),
        "partition": dict(n_values=(30, 40, 50), methods=("B",), replicates=1),
    }
    if experiment not in base:
        raise ValueError(f"unknown experiment '{experiment}'; choose from {EXPERIMENTS}")
    params = dict(base[experiment])
    params.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("n_values", "methods", "cv_grid"):
        if key in params:
            params[key] = tuple(params[key])
    if isinstance(params.get("option"), dict):
        params["option"] = OptionConfig(**params["option"])
    return ExperimentConfig(experiment=experiment, **params)


def load_config(text: str) -> ExperimentConfig:
    raw = json.loads(text)
    if not isinstance(raw, dict) or "experiment" not in raw:
        raise ValueError("config must be a JSON object with an 'experiment' key")
    raw = dict(raw)
    name = raw.pop("experiment")
    unknown = set(raw) - set(ExperimentConfig.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return default_config(name, **raw)


def config_to_json(cfg: ExperimentConfig) -> str:
    return json.dumps(asdict(cfg), indent=2, sort_keys=True)


def design_points(experiment: str, n: int) -> np.ndarray:
    i = np.arange(1, n + 1, dtype=float)
    if experiment == "mm1":
        return 1.5 + i / (2 * n) - 1 / (4 * n)
    if experiment == "option":
        return 2 * i / n - 1 / n
    if experiment == "partition":
        return i / n - 1 / (2 * n)
    raise ValueError(f"unknown experiment '{experiment}'")


DOMAINS = {"mm1": (1.5, 2.0), "option": (0.0, 2.0), "partition": (0.0, 1.0)}
SCALES = {"mm1": (1e-4, 1.0), "option": (1e-5, 1e-1), "partition": (1.0, 1.0)}


def _partition_truth(x):
    return (np.asarray(x) - 0.25) ** 2


def _partition_truth_d2(x):
    return np.full(np.shape(x), 2.0)


def truth_functions(cfg: ExperimentConfig) -> tuple[Callable, Callable]:
    if cfg.experiment == "mm1":
        return mm1_true, mm1_true_d2
    if cfg.experiment == "option":
        return (lambda x: bs_price(x, cfg.option)), (lambda x: bs_gamma(x, cfg.option))
    return _partition_truth, _partition_truth_d2


def replication_rng(seed: int, n: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n, rep)))


def simulate_responses(cfg: ExperimentConfig, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Responses of shape (n, r)."""
    if cfg.experiment == "mm1":
        return simulate_mm1_batch(X, cfg.customers, cfg.replicates, rng)
    if cfg.experiment == "option":
        return simulate_euro_call(X[:, None], cfg.option, rng, size=(X.shape[0], cfg.replicates))
    noise = rng.uniform(-cfg.noise_halfwidth, cfg.noise_halfwidth, size=X.shape[0])
    return (_partition_truth(X) + noise)[:, None]


def transient_truth(cfg: ExperimentConfig, X: np.ndarray) -> np.ndarray | None:
    """Finite-horizon mean wait at X from a large independent simulation (M/M/1 only)."""
    if cfg.experiment != "mm1" or cfg.transient_oracle_runs <= 0:
        return None
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(X.shape[0], 2**31)))
    return simulate_mm1_batch(X, cfg.customers, cfg.transient_oracle_runs, rng).mean(axis=1)


def run_replication(cfg: ExperimentConfig, n: int, rep: int, transient=None) -> dict[str, dict[str, float]]:
    """EIMSE values per method for one replication; failed methods map to None."""
    X = design_points(cfg.experiment, n)
    setup = make_setup(cfg.m, 1, DOMAINS[cfg.experiment])
    truth, truth_d2 = truth_functions(cfg)
    rng = replication_rng(cfg.seed, n, rep)
    Y = simulate_responses(cfg, X, rng)

    if cfg.experiment == "partition":
        data = Dataset(X, Y[:, 0])
        s_n = partition_s_n(data, cfg.partition_cells, DOMAINS["partition"])
    else:
        s_n, data = replicate_s_n(ReplicatedDataset(X, Y))

    fits: dict[str, SplineModel | None] = {}
    g = None
    if {"A", "B"} & set(cfg.methods):
        try:
            g = fit_problem_b(data, s_n, setup)
            fits["B"] = g.model
        except SplineError as exc:
            log.warning("n=%d rep=%d: Problem B failed: %s", n, rep, exc)
            fits["B"] = None
    for method in cfg.methods:
        if method == "B":
            continue
        try:
            if method == "A":
                if g is None:
                    raise SplineError("Problem B failed, no roughness budget for Problem A")
                fits["A"] = fit_problem_a(data, g.achieved_J, setup).model
            elif method == "CV":
                fits["CV"] = fit_problem_c_cv(data, cfg.cv_grid, setup).model
            else:
                fits[method] = fit_problem_c(data, cfg.lambda_sequences[method] / n, setup).model
        except SplineError as exc:
            log.warning("n=%d rep=%d: method %s failed: %s", n, rep, method, exc)
            fits[method] = None

    out = {}
    for method in cfg.methods:
        model = fits.get(method)
        if model is None:
            out[method] = None
            continue
        val, der = eimse(model, truth, truth_d2, X, 2)
        metrics = {"value": val, "deriv2": der}
        if transient is not None:
            metrics["value_transient"] = float(np.mean((model.evaluate(X) - transient) ** 2))
        out[method] = metrics
    return out


@dataclass(frozen=True)
class EimseRow:
    method: str
    n: int
    metric: str
    mean: float
    ci_halfwidth: float
    scale: float
    replications: int
    failures: int = 0


@dataclass
class EimseReport:
    experiment: str
    seed: int
    reps: int
    rows: list[EimseRow]

    def get(self, method: str, n: int, metric: str) -> EimseRow:
        for row in self.rows:
            if (row.method, row.n, row.metric) == (method, n, metric):
                return row
        raise KeyError((method, n, metric))

    def to_csv(self) -> str:
        buf = io.StringIO()
        full = FULL_REPS[self.experiment]
        buf.write(f"# experiment={self.experiment} seed={self.seed} reps={self.reps}\n")
        if self.reps < full:
            buf.write(
                f"# reduced replication count (full runs use {full}); "
                f"CI half-widths are about {math.sqrt(full / self.reps):.2f}x wider\n"
            )
        failed = sorted({(r.method, r.n, r.failures) for r in self.rows if r.failures})
        if failed:
            buf.write("# failed replications: " + ", ".join(f"{m}@n={n}:{k}" for m, n, k in failed) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "n", "metric", "mean", "ci_halfwidth", "scale", "replications"])
        for r in self.rows:
            writer.writerow([r.method, r.n, r.metric, f"{r.mean:.6g}", f"{r.ci_halfwidth:.6g}", f"{r.scale:g}", r.replications])
        return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, progress: Callable[[str], None] | None = None) -> EimseReport:
    """Run all replications for every n and aggregate mean EIMSE with 95% CIs.

    Means and half-widths are reported in units of `scale` (the conventional reporting units).
    """
    v_scale, d_scale = SCALES[cfg.experiment]
    rows: list[EimseRow] = []
    for n in cfg.n_values:
        X = design_points(cfg.experiment, n)
        transient = transient_truth(cfg, X)
        per_method: dict[str, dict[str, list[float]]] = {mth: {} for mth in cfg.methods}
        failures = {mth: 0 for mth in cfg.methods}
        for rep in range(cfg.reps):
            res = run_replication(cfg, n, rep, transient)
            for mth, metrics in res.items():
                if metrics is None:
                    failures[mth] += 1
                    continue
                for key, v in metrics.items():
                    per_method[mth].setdefault(key, []).append(v)
            if progress is not None and (rep + 1) % 10 == 0:
                progress(f"{cfg.experiment} n={n}: {rep + 1}/{cfg.reps} replications")
        for mth in cfg.methods:
            if not per_method[mth]:
                # every replication failed; keep the rows so the failures stay visible
                for metric, scale in (("value", v_scale), ("deriv2", d_scale)):
                    rows.append(EimseRow(mth, n, metric, math.nan, math.nan, scale, 0, failures[mth]))
                continue
            for metric, vals in per_method[mth].items():
                arr = np.asarray(vals)
                scale = d_scale if metric == "deriv2" else v_scale
                half = 1.96 * arr.std(ddof=1) / math.sqrt(arr.size) if arr.size > 1 else math.nan
                rows.append(EimseRow(mth, n, metric, float(arr.mean()) / scale, float(half) / scale, scale, int(arr.size), failures[mth]))
    return EimseReport(cfg.experiment, cfg.seed, cfg.reps, rows)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})

