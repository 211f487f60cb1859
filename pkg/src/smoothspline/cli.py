"""Command-line front end: fit, eval, estimate-sn, bench.

Exit codes: 0 success, 2 bad input (CSV, duplicate points, config),
3 numerical failure, 4 unsupported derivative, 5 model version mismatch.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import bench
from .basis import MultiIndex, as_multi_index
from .data import Dataset, ReplicatedDataset
from .errors import (
    DuplicatePointError,
    ModelFormatError,
    NotUnisolventError,
    RootFindingError,
    SingularSystemError,
    SplineError,
    UnsupportedDerivativeError,
    VersionMismatchError,
)
from .estimator import FitRequest, Problem, default_cv_grid, fit, fit_problem_c_cv
from .kernel import make_setup
from .model import SplineModel, deserialize
from .variance import partition_estimate, replicate_s_n

log = logging.getLogger("smoothspline")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_DERIV, EXIT_VERSION = 0, 2, 3, 4, 5


class InputError(Exception):
    """Malformed user input; maps to exit code 2."""


# ---------------------------------------------------------------- CSV input


class Table:
    """Parsed data CSV: x columns, optional replicate column, response column."""

    def __init__(self, X: np.ndarray, y: np.ndarray, rep: np.ndarray | None, lines: np.ndarray):
        self.X, self.y, self.rep, self.lines = X, y, rep, lines

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def dataset(self) -> Dataset:
        if self.rep is not None:
            raise InputError("data has a rep column; use the replicated form")
        return Dataset(self.X, self.y)

    def replicated(self) -> ReplicatedDataset:
        """Group rows by design point (order of first appearance); every point needs the same count."""
        groups: dict[tuple, list[float]] = {}
        for x, y in zip(map(tuple, self.X), self.y):
            groups.setdefault(x, []).append(y)
        counts = {len(v) for v in groups.values()}
        if len(counts) != 1:
            raise InputError(f"replicate counts differ across design points: {sorted(counts)}")
        X = np.array(list(groups), dtype=float)
        Y = np.array(list(groups.values()), dtype=float)
        return ReplicatedDataset(X, Y)


def _parse_float(text: str, line: int, col: str) -> float:
    where = f"line {line}, column '{col}'" if line else col
    try:
        v = float(text)
    except ValueError:
        raise InputError(f"{where}: cannot parse '{text}' as a number") from None
    if not math.isfinite(v):
        raise InputError(f"{where}: value must be finite, got '{text}'")
    return v


def read_table(path: str | Path) -> Table:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise InputError(f"{path} is not valid UTF-8") from None
    if not rows:
        raise InputError(f"{path} is empty; a header row is required")
    header = [h.strip() for h in rows[0]]
    if not header or header[-1].lower() != "y":
        raise InputError(f"header must end with a 'y' column, got {header}")
    lower = [h.lower() for h in header]
    has_rep = "rep" in lower
    if has_rep and lower.index("rep") != len(header) - 2:
        raise InputError("the 'rep' column must come immediately before 'y'")
    xcols = header[: len(header) - (2 if has_rep else 1)]
    if not xcols:
        raise InputError("header has no x columns")
    xs, ys, reps, lines = [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise InputError(f"line {lineno}: expected {len(header)} fields, found {len(row)}")
        vals = [_parse_float(c.strip(), lineno, h) for c, h in zip(row, header)]
        xs.append(vals[: len(xcols)])
        ys.append(vals[-1])
        if has_rep:
            reps.append(vals[-2])
        lines.append(lineno)
    if not xs:
        raise InputError(f"{path} has no data rows")
    return Table(np.array(xs), np.array(ys), np.array(reps) if has_rep else None, np.array(lines))


def read_points(path: str | Path, d: int) -> np.ndarray:
    """Evaluation points: columns x1..xd if named so, otherwise the first d columns."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise InputError(f"{path} is empty; a header row is required")
    header = [h.strip().lower() for h in rows[0]]
    names = [f"x{i + 1}" for i in range(d)]
    if all(nm in header for nm in names):
        idx = [header.index(nm) for nm in names]
    elif len(header) >= d:
        idx = list(range(d))
    else:
        raise InputError(f"points file needs {d} coordinate column(s), header has {len(header)}")
    pts = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < max(idx) + 1:
            raise InputError(f"line {lineno}: too few fields")
        pts.append([_parse_float(row[i].strip(), lineno, rows[0][i].strip()) for i in idx])
    if not pts:
        raise InputError(f"{path} has no points")
    return np.array(pts)


# ---------------------------------------------------------------- output


def write_atomic(path: str | None, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over the target."""
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent if str(target.parent) else ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


# ---------------------------------------------------------------- argument helpers


def _parse_domain(text: str | None, X: np.ndarray) -> tuple[float, float]:
    if text is None:
        lo, hi = float(X.min()), float(X.max())
        return (lo, hi) if hi > lo else (lo - 0.5, lo + 0.5)
    parts = text.replace(":", ",").split(",")
    if len(parts) != 2:
        raise InputError(f"--domain expects 'a,b', got '{text}'")
    lo, hi = (_parse_float(p, 0, "--domain") for p in parts)
    if not hi > lo:
        raise InputError(f"--domain needs a < b, got {lo}, {hi}")
    return lo, hi


def _parse_list(text: str, conv, flag: str) -> list:
    try:
        return [conv(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise InputError(f"{flag}: cannot parse '{text}'") from None


def _parse_alpha(text: str, d: int) -> MultiIndex:
    try:
        parts = [int(t) for t in text.replace(":", ",").split(",")]
    except ValueError:
        raise InputError(f"--deriv: cannot parse '{text}'") from None
    if d == 1 and len(parts) == 1:
        return as_multi_index(parts[0], 1)
    if len(parts) != d or any(p < 0 for p in parts):
        raise InputError(f"--deriv needs {d} nonnegative integers, got '{text}'")
    return MultiIndex(tuple(parts))


def _deriv_label(alpha: MultiIndex) -> str:
    return "d" + "_".join(str(e) for e in alpha.exponents)


def _parse_grid(text: str, d: int) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError(f"--grid expects 'a:b:num', got '{text}'")
    lo = _parse_float(parts[0], 0, "--grid")
    hi = _parse_float(parts[1], 0, "--grid")
    try:
        num = int(parts[2])
    except ValueError:
        raise InputError(f"--grid: point count must be an integer, got '{parts[2]}'") from None
    if num < 1:
        raise InputError("--grid: point count must be positive")
    axis = np.linspace(lo, hi, num)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def _resolve_sn(args, table: Table) -> tuple[float, Dataset, str]:
    """Return (S_n, dataset to fit, description of where S_n came from)."""
    if table.rep is not None:
        s_rep, data = replicate_s_n(table.replicated())
    else:
        s_rep, data = None, table.dataset()
    if args.sn is None:
        raise InputError("--problem b needs --sn (a number or 'auto')")
    if args.sn.lower() != "auto":
        s = _parse_float(args.sn, 0, "--sn")
        if s < 0:
            raise InputError("--sn must be nonnegative")
        return s, data, "given"
    if s_rep is not None:
        return s_rep, data, "replicate variance"
    est = partition_estimate(data, args.cells, _parse_domain(args.domain, data.X))
    if est.excluded:
        log.info("cells with fewer than 2 points excluded from S_n: %s", list(est.excluded))
    return est.s_n, data, f"partition variance (k={args.cells})"


# ---------------------------------------------------------------- commands


def cmd_fit(args) -> int:
    table = read_table(args.input)
    problem = Problem(args.problem.upper())
    info: dict[str, object] = {}
    if problem is Problem.B:
        s_n, data, source = _resolve_sn(args, table)
        info["S_n"] = _fmt(s_n)
        info["S_n_source"] = source
        budget = s_n
    else:
        data = table.replicated().collapse() if table.rep is not None else table.dataset()
        budget = None
    domain = _parse_domain(args.domain, data.X)
    setup = make_setup(args.m, data.d, domain, seed=args.seed)

    if problem is Problem.A:
        if args.un is None:
            raise InputError("--problem a needs --un")
        if args.un < 0:
            raise InputError("--un must be nonnegative")
        budget = args.un
    if problem is Problem.C:
        if args.lam is None:
            raise InputError("--problem c needs --lambda (a number or 'cv')")
        if args.lam.lower() == "cv":
            grid = _parse_list(args.lambda_grid, float, "--lambda-grid") if args.lambda_grid else default_cv_grid()
            result = fit_problem_c_cv(data, grid, setup)
            info["lambda_source"] = "cross-validation"
        else:
            lam = _parse_float(args.lam, 0, "--lambda")
            if lam < 0:
                raise InputError("--lambda must be nonnegative")
            try:
                result = fit(data, FitRequest(Problem.C, lam), setup)
            except DuplicatePointError as exc:
                if table.rep is not None:
                    raise
                i, j = exc.pair
                raise InputError(f"duplicate design points on lines {table.lines[i]} and {table.lines[j]}") from None
    else:
        try:
            result = fit(data, FitRequest(problem, budget), setup)
        except DuplicatePointError as exc:
            if table.rep is not None:
                raise
            i, j = exc.pair
            raise InputError(f"duplicate design points on lines {table.lines[i]} and {table.lines[j]}") from None

    write_atomic(args.output, result.model.serialize())
    lines = {
        "problem": problem.value,
        "n": data.n,
        "J": _fmt(result.achieved_J),
        "E_n": _fmt(result.achieved_En),
        "lambda": _fmt(result.lambda_star),
        "edge_case": result.edge_case or "none",
        "solves": result.iterations,
        **info,
    }
    out = sys.stdout if args.output not in (None, "-") else sys.stderr
    for k, v in lines.items():
        print(f"{k}: {v}", file=out)
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        text = Path(args.model).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {args.model}: {exc.strerror}") from None
    model: SplineModel = deserialize(text)
    d = model.dim
    if (args.grid is None) == (args.points is None):
        raise InputError("give exactly one of --grid or --points")
    pts = _parse_grid(args.grid, d) if args.grid is not None else read_points(args.points, d)
    alphas = [_parse_alpha(a, d) for a in (args.deriv or [])]
    cols = [model.evaluate(pts)] + [model.derivative(pts, a) for a in alphas]
    header = [f"x{i + 1}" for i in range(d)] + ["f"] + [_deriv_label(a) for a in alphas]
    lines = [",".join(header)]
    for i in range(pts.shape[0]):
        lines.append(",".join([_fmt(v) for v in pts[i]] + [_fmt(c[i]) for c in cols]))
    write_atomic(args.output, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_estimate_sn(args) -> int:
    table = read_table(args.input)
    if table.rep is not None and args.method in ("auto", "replicate"):
        s_n, data = replicate_s_n(table.replicated())
        print(f"S_n: {_fmt(s_n)}")
        print("method: replicate variance")
        print(f"points: {data.n}")
        return EXIT_OK
    if args.method == "replicate":
        raise InputError("replicate estimate needs a 'rep' column")
    data = table.replicated().collapse() if table.rep is not None else table.dataset()
    est = partition_estimate(data, args.cells, _parse_domain(args.domain, data.X))
    print(f"S_n: {_fmt(est.s_n)}")
    print(f"method: partition variance (k={args.cells})")
    print(f"cells used: {len(est.cell_variances)}")
    if est.excluded:
        print("cells excluded: " + " ".join(str(c) for c in est.excluded))
    return EXIT_OK


def _method_name(text: str) -> str:
    t = text.strip()
    return t.upper() if t.lower() in ("a", "b", "cv") else t.lower()


def cmd_bench(args) -> int:
    if args.config is not None:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot read {args.config}: {exc.strerror}") from None
        try:
            cfg = bench.load_config(text)
        except (ValueError, TypeError) as exc:
            raise InputError(f"invalid config: {exc}") from None
        if args.experiment is not None and args.experiment != cfg.experiment:
            raise InputError(f"--experiment {args.experiment} conflicts with config experiment {cfg.experiment}")
    elif args.experiment is None:
        raise InputError("give --experiment or --config")
    else:
        cfg = None
    overrides = {
        "n_values": tuple(_parse_list(args.n, int, "--n")) if args.n else None,
        "methods": tuple(_method_name(m) for m in args.methods.split(",") if m.strip()) if args.methods else None,
        "reps": bench.FULL_REPS[args.experiment or cfg.experiment] if args.full else args.reps,
        "seed": args.seed,
        "replicates": args.replicates,
    }
    try:
        if cfg is None:
            cfg = bench.default_config(args.experiment, **overrides)
        else:
            cfg = bench.with_overrides(cfg, **overrides)
    except (ValueError, TypeError) as exc:
        raise InputError(f"invalid config: {exc}") from None
    progress = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    report = bench.run_experiment(cfg, progress)
    write_atomic(args.output, report.to_csv())
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smoothspline", description="Smoothing splines under roughness or residual budgets.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model to a CSV data file")
    f.add_argument("input", help="CSV with header x1..xd,y or x1..xd,rep,y")
    f.add_argument("--problem", required=True, choices=["a", "b", "c", "interp", "poly"], type=str.lower)
    f.add_argument("--un", type=float, help="roughness budget for problem a")
    f.add_argument("--sn", help="residual budget for problem b: a number or 'auto'")
    f.add_argument("--lambda", dest="lam", help="penalty for problem c: a number or 'cv'")
    f.add_argument("--lambda-grid", help="comma-separated grid for --lambda cv")
    f.add_argument("--m", type=int, default=2, help="derivative order of the roughness penalty (default 2)")
    f.add_argument("--domain", help="domain box [a,b]^d as 'a,b' (default: data range)")
    f.add_argument("--cells", type=int, default=5, help="cells per axis for --sn auto without replicates")
    f.add_argument("--seed", type=int, default=0, help="seed for anchor jitter fallback")
    f.add_argument("--output", "-o", help="model document path (default: stdout)")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="evaluate a saved model and its derivatives")
    e.add_argument("model", help="model document")
    e.add_argument("--grid", help="'a:b:num' per axis (tensor grid when d > 1)")
    e.add_argument("--points", help="CSV of evaluation points")
    e.add_argument("--deriv", action="append", help="derivative order (d=1) or comma multi-index; repeatable")
    e.add_argument("--output", "-o", help="CSV path (default: stdout)")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("estimate-sn", help="estimate the residual budget from data")
    s.add_argument("input")
    s.add_argument("--method", choices=["auto", "replicate", "partition"], default="auto")
    s.add_argument("--cells", type=int, default=5)
    s.add_argument("--domain")
    s.set_defaults(func=cmd_estimate_sn)

    b = sub.add_parser("bench", help="run a simulation experiment and report EIMSE")
    b.add_argument("--experiment", choices=list(bench.EXPERIMENTS))
    b.add_argument("--config", help="JSON experiment config")
    b.add_argument("--n", help="comma-separated sample sizes")
    b.add_argument("--methods", help="comma-separated methods (a, b, cv, lam1, ...)")
    b.add_argument("--reps", type=int, help="replications per n (default 50)")
    b.add_argument("--full", action="store_true", help="use the full replication counts (400, or 1600 for partition)")
    b.add_argument("--replicates", type=int, help="responses per design point")
    b.add_argument("--seed", type=int)
    b.add_argument("--output", "-o", help="CSV path (default: stdout)")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DuplicatePointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except VersionMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERSION
    except ModelFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UnsupportedDerivativeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DERIV
    except NotUnisolventError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SingularSystemError, RootFindingError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SplineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
