"""Command-line front end: ``fit``, ``simulate`` and ``bench``.

Exit codes: 0 success, 2 bad flags or config, 3 data errors, 4 fit failure.
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import complexity as cx
from .errors import DataError, FitError, SvcError
from .results import Criterion
from .simulation import (MODELS, FULL_GRID, AccuracyConfig, ComplexityConfig,
                         PredictorGenSpec, SvcGenSpec, fit_model, run_accuracy_experiment, run_benchmark,
                         run_complexity_experiment, write_rows)
from .spatial import SpatialDataset

EXIT_USAGE, EXIT_DATA, EXIT_FIT = 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _seed(value):
    if value is not None:
        return value
    env = os.environ.get("SVCSCALE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"SVCSCALE_SEED must be an integer, got {env!r}") from None


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


# -- fit ------------------------------------------------------------------

def read_dataset(path, coords, response, predictors):
    """Load a CSV into a :class:`SpatialDataset`, prepending an intercept."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    wanted = list(coords) + [response] + list(predictors)
    missing = [c for c in wanted if c not in header]
    if missing:
        raise DataError(f"missing columns: {', '.join(missing)}")
    idx = {c: header.index(c) for c in wanted}
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    values = np.empty((len(body), len(wanted)))
    for i, r in enumerate(body):
        for j, c in enumerate(wanted):
            try:
                values[i, j] = float(r[idx[c]])
            except (ValueError, IndexError):
                cell = r[idx[c]] if idx[c] < len(r) else ""
                raise DataError(f"row {i + 2}, column {c}: not a number: {cell!r}") from None
    n = len(body)
    X = np.column_stack([np.ones(n), values[:, 3:]]) if n else np.empty((0, 1 + len(predictors)))
    return SpatialDataset(values[:, :2], X, values[:, 2],
                          ("intercept",) + tuple(predictors))


def _summary(fit, data, model, criterion, seed):
    lines = [("model", model), ("n", data.N), ("seed", seed),
             ("pstar", fit.p_star), ("residual_sd", fit.residual_sd),
             ("singular_sites", len(fit.singular_sites)),
             ("converged", int(fit.converged))]
    sp = fit.scale_params
    if model in ("gwr", "gwra"):
        lines += [("criterion", criterion.value), ("bandwidth", sp["bandwidth"])]
    elif model in ("fbgwr", "fbgwra"):
        lines.append(("criterion", criterion.value))
        lines += [(f"bandwidth_{n}", b) for n, b in zip(data.names, sp["bandwidths"])]
        lines.append(("sweeps", sp["sweeps"]))
    elif model == "esf":
        lines += [("n_eigen_terms", sp["n_eigen_terms"]),
                  ("adjusted_r2", sp["adjusted_r2"]), ("n_eigenvectors", sp["L"])]
    else:
        lines += [(f"alpha_{n}", a) for n, a in zip(data.names, sp["alpha"])]
        lines += [(f"sigma_gamma_{n}", s) for n, s in zip(data.names, sp["sigma_gamma"])]
        lines += [("sigma", sp["sigma"]), ("loglik", sp["loglik"]),
                  ("n_eigenvectors", sp["L"])]
    return lines


def write_fit(path, fit, data, summary):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in summary:
            v = repr(float(value)) if isinstance(value, (float, np.floating)) else value
            fh.write(f"# {key} = {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site_id", "coord_1", "coord_2"]
                   + [f"beta_{n}" for n in data.names] + ["fitted", "residual"])
        for i in range(data.N):
            w.writerow([i, *map(repr, map(float, data.coords[i])),
                        *map(repr, map(float, fit.B[i])),
                        repr(float(fit.fitted[i])), repr(float(fit.residuals[i]))])


def cmd_fit(args):
    coords = _csv_list(args.coords)
    if len(coords) != 2:
        raise UsageError("--coords needs exactly two column names")
    predictors = _csv_list(args.predictors) if args.predictors else []
    seed = _seed(args.seed)
    data = read_dataset(args.data, coords, args.response, predictors)
    criterion = Criterion(args.criterion)
    try:
        fit = fit_model(args.model, data, criterion)
    except np.linalg.LinAlgError as exc:
        raise FitError(str(exc)) from exc
    write_fit(args.out, fit, data, _summary(fit, data, args.model, criterion, seed))
    return 0


# -- simulate -------------------------------------------------------------

def _floats(v):
    return tuple(float(x) for x in _csv_list(v))


def _ints(v):
    return tuple(int(x) for x in _csv_list(v))


def _triples(v):
    out = []
    for t in _csv_list(v):
        parts = t.split("/")
        if len(parts) != 3:
            raise ValueError(f"bandwidth triple must look like b0/b1/b2, got {t!r}")
        out.append(tuple(float(p) for p in parts))
    return tuple(out)


def _models(v):
    return tuple(m.lower() for m in _csv_list(v))


def _single_int(v):
    return int(v)


_COMMON = {"seed": _single_int, "replicates": _single_int}
SCHEMA = {
    "complexity": {**_COMMON, "n": _single_int, "b_x": _floats, "r_x": _floats,
                   "gwr_b": _floats, "gwra_fraction": _floats, "esf_q": _floats,
                   "reesf_alpha": _floats, "reesf_sigma": _floats},
    "accuracy": {**_COMMON, "n": _ints, "bandwidths": _triples, "b_x": _floats,
                 "r_x": _floats, "models": _models, "criterion": Criterion,
                 "grid": str},
}


def parse_config(text, experiment):
    """Parse flat ``key = value`` lines against the experiment's schema."""
    schema = SCHEMA[experiment]
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in schema:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        if key in out:
            raise UsageError(f"config line {lineno}: duplicate key {key!r}")
        try:
            out[key] = schema[key](value)
        except ValueError as exc:
            raise UsageError(f"config line {lineno}: bad value for {key}: {exc}") from None
    return out


def build_config(experiment, values, seed):
    values = dict(values)
    values.setdefault("seed", seed)
    if values["seed"] < 0:
        raise UsageError("seed must be nonnegative")
    if values.get("replicates", 1) < 1:
        raise UsageError("replicates must be positive")
    try:
        if experiment == "complexity":
            cfg = ComplexityConfig(**values)
            for bx, rx in cfg.cells():
                PredictorGenSpec(bx, rx)
            if cfg.n < 10:
                raise ValueError("n must be at least 10")
            specs = ([cx.GwrComplexity(b) for b in cfg.gwr_b]
                     + [cx.GwraComplexity(f) for f in cfg.gwra_fraction]
                     + [cx.EsfComplexity(q) for q in cfg.esf_q])
            for spec in specs:
                cx._check(spec)
            if min(cfg.reesf_alpha + cfg.reesf_sigma, default=0) < 0:
                raise ValueError("RE-ESF alpha and sigma must be nonnegative")
            return cfg
        grid = values.pop("grid", "flagship")
        if grid == "full":
            for k, v in FULL_GRID.items():
                values.setdefault(k, v)
        elif grid != "flagship":
            raise ValueError(f"grid must be 'flagship' or 'full', got {grid!r}")
        cfg = AccuracyConfig(**values)
        for n, bw, bx, rx in cfg.cells():
            SvcGenSpec(*bw)
            PredictorGenSpec(bx, rx)
            if n < 10:
                raise ValueError("n must be at least 10")
        return cfg
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(args):
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    cfg = build_config(args.experiment, parse_config(text, args.experiment), _seed(None))
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if threads < 1:
        raise UsageError("--threads must be positive")
    run = run_complexity_experiment if args.experiment == "complexity" else run_accuracy_experiment
    report = run(cfg, threads=threads)
    report.write(args.out, suffix=".partial" if report.partial else "")
    if report.partial:
        print("svcscale: interrupted; partial results written", file=sys.stderr)
        return 130
    return 0


# -- bench ----------------------------------------------------------------

def cmd_bench(args):
    try:
        sizes = _ints(args.sizes)
    except ValueError:
        raise UsageError("--sizes must be a comma-separated list of integers") from None
    if not sizes or min(sizes) < 10:
        raise UsageError("--sizes must list sample sizes of at least 10")
    if args.replicates < 1:
        raise UsageError("--replicates must be positive")
    models = _models(args.models) if args.models else MODELS
    if set(models) - set(MODELS):
        raise UsageError(f"unknown models: {sorted(set(models) - set(MODELS))}")
    rows = run_benchmark(sizes, args.replicates, seed=_seed(args.seed), models=models)
    write_rows(args.out, rows)
    return 0


def build_parser():
    p = _Parser(prog="svcscale", description="Spatially varying coefficient models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit one model to a CSV dataset")
    f.add_argument("--model", required=True, choices=MODELS)
    f.add_argument("--data", required=True)
    f.add_argument("--coords", required=True, help="two column names, comma-separated")
    f.add_argument("--response", required=True)
    f.add_argument("--predictors", default="", help="comma-separated column names")
    f.add_argument("--criterion", default="aicc", choices=[c.value for c in Criterion],
                   help="bandwidth criterion for the GWR family")
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int, default=None,
                   help="recorded in the summary; fitting itself is deterministic")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    s.add_argument("--experiment", required=True, choices=["complexity", "accuracy"])
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: all cores; 1 runs serially)")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", help="time the six models")
    b.add_argument("--sizes", required=True)
    b.add_argument("--replicates", type=int, required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--models", default=None)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        code, msg = EXIT_USAGE, str(exc)
    except DataError as exc:
        code, msg = EXIT_DATA, str(exc)
    except (FitError, SvcError) as exc:
        code, msg = EXIT_FIT, str(exc)
    print(f"svcscale: error: {' '.join(msg.split())}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
