"""Synthetic data generators and the Monte Carlo experiments.

Random streams are derived from the master seed by counter-based keys
``(experiment, cell, replicate, purpose)``, so any work unit can be
recomputed in isolation and results do not depend on scheduling.
"""

import csv
import itertools
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import complexity as cx
from .eigen import basis_for_coords
from .errors import SvcError
from .esf import esf_fit
from .fbgwr import fbgwr_fit
from .gwr import Geometry, gwr_fit
from .reesf import build_system, reesf_fit
from .results import Criterion
from .spatial import KernelMode, SpatialDataset, distance_matrix, proximity_matrix

SVC_MEANS = (1.0, -2.0, 0.5)
SVC_AMPLITUDES = (1.0, 3.0, 1.0)
NOISE_SD = 2.0
MODELS = ("gwr", "gwra", "fbgwr", "fbgwra", "esf", "reesf")
COEF_NAMES = ("intercept", "x1", "x2")

PURPOSES = ("coords", "x1_ns", "x1_s", "x2_ns", "x2_s",
            "svc0", "svc1", "svc2", "noise")
_EXPERIMENT_IDS = {"complexity": 1, "accuracy": 2, "bench": 3}


@dataclass(frozen=True)
class PredictorGenSpec:
    """``x = (1 - r_x) e_ns + r_x C(b_x) e_s``; ``b_x = 0`` means no smoothing."""

    b_x: float
    r_x: float

    def __post_init__(self):
        if not self.b_x >= 0:
            raise ValueError("b_x must be nonnegative")


@dataclass(frozen=True)
class SvcGenSpec:
    b0: float
    b1: float
    b2: float

    def __post_init__(self):
        if not min(self.b0, self.b1, self.b2) > 0:
            raise ValueError("SVC bandwidths must be positive")

    @property
    def bandwidths(self):
        return (self.b0, self.b1, self.b2)


# -- random streams ---------------------------------------------------------

def substream(master, *key):
    """Generator for the counter-based key ``key`` under ``master``."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key)))


def cell_key(params):
    """Stable integer key of a cell's parameter tuple."""
    return zlib.crc32(repr(tuple(float(p) for p in params)).encode())


def purpose_streams(rng):
    """One generator per data-generation purpose.

    ``rng`` may be an int seed, a ``SeedSequence`` or a ``Generator``.
    """
    if isinstance(rng, np.random.Generator):
        children = rng.spawn(len(PURPOSES))
    else:
        ss = rng if isinstance(rng, np.random.SeedSequence) else np.random.SeedSequence(int(rng))
        children = [np.random.default_rng(np.random.SeedSequence(
            entropy=ss.entropy, spawn_key=tuple(ss.spawn_key) + (i,)))
            for i in range(len(PURPOSES))]
    return dict(zip(PURPOSES, children))


# -- generators -------------------------------------------------------------

def moving_average(dist, b, eps):
    """Row-standardized exponential moving average of ``eps``."""
    if b == 0:
        return np.array(eps, dtype=float)
    return proximity_matrix(dist, b, row_standardize=True).C @ eps


def generate_predictor(coords, spec, rng, dist=None, rng_spatial=None):
    """Predictor ``(1 - r_x) e_ns + r_x C(b_x) e_s``.

    Both noise vectors come from ``rng`` (non-spatial first) unless a
    separate ``rng_spatial`` is given.
    """
    if dist is None:
        dist = distance_matrix(coords)
    n = dist.shape[0]
    e_ns = rng.standard_normal(n)
    e_s = (rng_spatial or rng).standard_normal(n)
    return (1.0 - spec.r_x) * e_ns + spec.r_x * moving_average(dist, spec.b_x, e_s)


def generate_svc_dataset(n, gen, pred, rng, noiseless=False):
    """Draw a dataset from the three-coefficient SVC model.

    Coordinates are i.i.d. standard normal. ``noiseless`` zeroes the SVC
    noise and the response noise (predictors are still random).

    Returns
    -------
    (SpatialDataset, true coefficient matrix of shape (n, 3))
    """
    if n < 10:
        raise ValueError("need at least 10 sites")
    s = purpose_streams(rng)
    coords = s["coords"].standard_normal((n, 2))
    dist = distance_matrix(coords)
    x1 = generate_predictor(None, pred, s["x1_ns"], dist, s["x1_s"])
    x2 = generate_predictor(None, pred, s["x2_ns"], dist, s["x2_s"])
    B = np.empty((n, 3))
    for k, (mean, amp, b) in enumerate(zip(SVC_MEANS, SVC_AMPLITUDES, gen.bandwidths)):
        eps = s[f"svc{k}"].standard_normal(n)
        B[:, k] = mean + (0.0 if noiseless else amp * moving_average(dist, b, eps))
    X = np.column_stack([np.ones(n), x1, x2])
    noise = s["noise"].standard_normal(n) * NOISE_SD
    y = np.einsum("ni,ni->n", X, B) + (0.0 if noiseless else noise)
    return SpatialDataset(coords, X, y, COEF_NAMES), B


# -- metrics ----------------------------------------------------------------

def rmse_profile(true_b, est_b):
    """Per-site RMSE, MAE and bias across replicates, plus site means.

    ``true_b`` and ``est_b`` are sequences (or stacked arrays) of
    ``(N, K)`` coefficient matrices, one per replicate.
    """
    t = np.asarray(true_b, dtype=float)
    e = np.asarray(est_b, dtype=float)
    if t.shape != e.shape or t.ndim != 3 or t.shape[0] < 1:
        raise ValueError(f"shape mismatch: {t.shape} vs {e.shape}")
    err = e - t
    rmse = np.sqrt(np.mean(err ** 2, axis=0))
    mae = np.mean(np.abs(err), axis=0)
    bias = np.mean(err, axis=0)
    return {"rmse_site": rmse, "mae_site": mae, "bias_site": bias,
            "rmse": rmse.mean(axis=0), "mae": mae.mean(axis=0),
            "bias": bias.mean(axis=0)}


# -- model dispatch ---------------------------------------------------------

def fit_model(name, data, criterion=Criterion.AICC, geometry=None, basis=None):
    """Fit one of the six models by its lowercase name."""
    if name in ("gwr", "gwra"):
        mode = KernelMode.FIXED if name == "gwr" else KernelMode.ADAPTIVE
        return gwr_fit(data, criterion=criterion, mode=mode, geometry=geometry)
    if name in ("fbgwr", "fbgwra"):
        mode = KernelMode.FIXED if name == "fbgwr" else KernelMode.ADAPTIVE
        return fbgwr_fit(data, mode=mode, criterion=criterion, geometry=geometry)
    if name in ("esf", "reesf"):
        if basis is None:
            basis = basis_for_coords(dist=geometry.dist if geometry else
                                     distance_matrix(data.coords))
        return esf_fit(data, basis) if name == "esf" else reesf_fit(data, basis)
    raise ValueError(f"unknown model {name!r}")


# -- reports ----------------------------------------------------------------

@dataclass
class SimulationReport:
    kind: str
    seed: int
    replicates: int
    cells: list = field(default_factory=list)
    raw: list = field(default_factory=list)
    timing: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    partial: bool = False

    def write(self, outdir, suffix=""):
        """Write ``cells.csv``, ``raw.csv`` and friends into ``outdir``."""
        import os
        os.makedirs(outdir, exist_ok=True)
        paths = {}
        for name in ("cells", "raw", "timing", "pairs"):
            rows = getattr(self, name)
            if not rows and name in ("timing", "pairs"):
                continue
            path = os.path.join(outdir, f"{name}.csv{suffix}")
            write_rows(path, rows)
            paths[name] = path
        return paths


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def write_rows(path, rows):
    cols = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])


def read_rows(path):
    """Read a CSV written by :func:`write_rows`, converting numbers."""
    def conv(s):
        if s == "":
            return None
        try:
            return int(s)
        except ValueError:
            try:
                return float(s)
            except ValueError:
                return s
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: conv(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def _parallel_map(func, units, threads):
    """Ordered map; returns (results, interrupted)."""
    results = []
    try:
        if threads is None or threads <= 1:
            for u in units:
                results.append(func(u))
        else:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                try:
                    for r in pool.map(func, units):
                        results.append(r)
                except KeyboardInterrupt:
                    pool.shutdown(wait=False, cancel_futures=True)
                    raise
    except KeyboardInterrupt:
        return results, True
    return results, False


# -- complexity experiment -------------------------------------------------

@dataclass(frozen=True)
class ComplexityConfig:
    n: int = 400
    b_x: tuple = (0.0, 0.2, 0.6, 1.0)
    r_x: tuple = (0.2, 0.6, 1.0, 2.0)
    gwr_b: tuple = (0.2, 0.6, 1.0, 2.0)
    gwra_fraction: tuple = (0.1, 0.3, 0.5, 1.0)
    esf_q: tuple = (0.2, 0.4, 0.6, 0.8)
    reesf_alpha: tuple = (0.2, 0.6, 1.0, 2.0)
    reesf_sigma: tuple = (0.1, 1.0)
    replicates: int = 200
    seed: int = 0

    def cells(self):
        return [(bx, rx) for bx in self.b_x for rx in self.r_x]


def _complexity_unit(args):
    cfg, (b_x, r_x), rep = args
    key = (_EXPERIMENT_IDS["complexity"], cell_key((b_x, r_x)), rep)
    s = purpose_streams(np.random.SeedSequence(entropy=int(cfg.seed), spawn_key=key))
    n = cfg.n
    coords = s["coords"].standard_normal((n, 2))
    geom = Geometry(coords)
    pred = PredictorGenSpec(b_x, r_x)
    x1 = generate_predictor(None, pred, s["x1_ns"], geom.dist, s["x1_s"])
    x2 = generate_predictor(None, pred, s["x2_ns"], geom.dist, s["x2_s"])
    data = SpatialDataset(coords, np.column_stack([np.ones(n), x1, x2]),
                          np.zeros(n), COEF_NAMES)
    basis = basis_for_coords(dist=geom.dist)
    system = build_system(data, basis)

    out = []

    def add(model, setting, res):
        out.append({"b_x": b_x, "r_x": r_x, "replicate": rep, "model": model,
                    "setting": setting, "p_star": res.p_star,
                    "n_singular": res.n_singular, "L": basis.L})

    for b in cfg.gwr_b:
        add("GWR", f"b={b}", cx.evaluate(data, cx.GwrComplexity(b), geometry=geom))
    for f in cfg.gwra_fraction:
        add("GWRa", f"bad={f}", cx.evaluate(data, cx.GwraComplexity(f), geometry=geom))
    for q in cfg.esf_q:
        add("ESF", f"q={q}", cx.evaluate(data, cx.EsfComplexity(q), basis=basis))
    for a in cfg.reesf_alpha:
        for sg in cfg.reesf_sigma:
            spec = cx.ReesfComplexity((a,) * 3, (sg,) * 3)
            add("REESF", f"alpha={a};sigma={sg}",
                cx.evaluate(data, spec, basis=basis, system=system))
    return out


def aggregate_complexity(raw):
    groups = {}
    for r in raw:
        groups.setdefault((r["b_x"], r["r_x"], r["model"], r["setting"]), []).append(r)
    cells = []
    for (b_x, r_x, model, setting), rows in groups.items():
        p = [r["p_star"] for r in rows]
        cells.append({"b_x": b_x, "r_x": r_x, "model": model, "setting": setting,
                      "replicates": len(rows), "p_star_mean": math.fsum(p) / len(p),
                      "n_singular_total": sum(r["n_singular"] for r in rows)})
    return cells


def run_complexity_experiment(cfg, threads=1):
    """Mean effective number of parameters over the predictor x SVC grid."""
    units = [(cfg, cell, rep) for cell in cfg.cells() for rep in range(cfg.replicates)]
    results, interrupted = _parallel_map(_complexity_unit, units, threads)
    raw = [row for unit in results for row in unit]
    return SimulationReport("complexity", cfg.seed, cfg.replicates,
                            cells=aggregate_complexity(raw), raw=raw,
                            partial=interrupted)


# -- accuracy experiment ---------------------------------------------------

FLAGSHIP = ((1.0, 0.2, 1.0), 1.0, 1.0)

FULL_GRID = {
    "n": (50, 150, 400),
    "bandwidths": ((0.2, 0.2, 0.2), (1.0, 0.2, 1.0), (0.2, 1.0, 0.2), (1.0, 1.0, 1.0)),
    "b_x": (0.2, 0.6, 1.0),
    "r_x": (0.0, 0.4, 0.8, 1.0),
}


@dataclass(frozen=True)
class AccuracyConfig:
    n: tuple = (400,)
    bandwidths: tuple = (FLAGSHIP[0],)
    b_x: tuple = (FLAGSHIP[1],)
    r_x: tuple = (FLAGSHIP[2],)
    models: tuple = MODELS
    criterion: Criterion = Criterion.AICC
    replicates: int = 50
    seed: int = 0

    def __post_init__(self):
        bad = set(self.models) - set(MODELS)
        if bad:
            raise ValueError(f"unknown models: {sorted(bad)}")

    @classmethod
    def full_grid(cls, **kw):
        return cls(n=FULL_GRID["n"], bandwidths=FULL_GRID["bandwidths"],
                   b_x=FULL_GRID["b_x"], r_x=FULL_GRID["r_x"], **kw)

    def cells(self):
        return [(n, tuple(bw), bx, rx) for n, bw, bx, rx in
                itertools.product(self.n, self.bandwidths, self.b_x, self.r_x)]


def _cell_params(cell):
    n, bw, bx, rx = cell
    return {"n": n, "b0": bw[0], "b1": bw[1], "b2": bw[2], "b_x": bx, "r_x": rx}


def accuracy_dataset(seed, cell, rep, experiment="accuracy"):
    n, bw, bx, rx = cell
    key = (_EXPERIMENT_IDS[experiment], cell_key((n,) + tuple(bw) + (bx, rx)), rep)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return generate_svc_dataset(n, SvcGenSpec(*bw), PredictorGenSpec(bx, rx), ss)


def _accuracy_unit(args):
    cfg, cell, rep = args
    data, true_b = accuracy_dataset(cfg.seed, cell, rep)
    rows, timing = [], []
    params = _cell_params(cell)
    for model in cfg.models:
        t0 = time.perf_counter()
        try:
            fit = fit_model(model, data, cfg.criterion)
            err = None
        except (SvcError, np.linalg.LinAlgError) as exc:
            fit, err = None, str(exc)
        timing.append({**params, "replicate": rep, "model": model,
                       "seconds": time.perf_counter() - t0})
        base = {**params, "replicate": rep, "model": model}
        if fit is None:
            rows.append({**base, "status": "failed", "site": None,
                         "coord_1": None, "coord_2": None,
                         **{f"true_{c}": None for c in COEF_NAMES},
                         **{f"est_{c}": None for c in COEF_NAMES},
                         "p_star": None, "n_singular": None, "converged": None})
            continue
        for i in range(data.N):
            rows.append({**base, "status": "ok", "site": i,
                         "coord_1": data.coords[i, 0], "coord_2": data.coords[i, 1],
                         **{f"true_{c}": true_b[i, k] for k, c in enumerate(COEF_NAMES)},
                         **{f"est_{c}": fit.B[i, k] for k, c in enumerate(COEF_NAMES)},
                         "p_star": fit.p_star, "n_singular": len(fit.singular_sites),
                         "converged": fit.converged})
    return rows, timing


_CELL_FIELDS = ("n", "b0", "b1", "b2", "b_x", "r_x")


def aggregate_accuracy(raw):
    """Cell-level RMSE/MAE/bias rows and figure-ready RMSE pairs from raw rows."""
    groups = {}
    for r in raw:
        key = tuple(r[f] for f in _CELL_FIELDS) + (r["model"],)
        g = groups.setdefault(key, {"reps": {}, "failed": 0})
        if r["status"] != "ok":
            g["failed"] += 1
            continue
        g["reps"].setdefault(r["replicate"], []).append(r)
    cells, pairs = [], {}
    for key, g in groups.items():
        reps = [g["reps"][k] for k in sorted(g["reps"])]
        base = dict(zip(_CELL_FIELDS, key[:-1]))
        model = key[-1]
        if not reps:
            for c in COEF_NAMES:
                cells.append({**base, "model": model, "coefficient": c,
                              "replicates": 0, "failures": g["failed"],
                              "rmse": None, "mae": None, "bias": None,
                              "p_star_mean": None, "singular_fits": None,
                              "nonconverged_fits": None})
            continue
        true_b = [[[r[f"true_{c}"] for c in COEF_NAMES] for r in rows] for rows in reps]
        est_b = [[[r[f"est_{c}"] for c in COEF_NAMES] for r in rows] for rows in reps]
        prof = rmse_profile(true_b, est_b)
        p_star = math.fsum(rows[0]["p_star"] for rows in reps) / len(reps)
        sing = sum(1 for rows in reps if rows[0]["n_singular"] > 0)
        nonconv = sum(1 for rows in reps if not rows[0]["converged"])
        for k, c in enumerate(COEF_NAMES):
            cells.append({**base, "model": model, "coefficient": c,
                          "replicates": len(reps), "failures": g["failed"],
                          "rmse": float(prof["rmse"][k]), "mae": float(prof["mae"][k]),
                          "bias": float(prof["bias"][k]), "p_star_mean": p_star,
                          "singular_fits": sing, "nonconverged_fits": nonconv})
            pairs.setdefault(key[:-1] + (c,), {})[model] = float(prof["rmse"][k])
    pair_rows = []
    for key, by_model in pairs.items():
        row = dict(zip(_CELL_FIELDS, key[:-1]))
        row["coefficient"] = key[-1]
        for m in MODELS:
            row[f"rmse_{m}"] = by_model.get(m)
        pair_rows.append(row)
    return cells, pair_rows


def _aggregate_timing(timing):
    groups = {}
    for t in timing:
        groups.setdefault(tuple(t[f] for f in _CELL_FIELDS) + (t["model"],), []).append(t["seconds"])
    return [{**dict(zip(_CELL_FIELDS, k[:-1])), "model": k[-1], "replicates": len(v),
             "mean_seconds": sum(v) / len(v)} for k, v in groups.items()]


def run_accuracy_experiment(cfg, threads=1):
    """Fit the requested models on replicated synthetic data per cell.

    ``cells`` and ``raw`` are deterministic given the config; wall-clock
    times are kept apart in ``timing``.
    """
    units = [(cfg, cell, rep) for cell in cfg.cells() for rep in range(cfg.replicates)]
    results, interrupted = _parallel_map(_accuracy_unit, units, threads)
    raw = [row for rows, _ in results for row in rows]
    timing = [t for _, ts in results for t in ts]
    cells, pairs = aggregate_accuracy(raw)
    return SimulationReport("accuracy", cfg.seed, cfg.replicates, cells=cells,
                            raw=raw, timing=_aggregate_timing(timing), pairs=pairs,
                            partial=interrupted)


# -- timing benchmark -------------------------------------------------------

def run_benchmark(sizes, replicates, seed=0, models=MODELS,
                  bandwidths=FLAGSHIP[0], b_x=FLAGSHIP[1], r_x=FLAGSHIP[2],
                  criterion=Criterion.AICC):
    """Mean wall-clock seconds per (N, model).

    Each timed fit starts from the raw dataset, so distance matrices and
    eigenbases are part of every model's time.
    """
    rows = []
    for n in sizes:
        cell = (int(n), tuple(bandwidths), b_x, r_x)
        datasets = [accuracy_dataset(seed, cell, r, "bench")[0] for r in range(replicates)]
        for model in models:
            secs = []
            for data in datasets:
                t0 = time.perf_counter()
                fit_model(model, data, criterion)
                secs.append(time.perf_counter() - t0)
            rows.append({"n": int(n), "model": model, "replicates": replicates,
                         "mean_seconds": sum(secs) / len(secs)})
    return rows
