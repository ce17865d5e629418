"""Cross-validation over the l1 grid and multi-method benchmark runs.

The protocol mirrors the synthetic benchmark layout: per repetition, select
the l1 weight by stratified k-fold cross-validation on an exponential
multiplier grid scaled by the nontriviality bound, refit on the full
training data, and evaluate nearest-centroid accuracy, discriminant
cardinality and fit runtime on held-out data. Pairwise prediction cosines
summarize how much the methods actually disagree.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .classify import (
    fit_centroids,
    knn_predict,
    metrics,
    predict_nearest_centroid,
    prediction_cosine,
)
from .core import Dataset, Method, build_indicator, center_columns
from .datagen import kfold_split
from .deflation import fit_deflation
from .dfsos import fit_dfsos, init_theta, lambda_max
from .errors import AllCellsFailed, SparseScoreError, SpecInvalid
from .parallel import map_indexed

GAUSSIAN_GRID = tuple(2.0 ** e for e in range(-3, 4))
UCR_GRID = tuple(2.0 ** e for e in range(-4, 1))

KNN_METHODS = {"knn1": 1, "knn5": 5, "knn10": 10}

DISPLAY_NAMES = {
    "apg": "APG",
    "admm": "ADMM",
    "dfsos1": "DFSOS-1",
    "dfsos2": "DFSOS-2",
    "knn1": "1-NN",
    "knn5": "5-NN",
    "knn10": "10-NN",
}


@dataclass(frozen=True)
class CvPlan:
    """Multiplier grid and fold count for l1-weight selection."""

    grid_multipliers: tuple = GAUSSIAN_GRID
    folds: int = 5
    selection: str = "max_accuracy"

    def __post_init__(self):
        m = tuple(float(x) for x in self.grid_multipliers)
        if not m or any(x <= 0 for x in m) or list(m) != sorted(m):
            raise SpecInvalid("multipliers must be positive and sorted ascending")
        if self.folds < 2:
            raise SpecInvalid("folds must be at least 2")
        if self.selection != "max_accuracy":
            raise SpecInvalid(f"unknown selection rule {self.selection!r}")
        object.__setattr__(self, "grid_multipliers", m)


@dataclass(frozen=True)
class CvRow:
    multiplier: float
    fold_accuracies: tuple
    mean_accuracy: float
    failed_folds: int


def fit_method(train, method, cfg, q=None):
    """Fit one solver and assemble its nearest-centroid classifier.

    Returns (SosModel, CentroidModel, FitTrace).
    """
    m = Method(method)
    if m in (Method.DEFLATION_APG, Method.DEFLATION_ADMM):
        solver = "apg" if m is Method.DEFLATION_APG else "admm"
        model, trace = fit_deflation(train, cfg, q=q, beta_solver=solver)
    else:
        variant = "v1" if m is Method.DFSOS_V1 else "v2"
        model, trace = fit_dfsos(train, cfg, q=q, variant=variant)
    Xc, means = center_columns(train.X)
    cmodel = fit_centroids(
        Xc @ model.Beta, train.labels, train.K, Beta=model.Beta, column_means=means
    )
    return model, cmodel, trace


def _fold_lambda_max(train, cfg, q):
    Xc, _ = center_columns(train.X)
    ind = build_indicator(train.labels, train.K)
    theta0 = init_theta(train.K, q, ind.D, cfg.seed)
    return lambda_max(Xc, ind.Y, theta0, cfg.gamma)


def cross_validate(data, cfg, plan, method, q=None):
    """Pick the l1 weight by stratified k-fold validation accuracy.

    Each cell fits at lam = multiplier * lambda_max(fold), so folds are
    self-contained; failed cells are excluded from the fold mean. Ties
    between multipliers resolve to the larger one (sparser model). The
    returned weight is the winning multiplier scaled by lambda_max of the
    full training data.

    Returns (best_lambda, rows) where rows is a list of CvRow.
    """
    q = data.K - 1 if q is None else q
    mults = plan.grid_multipliers
    folds = kfold_split(data.labels, plan.folds, cfg.seed)
    cells = []
    for train_idx, val_idx in folds:
        tr = Dataset(X=data.X[train_idx], labels=data.labels[train_idx], K=data.K)
        lmax = _fold_lambda_max(tr, cfg, q)
        cells.append((tr, data.X[val_idx], data.labels[val_idx], lmax))

    def run_cell(flat):
        mi, fi = divmod(flat, len(cells))
        tr, X_val, y_val, lmax = cells[fi]
        if not math.isfinite(lmax):
            return None
        try:
            cfg_cell = replace(cfg, lam=mults[mi] * lmax)
            _, cmodel, _ = fit_method(tr, method, cfg_cell, q)
            pred = predict_nearest_centroid(cmodel, X_val)
            return float((pred == y_val).mean())
        except SparseScoreError:
            return None

    flat = map_indexed(run_cell, len(mults) * len(cells))
    rows = []
    best = None
    for mi, mult in enumerate(mults):
        accs = flat[mi * len(cells): (mi + 1) * len(cells)]
        ok = [a for a in accs if a is not None]
        mean = float(np.mean(ok)) if ok else math.nan
        rows.append(
            CvRow(
                multiplier=mult,
                fold_accuracies=tuple(math.nan if a is None else a for a in accs),
                mean_accuracy=mean,
                failed_folds=len(accs) - len(ok),
            )
        )
        if ok and (best is None or mean >= rows[best].mean_accuracy):
            best = mi
    if best is None:
        raise AllCellsFailed(f"no cross-validation cell succeeded for {method}")
    lmax_full = _fold_lambda_max(data, cfg, q)
    return mults[best] * lmax_full, rows


@dataclass(frozen=True)
class MethodStats:
    """Per-method raw vectors over repetitions (NaN marks a failed cell)."""

    method: str
    accuracy: tuple
    runtime: tuple
    cardinality: tuple
    failures: tuple = ()

    def _agg(self, values):
        ok = [v for v in values if not math.isnan(v)]
        if not ok:
            return math.nan, math.nan
        return float(np.mean(ok)), float(np.var(ok))

    @property
    def accuracy_mean_var(self):
        return self._agg(self.accuracy)

    @property
    def runtime_mean_var(self):
        return self._agg(self.runtime)

    @property
    def cardinality_mean_var(self):
        return self._agg(self.cardinality)


@dataclass(frozen=True)
class BenchReport:
    methods: tuple
    stats: dict
    cosine: np.ndarray
    repetitions: int
    seed: int


def run_benchmark(datasets, methods, cfg, repetitions, plan=None, q=None):
    """Benchmark methods over repeated experiments.

    Parameters
    ----------
    datasets : a (train, test) pair reused across repetitions, or a callable
        rep -> (train, test) for protocols that resample data per repetition
    methods : method names; solver names plus "knn1"/"knn5"/"knn10"
    cfg : SolverConfig; repetition r runs with seed cfg.seed + r
    repetitions : number of repetitions (fresh seed each)
    plan : optional CvPlan; when given and cfg.lam == "auto", the l1 weight
        is selected by cross-validation per (method, repetition)

    Runtime measures the final fit and classifier assembly (not the
    cross-validation search). Per-cell failures are recorded as NaN and
    never abort the run.

    Returns a BenchReport. The cosine matrix averages pairwise prediction
    cosines across repetitions; diagonal entries average each method's
    self-similarity across repetition pairs (1.0 when repetitions == 1).
    """
    if repetitions < 1:
        raise SpecInvalid("repetitions must be at least 1")
    methods = [m if isinstance(m, str) else Method(m).value for m in methods]
    preds = {m: [None] * repetitions for m in methods}
    acc = {m: [math.nan] * repetitions for m in methods}
    rt = {m: [math.nan] * repetitions for m in methods}
    card = {m: [math.nan] * repetitions for m in methods}
    fails = {m: [] for m in methods}

    for rep in range(repetitions):
        train, test = datasets(rep) if callable(datasets) else datasets
        cfg_rep = replace(cfg, seed=cfg.seed + rep)
        for m in methods:
            try:
                if m in KNN_METHODS:
                    t0 = time.perf_counter()
                    pred = knn_predict(train.X, train.labels, test.X, KNN_METHODS[m])
                    rt[m][rep] = time.perf_counter() - t0
                    acc[m][rep] = float((pred == test.labels).mean())
                else:
                    cfg_fit = cfg_rep
                    if plan is not None and isinstance(cfg.lam, str):
                        best_lam, _ = cross_validate(train, cfg_rep, plan, m, q)
                        cfg_fit = replace(cfg_rep, lam=best_lam)
                    t0 = time.perf_counter()
                    model, cmodel, _ = fit_method(train, m, cfg_fit, q)
                    pred = predict_nearest_centroid(cmodel, test.X)
                    rt[m][rep] = time.perf_counter() - t0
                    got = metrics(pred, test.labels, model.Beta)
                    acc[m][rep] = got["accuracy"]
                    card[m][rep] = got["cardinality"]
                preds[m][rep] = pred
            except SparseScoreError as e:
                fails[m].append(f"rep {rep}: {e}")

    cosine = _cosine_matrix(methods, preds, repetitions)
    stats = {
        m: MethodStats(
            method=m,
            accuracy=tuple(acc[m]),
            runtime=tuple(rt[m]),
            cardinality=tuple(card[m]),
            failures=tuple(fails[m]),
        )
        for m in methods
    }
    return BenchReport(
        methods=tuple(methods),
        stats=stats,
        cosine=cosine,
        repetitions=repetitions,
        seed=cfg.seed,
    )


def _cosine_matrix(methods, preds, repetitions):
    m = len(methods)
    out = np.full((m, m), math.nan)
    for i, mi in enumerate(methods):
        for j, mj in enumerate(methods):
            if j < i:
                continue
            if i == j:
                vals = [
                    prediction_cosine(preds[mi][r], preds[mi][s])
                    for r in range(repetitions)
                    for s in range(r + 1, repetitions)
                    if preds[mi][r] is not None and preds[mi][s] is not None
                ]
                out[i, i] = float(np.mean(vals)) if vals else 1.0
            else:
                vals = [
                    prediction_cosine(preds[mi][r], preds[mj][r])
                    for r in range(repetitions)
                    if preds[mi][r] is not None and preds[mj][r] is not None
                ]
                out[i, j] = out[j, i] = float(np.mean(vals)) if vals else math.nan
    return out


def _fmt_mean_var(mean, var):
    if math.isnan(mean):
        return "--"
    return f"{mean:.3g} ({var:.3g})"


def write_report(report, outdir):
    """Write the benchmark tables: a measure-by-method summary, the cosine
    matrix, per-repetition raw vectors, and a key-value summary."""
    import pathlib

    outdir = pathlib.Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    names = [DISPLAY_NAMES.get(m, m) for m in report.methods]

    lines = ["Measure\t" + "\t".join(names)]
    rows = [
        ("Accuracy", lambda s: s.accuracy_mean_var),
        ("Run-time (s)", lambda s: s.runtime_mean_var),
        ("Cardinality", lambda s: s.cardinality_mean_var),
    ]
    for label, get in rows:
        cells = [_fmt_mean_var(*get(report.stats[m])) for m in report.methods]
        lines.append(label + "\t" + "\t".join(cells))
    (outdir / "table.tsv").write_text("\n".join(lines) + "\n")

    lines = ["method\t" + "\t".join(names)]
    for i, m in enumerate(report.methods):
        vals = "\t".join("%.17g" % v for v in report.cosine[i])
        lines.append(f"{names[i]}\t{vals}")
    (outdir / "cosine.tsv").write_text("\n".join(lines) + "\n")

    for measure in ("accuracy", "runtime", "cardinality"):
        lines = ["rep\t" + "\t".join(names)]
        for rep in range(report.repetitions):
            vals = "\t".join(
                "%.17g" % getattr(report.stats[m], measure)[rep] for m in report.methods
            )
            lines.append(f"{rep}\t{vals}")
        (outdir / f"raw_{measure}.tsv").write_text("\n".join(lines) + "\n")

    kv = [f"repetitions={report.repetitions}", f"seed={report.seed}"]
    for m in report.methods:
        s = report.stats[m]
        for measure in ("accuracy", "runtime", "cardinality"):
            mean, var = getattr(s, f"{measure}_mean_var")
            kv.append(f"{m}.{measure}.mean=%.17g" % mean)
            kv.append(f"{m}.{measure}.variance=%.17g" % var)
        kv.append(f"{m}.failures={len(s.failures)}")
    (outdir / "summary.kv").write_text("\n".join(kv) + "\n")
