"""Recovery metrics, forecasting error, hyperparameter search and varsortability."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import (SVARModel, TimeSeriesSample, as_lag_stack, support,
                    topological_order)
from .ordering import PartialOrdering
from .solver import Hyperparams, Problem, fit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SkeletonMetrics:
    tp_rate: float
    tn_rate: float
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self):
        return asdict(self)


def skeleton_metrics(estimate, truth, prior=None, exclude_forbidden=False,
                     offdiag=True, zero_tol=0.0):
    """Compare two supports cell by cell.

    ``estimate`` may be a boolean support or a coefficient matrix (its exact
    support is used). ``truth`` is a coefficient matrix. The diagonal is
    skipped when ``offdiag`` is set, as for contemporaneous matrices; lag
    matrices keep it. Prior-forbidden cells count toward the negatives
    unless ``exclude_forbidden`` is set.
    """
    est = np.asarray(estimate)
    est = est.astype(bool) if est.dtype == bool else np.abs(est) > zero_tol
    tru = np.abs(np.asarray(truth, dtype=float)) > 0
    if est.shape != tru.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {tru.shape}")
    cells = np.ones_like(tru)
    if offdiag:
        np.fill_diagonal(cells, False)
    if prior is not None and exclude_forbidden:
        cells &= ~prior.mask()
    tp = int(np.sum(est & tru & cells))
    fn = int(np.sum(~est & tru & cells))
    tn = int(np.sum(~est & ~tru & cells))
    fp = int(np.sum(est & ~tru & cells))
    tp_rate = tp / (tp + fn) if tp + fn else 1.0
    tn_rate = tn / (tn + fp) if tn + fp else 1.0
    return SkeletonMetrics(tp_rate, tn_rate, tp, fp, tn, fn)


def one_step_forecast(A_hat, B_hat, history):
    """``(I - A)^{-1} sum_j B_j x_{n+1-j}`` with ``history[-1] = x_n``."""
    model = SVARModel(np.asarray(A_hat, dtype=float), as_lag_stack(B_hat))
    history = np.atleast_2d(np.asarray(history, dtype=float))
    if history.shape[0] < model.d:
        raise ValueError(f"need {model.d} past observations, got {history.shape[0]}")
    drive = sum(model.B[j] @ history[-1 - j] for j in range(model.d))
    return np.linalg.solve(np.eye(model.p) - model.A, drive)


def relative_l2_error(forecast, actual):
    actual = np.asarray(actual, dtype=float)
    den = np.linalg.norm(actual)
    if den == 0.0:
        raise ValueError("relative error undefined for a zero target")
    return float(np.linalg.norm(np.asarray(forecast, dtype=float) - actual) / den)


def forecast_error(model, sample, target):
    """Relative error of the forecast of ``target`` from the tail of ``sample``."""
    data = sample.data if isinstance(sample, TimeSeriesSample) else np.asarray(sample)
    return relative_l2_error(one_step_forecast(model.A, model.B, data[-model.d:]), target)


def normalize_columns(sample):
    """De-mean and scale every column to unit sample standard deviation."""
    s = sample.demeaned()
    sd = s.data.std(axis=0)
    if np.any(sd == 0):
        raise ValueError("cannot normalise a zero-variance column")
    return TimeSeriesSample(s.data / sd, means=s.means, names=s.names)


def varsortability(truth, data, rtol=1e-10):
    """Share of ancestor/descendant pairs whose marginal variance increases downstream.

    Every ordered pair ``(j, i)`` with a directed path ``j -> ... -> i`` in
    the support of ``truth`` is scored 1 if ``Var(x_j) < Var(x_i)``, 1/2 on
    a tie and 0 otherwise. Variances within ``rtol`` of each other tie, so
    standardised columns are not split by rounding.
    """
    X = data.data if isinstance(data, TimeSeriesSample) else np.asarray(data, dtype=float)
    var = X.var(axis=0)
    G = support(truth, 0.0)
    order = topological_order(truth, 0.0)
    p = G.shape[0]
    # reach[i, j]: j is an ancestor of i
    reach = np.zeros((p, p), dtype=bool)
    for i in order:
        parents = np.flatnonzero(G[i])
        if parents.size:
            reach[i] = G[i] | reach[parents].any(axis=0)
    child, anc = np.nonzero(reach)
    if child.size == 0:
        return float("nan")
    vi, vj = var[child], var[anc]
    tie = np.abs(vi - vj) <= rtol * np.maximum(vi, vj)
    score = np.where(tie, 0.5, np.where(vj < vi, 1.0, 0.0))
    return float(score.mean())


# ---------------------------------------------------------------- grid search

def default_mu_B_grid(p, d, n, c=None):
    """``c * sqrt(log(p d) / N)`` with ``N = n - d``."""
    c = np.linspace(0.05, 0.5, 5) if c is None else np.asarray(c, dtype=float)
    return list(c * np.sqrt(np.log(p * d) / (n - d)))


def default_mu_A_grid(k=5):
    return list(np.geomspace(0.01, 0.3, k))


@dataclass
class GridSearchReport:
    grid: list = field(default_factory=list)
    best: tuple = (None, None)

    def to_dict(self):
        return {"grid": [{"mu_A": a, "mu_B": b, "rmse": r} for a, b, r in self.grid],
                "best": {"mu_A": self.best[0], "mu_B": self.best[1]}}


def _pairs(sample, d):
    X, X_lag = sample.lagged(d)
    return X, X_lag


def _prediction_rmse(res, X, X_lag):
    p = X.shape[1]
    pred = np.linalg.solve(np.eye(p) - res.A_hat, np.hstack(res.B_hat) @ X_lag.T).T
    return float(np.sqrt(np.mean((pred - X) ** 2)))


def split_pairs(N, train_fraction=0.8, seed=0, folds=None):
    """Index lists ``[(train, validation), ...]`` over the ``N`` lag-aligned pairs.

    With ``folds`` set, the shuffled pairs are cut into that many disjoint
    validation blocks; otherwise a single ``train_fraction`` split is made.
    """
    perm = np.random.default_rng(seed).permutation(N)
    if folds:
        parts = np.array_split(perm, folds)
        return [(np.sort(np.concatenate(parts[:k] + parts[k + 1:])), np.sort(parts[k]))
                for k in range(folds)]
    if not 0 < train_fraction < 1:
        raise ValueError("train fraction must lie in (0, 1)")
    n_train = int(round(train_fraction * N))
    if n_train < 2 or N - n_train < 1:
        raise ValueError(f"{N} pairs are too few for a {train_fraction:.2f} split")
    return [(np.sort(perm[:n_train]), np.sort(perm[n_train:]))]


def _score_cell(args):
    X, X_lag, prior, h, splits = args
    errs = []
    for tr, va in splits:
        res = fit(Problem(X[tr], X_lag[tr], prior), None, h=h, record_trace=False)
        errs.append(_prediction_rmse(res, X[va], X_lag[va]))
    return float(np.mean(errs))


def grid_search(sample, d, prior=None, mu_A_grid=None, mu_B_grid=None,
                train_fraction=0.8, seed=0, folds=None, base=None, map_fn=map):
    """Pick ``(mu_A, mu_B)`` by validation RMSE of the one-step reduced-form prediction.

    Pairs ``(x_t, [x_{t-1}, ..., x_{t-d}])`` are split at the pair level, so
    each pair keeps its own lags. ``map_fn`` lets callers run the cells in a
    process pool. Ties go to the larger ``mu_A``, then the larger ``mu_B``.
    """
    X, X_lag = _pairs(sample, d)
    N, p = X.shape
    mu_A_grid = default_mu_A_grid() if mu_A_grid is None else list(mu_A_grid)
    mu_B_grid = default_mu_B_grid(p, d, N + d) if mu_B_grid is None else list(mu_B_grid)
    if not mu_A_grid or not mu_B_grid:
        raise ValueError("grids must be non-empty")
    base = Hyperparams() if base is None else base
    splits = split_pairs(N, train_fraction, seed, folds)
    cells = [(float(a), float(b)) for a in mu_A_grid for b in mu_B_grid]
    jobs = [(X, X_lag, prior, base.replace(mu_A=a, mu_B=b), splits) for a, b in cells]
    rmse = list(map_fn(_score_cell, jobs))
    grid = [(a, b, r) for (a, b), r in zip(cells, rmse)]
    best = min(grid, key=lambda g: (g[2], -g[0], -g[1]))
    return GridSearchReport(grid=grid, best=(best[0], best[1]))


def refine_grid(values, best, k=5):
    """``k`` points spanning the neighbours of ``best`` in a sorted coarse grid."""
    v = sorted(values)
    i = v.index(best)
    lo = v[i - 1] if i > 0 else best
    hi = v[i + 1] if i + 1 < len(v) else best
    pts = set(np.linspace(lo, hi, k).tolist()) | {best}
    return sorted(pts)


# ---------------------------------------------------------------- replicate reports

def evaluate_fit(res, truth, prior=None, holdout=None, history=None, exclude_forbidden=False):
    """Metrics for one fit: skeleton rates for ``A`` and each lag, plus forecast error."""
    out = {}
    mA = skeleton_metrics(res.A_hat, truth.A, prior, exclude_forbidden)
    out["TP"], out["TN"] = mA.tp_rate, mA.tn_rate
    for j, (Bh, Bt) in enumerate(zip(res.B_hat, truth.B), start=1):
        m = skeleton_metrics(Bh, Bt, offdiag=False)
        out[f"B{j}_TP"], out[f"B{j}_TN"] = m.tp_rate, m.tn_rate
    if holdout is not None and history is not None:
        out["rel_l2"] = forecast_error(res.model, history, holdout)
    return out


def run_replicate(spec, seed, n, prior_fraction=0.0, h=None, normalize=False,
                  burn_in=1000, setting_id=None):
    """Draw, simulate, fit and score one replicate. Pure function of its inputs."""
    from .ordering import random_nonsupport_mask
    from .simulate import generate_parameters, simulate

    t0 = time.perf_counter()
    model, noise, info = generate_parameters(spec, seed)
    full = simulate(model, None, noise, n + 1, burn_in=burn_in, rng_seed=seed + 1_000_003)
    train = TimeSeriesSample(full.data[:n])
    target = full.data[n]
    prior = (random_nonsupport_mask(model.A, prior_fraction, seed + 2_000_003)
             if prior_fraction > 0 else None)
    work = train.demeaned()
    if normalize:
        work = normalize_columns(train)
        target = (target - work.means) / train.data.std(axis=0)
    else:
        target = target - work.means
    res = fit(work, model.d, prior, h, record_trace=False)
    row = {"setting": setting_id, "seed": seed, "n": n, "prior_fraction": prior_fraction}
    row.update(evaluate_fit(res, model, prior, holdout=target, history=work))
    row.update({
        "rho": info["rho"],
        "outer_iters": res.outer_iters,
        "inner_iters": res.inner_iters,
        "converged": res.converged,
        "projected": res.projected,
        "forbidden_zero": bool(prior is None or np.all(res.A_hat[prior.mask()] == 0.0)),
        "acyclic": bool(res.acyclic_after_projection),
        "runtime_s": time.perf_counter() - t0,
    })
    return row


AGGREGATE_METRICS = ("TP", "TN", "B1_TP", "B1_TN", "B2_TP", "B2_TN", "rel_l2")


def aggregate(rows):
    """Median and sd over seeds for every ``(setting, n, prior_fraction)`` cell."""
    keys = sorted({(r["setting"], r["n"], r["prior_fraction"]) for r in rows},
                  key=lambda k: (str(k[0]), k[1], k[2]))
    out = []
    for key in keys:
        grp = [r for r in rows if (r["setting"], r["n"], r["prior_fraction"]) == key]
        row = {"setting": key[0], "n": key[1], "prior_fraction": key[2], "replicates": len(grp)}
        for m in AGGREGATE_METRICS:
            vals = np.array([r[m] for r in grp if r.get(m) is not None], dtype=float)
            row[f"{m}_median"] = float(np.median(vals)) if vals.size else float("nan")
            row[f"{m}_sd"] = float(np.std(vals, ddof=1)) if vals.size > 1 else float("nan")
        out.append(row)
    return out
