"""Command-line entry point: ``svarpo {simulate,fit,evaluate,gridsearch,bench}``.

Every command accepts ``--config FILE`` (a JSON object whose keys are the
long option names with dashes replaced by underscores). Explicit flags win
over the file, and the fully resolved configuration is written into every
output artifact.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import contextlib
import csv
import json
import logging
import multiprocessing as mp
import os
import shutil
import sys
import tempfile
import time
import warnings
from dataclasses import fields

import numpy as np

from . import __version__
from .evaluation import (AGGREGATE_METRICS, aggregate, default_mu_A_grid,
                         default_mu_B_grid, forecast_error, grid_search,
                         normalize_columns, refine_grid, run_replicate,
                         skeleton_metrics)
from .io import (read_data_csv, read_model_json, write_data_csv, write_json,
                 write_long_csv, write_model_json)
from .model import SVARModel, TimeSeriesSample
from .ordering import load_prior
from .simulate import GenerationError, SettingSpec, builtin_setting, generate_parameters, simulate
from .solver import Hyperparams, fit

log = logging.getLogger("svarpo")

ENV_THREADS = "SVARPO_THREADS"
ENV_TMPDIR = "SVARPO_TMPDIR"
# offset between the parameter seed and the trajectory seed of a replicate
TRAJ_SEED_OFFSET = 1_000_003

_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
              "NUMBA_NUM_THREADS")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config handling

_HYPER_KEYS = {f.name for f in fields(Hyperparams)}

DEFAULTS = {
    "simulate": dict(setting="S1", spec=None, n=200, seed=0, burn_in=1000, out_dir="."),
    "fit": dict(data=None, d=2, prior=None, prior_format="tiers", normalize=False,
                no_demean=False, output=None, trace=None, skeleton=None, out_dir="."),
    "evaluate": dict(model=None, truth=None, holdout=None, prior=None, prior_format="tiers",
                     exclude_forbidden=False, output="-"),
    "gridsearch": dict(data=None, d=2, prior=None, prior_format="tiers", normalize=False,
                       no_demean=False, mu_A_grid=None, mu_B_grid=None, train_fraction=0.8,
                       folds=None, seed=0, refine=True, threads=None, output="-"),
    "bench": dict(settings="S1", n_list="200", prior_fractions="0", seeds=10, seed_start=0,
                  normalize=False, burn_in=1000, threads=None, out_dir="bench_out"),
}
for _cmd in ("fit", "gridsearch", "bench"):
    for _k in sorted(_HYPER_KEYS):
        DEFAULTS[_cmd][_k] = getattr(Hyperparams(), _k)


def _resolve(cmd, args):
    cfg = dict(DEFAULTS[cmd])
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys for {cmd}: {sorted(unknown)}")
        cfg.update(file_cfg)
    for k, v in vars(args).items():
        if k in cfg and v is not None:
            cfg[k] = v
    return cfg


def _hyper(cfg):
    try:
        return Hyperparams(**{k: cfg[k] for k in _HYPER_KEYS})
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _threads(cfg):
    t = cfg.get("threads")
    if t is None:
        t = os.environ.get(ENV_THREADS)
    t = int(t) if t is not None else (os.cpu_count() or 1)
    if t < 1:
        raise UsageError("thread budget must be >= 1")
    return t


def _floats(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def _meta(cmd, cfg, **extra):
    out = {"command": cmd, "version": __version__, "config": cfg}
    out.update(extra)
    return out


@contextlib.contextmanager
def _atomic(path):
    """Yield a temporary path that is moved onto ``path`` on success."""
    tmpdir = os.environ.get(ENV_TMPDIR) or os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".svarpo-", dir=tmpdir)
    os.close(fd)
    try:
        yield tmp
        shutil.move(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _outdir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    return path


def _load_sample(cfg):
    if not cfg.get("data"):
        raise UsageError("--data is required")
    raw = read_data_csv(cfg["data"])
    if cfg["normalize"]:
        work = normalize_columns(raw)
        scale = raw.data.std(axis=0)
    elif cfg["no_demean"]:
        work, scale = TimeSeriesSample(raw.data, means=np.zeros(raw.p), names=raw.names), None
    else:
        work, scale = raw.demeaned(), None
    prep = {"means": work.means, "scales": scale, "names": raw.names}
    return raw, work, prep


def _load_prior_cfg(cfg, p, names):
    if not cfg.get("prior"):
        return None
    return load_prior(cfg["prior"], cfg["prior_format"], p, names)


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg):
    if cfg.get("spec"):
        try:
            with open(cfg["spec"]) as fh:
                raw = json.load(fh)
            raw = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
            spec = SettingSpec(**raw)
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
            raise UsageError(f"bad setting spec {cfg['spec']}: {exc}") from exc
        label = os.path.basename(cfg["spec"])
    else:
        try:
            spec = builtin_setting(str(cfg["setting"]))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        label = str(cfg["setting"]).upper()
    if int(cfg["n"]) < 1:
        raise UsageError("--n must be positive")
    seed = int(cfg["seed"])
    model, noise, info = generate_parameters(spec, seed)
    sample = simulate(model, None, noise, int(cfg["n"]), burn_in=int(cfg["burn_in"]),
                      rng_seed=seed + TRAJ_SEED_OFFSET)
    out = _outdir(cfg["out_dir"])
    meta = _meta("simulate", cfg, setting=label, seed=seed, spec=spec.to_dict(),
                 noise=noise.to_dict(), trajectory_seed=seed + TRAJ_SEED_OFFSET, **info)
    with _atomic(os.path.join(out, "data.csv")) as tmp:
        write_data_csv(tmp, sample)
    with _atomic(os.path.join(out, "truth.json")) as tmp:
        write_model_json(tmp, model, {"metadata": _jsonable(meta)})
    with _atomic(os.path.join(out, "metadata.json")) as tmp:
        write_json(tmp, meta)
    log.info("simulated %s: n=%d, rho=%.4f after %d draw(s)", label, sample.n,
             info["rho"], info["attempts"])
    return 0


def cmd_fit(cfg):
    raw, work, prep = _load_sample(cfg)
    prior = _load_prior_cfg(cfg, raw.p, raw.names)
    h = _hyper(cfg)
    d = int(cfg["d"])
    if work.n <= d:
        raise UsageError(f"need more than d={d} observations")
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = fit(work, d, prior, h)
    runtime = time.perf_counter() - t0
    for w in caught:
        log.warning("%s", w.message)
    meta = _meta("fit", cfg, preprocessing=prep, outer_iters=res.outer_iters,
                 inner_iters=res.inner_iters, converged=res.converged,
                 projected=res.projected, acyclic=res.acyclic_after_projection,
                 n_edges=int(np.count_nonzero(res.A_hat)), runtime_s=runtime)
    out = cfg["out_dir"]
    model_path = cfg["output"] or os.path.join(_outdir(out), "model.json")
    if model_path == "-":
        write_model_json("-", res.model, {"metadata": _jsonable(meta)})
    else:
        with _atomic(model_path) as tmp:
            write_model_json(tmp, res.model, {"metadata": _jsonable(meta)})
    trace_path = cfg["trace"] or (None if model_path == "-" else
                                  os.path.join(_outdir(out), "trace.csv"))
    if trace_path:
        with _atomic(trace_path) as tmp:
            _write_trace(tmp, res.trace)
    skel_path = cfg["skeleton"] or (None if model_path == "-" else
                                    os.path.join(_outdir(out), "skeleton.csv"))
    if skel_path:
        with _atomic(skel_path) as tmp:
            write_long_csv(tmp, res.A_hat)
    log.info("fit: %d edges, %d outer / %d inner iterations, %.1fs",
             meta["n_edges"], res.outer_iters, res.inner_iters, runtime)
    return 0


TRACE_COLUMNS = ("outer_iter", "inner_iter", "lagrangian", "primal_residual_A",
                 "primal_residual_B", "constraint_residual")


def _write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(TRACE_COLUMNS)
        for row in trace:
            wr.writerow([row[c] if isinstance(row[c], int) else repr(float(row[c]))
                         for c in TRACE_COLUMNS])


def _read_metadata(path):
    with open(path) as fh:
        return json.load(fh).get("metadata", {})


def cmd_evaluate(cfg):
    if not cfg.get("model"):
        raise UsageError("--model is required")
    if not cfg.get("truth") and not cfg.get("holdout"):
        raise UsageError("need --truth for skeleton metrics or --holdout for forecasting")
    est = read_model_json(cfg["model"])
    report = {}
    if cfg.get("truth"):
        truth = read_model_json(cfg["truth"])
        if truth.p != est.p:
            raise ValueError(f"model has p={est.p}, truth has p={truth.p}")
        prior = _load_prior_cfg(cfg, est.p, None)
        mA = skeleton_metrics(est.A, truth.A, prior, bool(cfg["exclude_forbidden"]))
        report["A"] = mA.to_dict()
        report["TP"], report["TN"] = mA.tp_rate, mA.tn_rate
        for j in range(min(est.d, truth.d)):
            m = skeleton_metrics(est.B[j], truth.B[j], offdiag=False)
            report[f"B{j + 1}"] = m.to_dict()
            report[f"B{j + 1}_TP"], report[f"B{j + 1}_TN"] = m.tp_rate, m.tn_rate
    if cfg.get("holdout"):
        data = read_data_csv(cfg["holdout"]).data
        prep = _read_metadata(cfg["model"]).get("preprocessing", {})
        if prep.get("means") is not None:
            data = data - np.asarray(prep["means"])
        if prep.get("scales") is not None:
            data = data / np.asarray(prep["scales"])
        if data.shape[0] <= est.d:
            raise ValueError(f"holdout needs more than d={est.d} rows")
        errs = []
        for t in range(est.d, data.shape[0]):
            if np.any(data[t]):
                errs.append(forecast_error(est, data[:t], data[t]))
        report["rel_l2"] = errs[-1] if errs else None
        report["rel_l2_all"] = errs
    report["metadata"] = _meta("evaluate", cfg)
    _emit(cfg["output"], report)
    return 0


def _emit(path, obj):
    obj = _jsonable(obj)
    if path in (None, "-"):
        sys.stdout.write(json.dumps(obj, indent=1) + "\n")
    else:
        with _atomic(path) as tmp:
            write_json(tmp, obj)


def _jsonable(obj):
    """Plain-Python copy of ``obj`` (numpy containers and scalars converted)."""
    return json.loads(json.dumps(obj, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))


@contextlib.contextmanager
def _pool(threads):
    """Process pool whose workers each use single-threaded BLAS.

    One BLAS thread per worker keeps every floating-point reduction in a
    fixed order, so results do not depend on the thread budget.
    """
    if threads <= 1:
        yield None
        return
    saved = {k: os.environ.get(k) for k in _BLAS_VARS}
    os.environ.update({k: "1" for k in _BLAS_VARS})
    try:
        with cf.ProcessPoolExecutor(max_workers=threads,
                                    mp_context=mp.get_context("spawn")) as ex:
            yield ex
    finally:
        for k, v in saved.items():
            if v is None:
                os.environ.pop(k, None)
            else:
                os.environ[k] = v


def cmd_gridsearch(cfg):
    raw, work, prep = _load_sample(cfg)
    prior = _load_prior_cfg(cfg, raw.p, raw.names)
    d = int(cfg["d"])
    base = _hyper(cfg)
    folds = int(cfg["folds"]) if cfg.get("folds") else None
    mu_A = _floats(cfg["mu_A_grid"]) or default_mu_A_grid()
    mu_B = _floats(cfg["mu_B_grid"]) or default_mu_B_grid(raw.p, d, work.n)
    t0 = time.perf_counter()
    with _pool(_threads(cfg)) as ex:
        mp_fn = map if ex is None else ex.map
        kw = dict(train_fraction=float(cfg["train_fraction"]), seed=int(cfg["seed"]),
                  folds=folds, base=base, map_fn=mp_fn)
        coarse = grid_search(work, d, prior, mu_A, mu_B, **kw)
        result = {"coarse": coarse.to_dict()}
        best, best_rmse = coarse.best, min(g[2] for g in coarse.grid)
        if cfg["refine"] and (len(mu_A) > 1 or len(mu_B) > 1):
            fa = refine_grid(mu_A, coarse.best[0])
            fb = refine_grid(mu_B, coarse.best[1])
            fine = grid_search(work, d, prior, fa, fb, **kw)
            result["refined"] = fine.to_dict()
            fine_rmse = min(g[2] for g in fine.grid)
            if fine_rmse <= best_rmse:
                best, best_rmse = fine.best, fine_rmse
    result["best"] = {"mu_A": best[0], "mu_B": best[1], "rmse": best_rmse}
    result["metadata"] = _meta("gridsearch", cfg, preprocessing=prep,
                               runtime_s=time.perf_counter() - t0)
    _emit(cfg["output"], result)
    return 0


def _bench_job(args):
    setting, seed, n, frac, h, normalize, burn_in = args
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return run_replicate(builtin_setting(setting), seed, n, frac, h, normalize,
                                 burn_in=burn_in, setting_id=setting)
    except Exception as exc:  # recorded per cell; the bench carries on
        return {"setting": setting, "seed": seed, "n": n, "prior_fraction": frac,
                "error": f"{type(exc).__name__}: {exc}"}


AGGREGATE_COLUMNS = (("setting", "n", "prior_fraction", "replicates")
                     + tuple(f"{m}_{s}" for m in AGGREGATE_METRICS for s in ("median", "sd")))


def _fmt_cell(v):
    if isinstance(v, float):
        return "nan" if np.isnan(v) else repr(v)
    return str(v)


def cmd_bench(cfg):
    settings = [s.strip().upper() for s in str(cfg["settings"]).split(",") if s.strip()]
    for s in settings:
        try:
            builtin_setting(s)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    n_list = [int(v) for v in _floats(cfg["n_list"])]
    fracs = _floats(cfg["prior_fractions"])
    if any(not 0 <= f <= 1 for f in fracs):
        raise UsageError("prior fractions must lie in [0, 1]")
    seeds = list(range(int(cfg["seed_start"]), int(cfg["seed_start"]) + int(cfg["seeds"])))
    h = _hyper(cfg)
    jobs = [(s, seed, n, f, h, bool(cfg["normalize"]), int(cfg["burn_in"]))
            for s in settings for n in n_list for f in fracs for seed in seeds]
    out = _outdir(cfg["out_dir"])
    runs_dir = _outdir(os.path.join(out, "runs"))
    t0 = time.perf_counter()
    with _pool(_threads(cfg)) as ex:
        # map keeps submission order, so the row order never depends on scheduling
        rows = list(map(_bench_job, jobs) if ex is None else ex.map(_bench_job, jobs))
    failed = [r for r in rows if "error" in r]
    for r in rows:
        name = f"{r['setting']}_n{r['n']}_pf{r['prior_fraction']:g}_seed{r['seed']}.json"
        with _atomic(os.path.join(runs_dir, name)) as tmp:
            write_json(tmp, dict(r, config=_jsonable(cfg)))
    agg = aggregate([r for r in rows if "error" not in r])
    with _atomic(os.path.join(out, "aggregate.csv")) as tmp:
        with open(tmp, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(AGGREGATE_COLUMNS)
            for row in agg:
                wr.writerow([_fmt_cell(row[c]) for c in AGGREGATE_COLUMNS])
    summary = {
        "projected": {f"{r['setting']}_n{r['n']}_pf{r['prior_fraction']:g}": 0 for r in rows},
        "failures": [dict(r) for r in failed],
    }
    for r in rows:
        if r.get("projected"):
            summary["projected"][f"{r['setting']}_n{r['n']}_pf{r['prior_fraction']:g}"] += 1
    with _atomic(os.path.join(out, "metadata.json")) as tmp:
        # wall time and thread budget stay out of aggregate.csv on purpose
        write_json(tmp, _meta("bench", cfg, threads=_threads(cfg), runs=len(rows),
                              runtime_s=time.perf_counter() - t0, **summary))
    for r in failed:
        log.error("cell %s seed %s failed: %s", r["setting"], r["seed"], r["error"])
    log.info("bench: %d runs, %d failed, %.0fs", len(rows), len(failed), time.perf_counter() - t0)
    return 1 if failed else 0


# ---------------------------------------------------------------- parser

def _add_hyper(p):
    g = p.add_argument_group("solver")
    g.add_argument("--mu-A", dest="mu_A", type=float)
    g.add_argument("--mu-B", dest="mu_B", type=float)
    g.add_argument("--tau", type=float)
    g.add_argument("--rho", type=float)
    g.add_argument("--max-outer", type=int)
    g.add_argument("--max-inner", type=int)
    g.add_argument("--tol-inner", type=float)
    g.add_argument("--tol-outer", type=float)
    g.add_argument("--w-strategy", choices=("acyclic", "threshold"))
    g.add_argument("--warm-start-B", dest="warm_start_B", action="store_const", const=True)


def _add_data(p, prior=True):
    p.add_argument("--data", help="data CSV with a header row")
    p.add_argument("--d", type=int, help="lag order (default 2)")
    if prior:
        p.add_argument("--prior", help="partial-ordering file")
        p.add_argument("--prior-format", choices=("tiers", "pairs", "gold"))
    p.add_argument("--normalize", action="store_const", const=True,
                   help="scale every column to unit variance")
    p.add_argument("--no-demean", action="store_const", const=True)


def build_parser():
    ap = argparse.ArgumentParser(prog="svarpo", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config; flags override its values")
        return p

    p = add("simulate", "draw a benchmark SVAR and simulate a trajectory")
    p.add_argument("--setting", help="built-in setting S1..S6")
    p.add_argument("--spec", help="JSON SettingSpec instead of a built-in setting")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--out-dir")

    p = add("fit", "estimate A and the lag matrices from data")
    _add_data(p)
    _add_hyper(p)
    p.add_argument("--output", help="model JSON path, '-' for stdout")
    p.add_argument("--trace", help="convergence trace CSV path")
    p.add_argument("--skeleton", help="long-format child,parent,value CSV path")
    p.add_argument("--out-dir")

    p = add("evaluate", "score a fitted model against a truth and/or holdout data")
    p.add_argument("--model")
    p.add_argument("--truth")
    p.add_argument("--holdout", help="data CSV; rows after the first d are forecast one step ahead")
    p.add_argument("--prior")
    p.add_argument("--prior-format", choices=("tiers", "pairs", "gold"))
    p.add_argument("--exclude-forbidden", action="store_const", const=True)
    p.add_argument("--output")

    p = add("gridsearch", "choose mu_A and mu_B by validation RMSE")
    _add_data(p)
    _add_hyper(p)
    p.add_argument("--mu-A-grid", dest="mu_A_grid", help="comma-separated values")
    p.add_argument("--mu-B-grid", dest="mu_B_grid", help="comma-separated values")
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-refine", dest="refine", action="store_const", const=False)
    p.add_argument("--threads", type=int, help=f"worker processes (env {ENV_THREADS})")
    p.add_argument("--output")

    p = add("bench", "replicate the synthetic benchmark over settings, n and prior fractions")
    p.add_argument("--settings", help="comma-separated, e.g. S1,S3,S5")
    p.add_argument("--n-list", help="comma-separated sample sizes")
    p.add_argument("--prior-fractions", help="comma-separated, e.g. 0,0.1,0.2,0.5")
    p.add_argument("--seeds", type=int, help="replicates per cell")
    p.add_argument("--seed-start", type=int)
    p.add_argument("--normalize", action="store_const", const=True)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--threads", type=int, help=f"worker processes (env {ENV_THREADS})")
    p.add_argument("--out-dir")
    _add_hyper(p)
    return ap


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "evaluate": cmd_evaluate,
            "gridsearch": cmd_gridsearch, "bench": cmd_bench}


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = _resolve(args.command, args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"svarpo {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, GenerationError, KeyError) as exc:
        print(f"svarpo {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
