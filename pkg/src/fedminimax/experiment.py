"""Declarative experiments: JSON config -> seeded runs -> CSV traces, summary JSON and SVG plots."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import NonFiniteError, RunConfig
from .diagnostics import RUN_INNER, estimate_delta, heuristic_metrics, metric_errors
from .federation import FederationConfig, federation_errors
from .geometry import is_feasible
from .optim import (ALGORITHMS, SETTINGS, HyperParams, LocalStepCapWarning, ParamState, PresetError,
                    preset_hyperparams, run_algorithm)
from .problems import ProblemSpec, problem_from_dict
from .svg import line_plot

OUTPUT_ENV = "FEDMINIMAX_OUTPUT_ROOT"
DEFAULT_METRICS = ("grad_x_norm", "grad_map_y_norm", "dist_to_target", "x_minus_z_norm")
_HYPER_KEYS = ("eta_x_local", "eta_y_local", "eta_x_global", "eta_y_global", "beta", "p")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("invalid experiment config:\n  - " + "\n  - ".join(errors))
        self.errors = list(errors)


@dataclass
class ExperimentConfig:
    experiment_id: str
    problem_doc: dict
    algorithm: str
    hyper_doc: dict
    federation: FederationConfig
    run: RunConfig
    seeds: list[int]
    metrics: list[str]
    init_doc: dict = field(default_factory=dict)
    grid: dict | None = None
    # filled in by validation
    problem: ProblemSpec | None = None
    hyper: HyperParams | None = None
    init: ParamState | None = None

    def to_dict(self) -> dict:
        """The expanded config, with the materialized hyperparameters."""
        d = {"experiment_id": self.experiment_id, "problem": self.problem_doc, "algorithm": self.algorithm,
             "hyper": self.hyper_doc, "federation": {"M": self.federation.M, "m": self.federation.m,
                                                     "K": self.federation.K,
                                                     "batch_size": self.federation.batch_size,
                                                     "sampling": self.federation.sampling},
             "run": {"T": self.run.T, "metrics_every": self.run.metrics_every,
                     "output_dir": self.run.output_dir, "workers": self.run.workers},
             "seeds": list(self.seeds), "metrics": list(self.metrics), "init": self.init_doc}
        if self.grid:
            d["grid"] = self.grid
        if self.hyper is not None:
            d["materialized_hyper"] = {**self.hyper.to_dict(), "eta_x": self.hyper.eta_x,
                                       "eta_y": self.hyper.eta_y, "details": _jsonable(self.hyper.details)}
        return d


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _int_field(d, key, default, errors, where):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        errors.append(f"{where}.{key} must be an integer (got {v!r})")
        return default
    return v


def validate_config(raw, seed_override: list[int] | None = None, rounds_override: int | None = None
                    ) -> ExperimentConfig:
    """Parse and check a config (JSON text, path or dict); every problem found is reported.

    Raises :class:`ConfigError` carrying the full list of problems.
    """
    errors: list[str] = []
    if isinstance(raw, os.PathLike):
        raw = Path(raw).read_text()
    elif isinstance(raw, (str, bytes)) and not str(raw).lstrip().startswith("{"):
        raw = Path(raw).read_text()
    if isinstance(raw, (str, bytes)):
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"not valid JSON: {exc}"]) from exc
    else:
        doc = dict(raw)
    if not isinstance(doc, dict):
        raise ConfigError(["top level must be a JSON object"])

    known = {"experiment_id", "problem", "algorithm", "hyper", "federation", "run", "seeds", "metrics",
             "init", "grid", "materialized_hyper"}
    for k in doc:
        if k not in known:
            errors.append(f"unknown top-level field {k!r}")
    exp_id = doc.get("experiment_id")
    if not isinstance(exp_id, str) or not exp_id or "/" in exp_id:
        errors.append("experiment_id must be a non-empty string without '/'")
    algorithm = doc.get("algorithm")
    if algorithm not in ALGORITHMS:
        errors.append(f"algorithm must be one of {ALGORITHMS} (got {algorithm!r})")

    fed_doc = doc.get("federation", {})
    fed = None
    if not isinstance(fed_doc, dict):
        errors.append("federation must be an object")
        fed_doc = {}
    M = _int_field(fed_doc, "M", 1, errors, "federation")
    m = _int_field(fed_doc, "m", M, errors, "federation")
    K = _int_field(fed_doc, "K", 1, errors, "federation")
    bs = _int_field(fed_doc, "batch_size", 100, errors, "federation")
    sampling = fed_doc.get("sampling", "uniform_without_replacement")
    fed_errs = federation_errors(M, m, K, bs, sampling)
    errors.extend(f"federation: {e}" for e in fed_errs)
    if not fed_errs:
        fed = FederationConfig(M, m, K, bs, sampling)

    run_doc = doc.get("run", {})
    T = run_doc.get("T", 100) if rounds_override is None else rounds_override
    if isinstance(T, bool) or not isinstance(T, int) or T < 1:
        errors.append(f"run.T must be an integer >= 1 (got {T!r})")
        T = None
    every = run_doc.get("metrics_every", 1)
    if isinstance(every, bool) or not isinstance(every, int) or every < 1:
        errors.append(f"run.metrics_every must be an integer >= 1 (got {every!r})")
        every = None
    workers = run_doc.get("workers", 1)
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        errors.append(f"run.workers must be an integer >= 1 (got {workers!r})")
        workers = None

    seeds = seed_override if seed_override is not None else doc.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and not isinstance(s, bool)
                                                             for s in seeds):
        errors.append(f"seeds must be a nonempty list of integers (got {seeds!r})")
        seeds = []
    elif len(set(seeds)) != len(seeds):
        errors.append("seeds must be distinct")
    metrics = doc.get("metrics", list(DEFAULT_METRICS))
    if not isinstance(metrics, list) or not metrics:
        errors.append("metrics must be a nonempty list of names")
        metrics = []

    problem = None
    pdoc = doc.get("problem")
    if not isinstance(pdoc, dict):
        errors.append("problem must be an object with a 'family' field")
    else:
        try:
            problem = problem_from_dict(pdoc)
        except (ValueError, TypeError, KeyError, np.linalg.LinAlgError) as exc:
            errors.append(f"problem: {exc}")
    if problem is not None:
        errors.extend(metric_errors(problem, metrics))
        if fed is not None and fed.M != problem.M:
            errors.append(f"federation.M={fed.M} but the problem has {problem.M} clients")

    init = None
    init_doc = doc.get("init", {}) or {}
    if problem is not None:
        try:
            x0 = init_doc.get("x0", [0.0] * problem.dim_x)
            y0 = init_doc.get("y0")
            if y0 is None:
                y0 = ([1.0 / problem.dim_y] * problem.dim_y if problem.constraint.kind == "simplex"
                      else [0.0] * problem.dim_y)
            init = ParamState.initial(x0, y0, init_doc.get("z0"))
            if init.x.size != problem.dim_x or init.z.size != problem.dim_x:
                errors.append(f"init: x0/z0 must have dimension {problem.dim_x}")
                init = None
            elif init.y.size != problem.dim_y:
                errors.append(f"init.y0 must have dimension {problem.dim_y}")
                init = None
            elif not is_feasible(problem.constraint, init.y, tol=1e-12):
                errors.append("init.y0 is not feasible for the problem's constraint set")
                init = None
        except (ValueError, TypeError) as exc:
            errors.append(f"init: {exc}")

    hyper_doc = doc.get("hyper")
    hyper = None
    if not isinstance(hyper_doc, dict):
        errors.append("hyper must be an object (manual rates or {'preset': ...})")
        hyper_doc = {}
    elif "preset" in hyper_doc:
        setting = hyper_doc["preset"]
        if setting not in SETTINGS:
            errors.append(f"hyper.preset must be one of {SETTINGS} (got {setting!r})")
        elif problem is not None and fed is not None and T is not None:
            delta = hyper_doc.get("delta")
            estimated = False
            try:
                if delta is None and problem.constants.sigma > 0 and setting != "pl_pl" and init is not None:
                    delta, estimated = estimate_delta(problem, init)
                hyper = preset_hyperparams(setting, problem.constants, fed, T,
                                           target_eps=hyper_doc.get("target_eps"), delta=delta)
                hyper.details["delta_estimated"] = estimated
            except PresetError as exc:
                errors.append(f"hyper: {exc}")
    else:
        unknown = [k for k in hyper_doc if k not in _HYPER_KEYS]
        if unknown:
            errors.append(f"hyper: unknown fields {unknown}")
        missing = [k for k in ("eta_x_local", "eta_y_local") if k not in hyper_doc]
        if missing:
            errors.append(f"hyper: missing {missing}")
        else:
            try:
                hyper = HyperParams(K=K if isinstance(K, int) and K >= 1 else 1,
                                    **{k: float(v) for k, v in hyper_doc.items() if k in _HYPER_KEYS})
            except (ValueError, TypeError) as exc:
                errors.append(f"hyper: {exc}")

    grid = doc.get("grid")
    if grid is not None:
        if (not isinstance(grid, dict) or set(grid) - {"eta_local", "eta_global"}
                or not all(isinstance(v, list) and v and all(isinstance(a, (int, float)) and a > 0 for a in v)
                           for v in grid.values())):
            errors.append("grid must be {'eta_local': [positive...], 'eta_global': [positive...]}")

    if errors:
        raise ConfigError(errors)
    run = RunConfig(seed=seeds[0], T=T, metrics_every=every, metrics=tuple(metrics), workers=workers,
                    output_dir=str(run_doc.get("output_dir", "runs")))
    return ExperimentConfig(exp_id, pdoc, algorithm, hyper_doc, fed, run, list(seeds), list(metrics),
                            init_doc, grid, problem, hyper, init)


# --------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def trace_csv(trace, metrics, include_wall: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["t", "samples_used"] + (["wall_ms"] if include_wall else []) + list(metrics)
    w.writerow(header)
    for rec in trace:
        w.writerow([_fmt(v) for v in rec.row(metrics, include_wall)])
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def aggregate(traces: list, metrics) -> tuple[list[int], list[int], dict]:
    """Per-round mean and population std of each metric across seeds."""
    ts = [r.t for r in traces[0]]
    su = [r.samples_used for r in traces[0]]
    for tr in traces[1:]:
        if [r.t for r in tr] != ts:
            raise ValueError("seed traces have different round grids")
    stats = {}
    for mname in metrics:
        arr = np.array([[r.metrics[mname] for r in tr] for tr in traces])
        stats[mname] = (arr.mean(axis=0), arr.std(axis=0))
    return ts, su, stats


def aggregate_csv(ts, su, stats, metrics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "samples_used"] + [f"{m}_{s}" for m in metrics for s in ("mean", "std")])
    for i in range(len(ts)):
        row = [str(ts[i]), str(su[i])]
        for mname in metrics:
            row += [_fmt(stats[mname][0][i]), _fmt(stats[mname][1][i])]
        w.writerow(row)
    return buf.getvalue()


def output_root(override: str | None = None, cfg: ExperimentConfig | None = None) -> Path:
    if override:
        return Path(override)
    if os.environ.get(OUTPUT_ENV):
        return Path(os.environ[OUTPUT_ENV])
    return Path(cfg.run.output_dir if cfg is not None else "runs")


def _run_seed(cfg: ExperimentConfig, hp: HyperParams, seed: int):
    run = replace(cfg.run, seed=seed, workers=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LocalStepCapWarning)
        try:
            res = run_algorithm(cfg.algorithm, cfg.problem, cfg.init, hp, cfg.federation, run, inner=RUN_INNER)
            return seed, res.trace, None
        except NonFiniteError as exc:
            return seed, None, str(exc)


def run_seeds(cfg: ExperimentConfig, hp: HyperParams | None = None) -> tuple[dict, dict]:
    """Run every seed; returns ``({seed: trace}, {seed: failure message})``."""
    hp = hp or cfg.hyper
    workers = min(cfg.run.workers, len(cfg.seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(lambda s: _run_seed(cfg, hp, s), cfg.seeds))
    else:
        out = [_run_seed(cfg, hp, s) for s in cfg.seeds]
    traces = {s: tr for s, tr, err in out if err is None}
    failed = {s: err for s, tr, err in out if err is not None}
    return traces, failed


def _write_run(cfg: ExperimentConfig, hp: HyperParams, outdir: Path, traces: dict, failed: dict) -> dict:
    outdir.mkdir(parents=True, exist_ok=True)
    metrics = cfg.metrics
    per_seed = {}
    for s, tr in traces.items():
        _atomic_write(outdir / f"seed_{s}.csv", trace_csv(tr, metrics))
        per_seed[str(s)] = {"final": tr[-1].metrics,
                            "best": {mname: min(r.metrics[mname] for r in tr) for mname in metrics},
                            "wall_ms": tr[-1].wall_ms}
    summary = {"experiment_id": cfg.experiment_id, "algorithm": cfg.algorithm,
               "config": cfg.to_dict(),
               "hyper": {**hp.to_dict(), "eta_x": hp.eta_x, "eta_y": hp.eta_y,
                         "details": _jsonable(hp.details)},
               "seeds": per_seed, "failed_seeds": {str(k): v for k, v in failed.items()},
               "heuristic_metrics": heuristic_metrics(cfg.problem, metrics)}
    if traces:
        ts, su, stats = aggregate(list(traces.values()), metrics)
        _atomic_write(outdir / "aggregate.csv", aggregate_csv(ts, su, stats, metrics))
        summary["final_mean"] = {mname: float(stats[mname][0][-1]) for mname in metrics}
        summary["final_std"] = {mname: float(stats[mname][1][-1]) for mname in metrics}
        summary["samples_used"] = su[-1]
        primary = metrics[0]
        svg = line_plot([(f"{primary} (mean of {len(traces)} seeds)", su, stats[primary][0])],
                        title=cfg.experiment_id, xlabel="samples used per client", ylabel=primary)
        _atomic_write(outdir / "plot.svg", svg)
    _atomic_write(outdir / "summary.json", json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    return summary


def grid_points(cfg: ExperimentConfig) -> list[HyperParams]:
    """Manual hyperparameters for each (local, global) pair; Local SGDA ignores the global rates."""
    g = cfg.grid or {}
    locs = g.get("eta_local", [1e-1, 1e-2, 1e-3])
    globs = g.get("eta_global", [1.0, 2.0]) if cfg.algorithm != "local_sgda" else [1.0]
    base = cfg.hyper
    out = []
    for a, b in itertools.product(locs, globs):
        out.append(replace(base, eta_x_local=float(a), eta_y_local=float(a), eta_x_global=float(b),
                           eta_y_global=float(b), provenance="manual", details={"grid": [a, b]}))
    return out


def run_experiment(cfg: ExperimentConfig, out_root: str | None = None, grid: bool = False) -> Path:
    """Run the experiment and write its artifact directory; returns the directory.

    With ``grid=True`` every grid point gets a subdirectory and the best point
    (smallest mean final value of the first metric) is copied to the top level.
    """
    outdir = output_root(out_root, cfg) / cfg.experiment_id
    if not grid:
        traces, failed = run_seeds(cfg)
        _write_run(cfg, cfg.hyper, outdir, traces, failed)
        return outdir
    primary = cfg.metrics[0]
    results = []
    for i, hp in enumerate(grid_points(cfg)):
        traces, failed = run_seeds(cfg, hp)
        summ = _write_run(cfg, hp, outdir / f"grid_{i:02d}", traces, failed)
        score = summ.get("final_mean", {}).get(primary, math.inf) if not failed else math.inf
        results.append((score, i, hp, traces, failed))
    best = min(results, key=lambda r: (r[0], r[1]))
    summ = _write_run(cfg, best[2], outdir, best[3], best[4])
    table = [{"index": i, "eta_local": hp.eta_x_local, "eta_global": hp.eta_x_global,
              f"final_mean_{primary}": s} for s, i, hp, _, _ in results]
    _atomic_write(outdir / "grid.json", json.dumps(_jsonable({"selection_metric": primary, "points": table,
                                                              "best_index": best[1]}), indent=2) + "\n")
    return outdir


def load_aggregate(path: Path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) for r in rows] for k in rows[0]}


def compare(cfgs: list[ExperimentConfig], metric: str, out_dir: str | None = None, grid: bool = False) -> dict:
    """Run each config and overlay the mean curves of ``metric`` against samples used.

    Configs must share the problem family and the per-client sample budget.
    """
    if not cfgs:
        raise ValueError("compare needs at least one config")
    errs = []
    fams = {c.problem_doc.get("family") for c in cfgs}
    if len(fams) > 1:
        errs.append(f"configs use different problem families: {sorted(fams)}")
    budgets = {c.run.T * c.federation.m * c.federation.K * c.federation.batch_size
               if c.algorithm != "smoothed_gda" else c.run.T for c in cfgs}
    if len(budgets) > 1:
        errs.append(f"configs have different sample budgets: {sorted(budgets)}")
    for c in cfgs:
        if metric not in c.metrics:
            errs.append(f"{c.experiment_id}: metric {metric!r} not recorded")
    ids = [c.experiment_id for c in cfgs]
    if len(set(ids)) != len(ids):
        errs.append("experiment ids must be distinct")
    if errs:
        raise ConfigError(errs)
    root = output_root(out_dir, cfgs[0])
    series = []
    rows = []
    for c in cfgs:
        d = run_experiment(c, str(root), grid=grid)
        agg = load_aggregate(d / "aggregate.csv")
        ys = agg[f"{metric}_mean"]
        series.append((c.experiment_id, agg["samples_used"], ys))
        rows.append({"experiment_id": c.experiment_id, "algorithm": c.algorithm,
                     "final_mean": ys[-1], "final_std": agg[f"{metric}_std"][-1],
                     "samples_used": agg["samples_used"][-1]})
    ranking = sorted(rows, key=lambda r: r["final_mean"])
    for rank, r in enumerate(ranking, 1):
        r["rank"] = rank
    cmp_dir = root / ("compare_" + "_vs_".join(ids))
    cmp_dir.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["samples_used"] + ids)
    n = min(len(s[1]) for s in series)
    for i in range(n):
        w.writerow([_fmt(series[0][1][i])] + [_fmt(s[2][i]) for s in series])
    _atomic_write(cmp_dir / "curves.csv", buf.getvalue())
    _atomic_write(cmp_dir / "overlay.svg", line_plot(series, title=f"{metric} vs samples", ylabel=metric,
                                                     xlabel="samples used per client"))
    table = {"metric": metric, "rows": rows, "ranking": [r["experiment_id"] for r in ranking]}
    _atomic_write(cmp_dir / "ranking.json", json.dumps(_jsonable(table), indent=2) + "\n")
    table["directory"] = str(cmp_dir)
    return table
