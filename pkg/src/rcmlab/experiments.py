"""Scenario-driven experiments: replicate ladders, empirical-vs-analytic
comparisons, and deterministic result emission.

A scenario is a single JSON document describing the model (dimension,
intensity, connection functions), a ladder of window extents, the
statistics to evaluate, and the replicate/seed/budget plan. Replicates
run in a thread pool with per-replicate derived seeds and are aggregated
in replicate order, so serial and parallel runs emit identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import FunctionalSpec, empirical_distance
from .census import K_MAX, GraphClass
from .census import census as run_census
from .connection import ConnectionFunction
from .geometry import Window
from .marks import PairMarkSource
from .moments import asy_cov, expected_count_intensity, sigma_total_partial
from .sampling import build_rcm, sample_poisson

VERSION = "0.1.0"


class ConfigError(ValueError):
    """Scenario configuration problem, reported with its field path."""


def _need(obj, key, typ, path):
    if key not in obj:
        raise ConfigError(f"{path}{key}: missing")
    val = obj[key]
    if typ is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, typ):
        raise ConfigError(f"{path}{key}: expected {typ.__name__}")
    return val


def _parse_phi(obj, dim, path) -> ConnectionFunction:
    kind = _need(obj, "kind", str, path)
    try:
        if kind == "gilbert":
            return ConnectionFunction("gilbert", dim,
                                      r=_need(obj, "r", float, path))
        if kind == "scaled_indicator":
            return ConnectionFunction("scaled_indicator", dim,
                                      p=_need(obj, "p", float, path),
                                      r=_need(obj, "r", float, path))
        if kind == "exponential":
            return ConnectionFunction("exponential", dim,
                                      theta=_need(obj, "theta", float, path))
        if kind == "gaussian":
            return ConnectionFunction("gaussian", dim,
                                      s=_need(obj, "s", float, path))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}kind: unknown connection function {kind!r}")


def _parse_statistic(obj, window, phi, beta, k_max, path) -> FunctionalSpec:
    stat = _need(obj, "statistic", str, path)
    mode = obj.get("mode", "lexmin")
    try:
        if stat == "count_class":
            cls = GraphClass.from_class_id(_need(obj, "class", str, path))
            return FunctionalSpec("count_class", window, phi, beta,
                                  cls=cls, mode=mode, k_max=k_max)
        if stat == "count_order":
            return FunctionalSpec("count_order", window, phi, beta,
                                  k=_need(obj, "k", int, path), mode=mode,
                                  k_max=k_max)
        if stat == "weighted":
            a = tuple(float(v) for v in _need(obj, "a", list, path))
            classes = tuple(GraphClass.from_class_id(s)
                            for s in _need(obj, "classes", list, path))
            return FunctionalSpec("weighted", window, phi, beta, a=a,
                                  classes=classes, mode=mode, k_max=k_max)
        if stat in ("total_components", "point_count"):
            return FunctionalSpec(stat, window, phi, beta, k_max=k_max)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}statistic: unknown statistic {stat!r}")


@dataclass(frozen=True)
class Scenario:
    dimension: int
    beta: float
    phi: ConnectionFunction
    psi: ConnectionFunction          # None unless a coupling is configured
    window_shape: str
    extents: tuple
    statistics: tuple                # raw statistic dicts
    replicates: int
    seed_base: int
    mc_samples: int
    inner: int
    k_max: int
    raw: dict = field(compare=False, default=None)

    @property
    def scenario_hash(self) -> str:
        text = json.dumps(self.raw, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def window(self, rung: int) -> Window:
        return Window(self.window_shape, self.extents[rung], self.dimension)

    def specs(self, rung: int) -> list[FunctionalSpec]:
        w = self.window(rung)
        return [_parse_statistic(s, w, self.phi, self.beta, self.k_max,
                                 f"statistics[{i}].")
                for i, s in enumerate(self.statistics)]


def load_scenario(path_or_dict) -> Scenario:
    if isinstance(path_or_dict, dict):
        raw = path_or_dict
    else:
        try:
            with open(path_or_dict) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: {exc}") from exc
    dim = _need(raw, "dimension", int, "")
    if dim < 1:
        raise ConfigError("dimension: must be positive")
    beta = _need(raw, "beta", float, "")
    if beta <= 0:
        raise ConfigError("beta: must be positive")
    phi = _parse_phi(_need(raw, "phi", dict, ""), dim, "phi.")
    psi = None
    if "psi" in raw:
        psi = _parse_phi(raw["psi"], dim, "psi.")
        if not phi.dominates(psi):
            raise ConfigError("psi: not dominated by phi")
    wobj = _need(raw, "window", dict, "")
    shape = _need(wobj, "shape", str, "window.")
    if shape not in ("box", "ball"):
        raise ConfigError("window.shape: must be box or ball")
    extents = _need(wobj, "extents", list, "window.")
    if not extents or any(not isinstance(e, (int, float)) or e <= 0
                          for e in extents):
        raise ConfigError("window.extents: must be positive numbers")
    if any(b <= a for a, b in zip(extents, extents[1:])):
        raise ConfigError("window.extents: must be strictly increasing")
    stats = _need(raw, "statistics", list, "")
    replicates = _need(raw, "replicates", int, "")
    if replicates < 2:
        raise ConfigError("replicates: need at least 2")
    seed_base = _need(raw, "seed_base", int, "")
    budgets = raw.get("budgets", {})
    scenario = Scenario(
        dimension=dim, beta=beta, phi=phi, psi=psi, window_shape=shape,
        extents=tuple(float(e) for e in extents),
        statistics=tuple(stats), replicates=replicates, seed_base=seed_base,
        mc_samples=int(budgets.get("mc_samples", 200000)),
        inner=int(budgets.get("inner", 8)),
        k_max=int(raw.get("k_max", 5)), raw=raw)
    for i in range(len(scenario.extents)):
        scenario.specs(i)    # validate statistic entries against each rung
    return scenario


def replicate_seed(scenario: Scenario, rung: int, rep: int) -> int:
    return scenario.seed_base + 1_000_000 * rung + rep


def _run_replicate(scenario: Scenario, rung: int, rep: int,
                   specs: list[FunctionalSpec]):
    seed = replicate_seed(scenario, rung, rep)
    window = scenario.window(rung)
    padding = max(s.padding() for s in specs)
    points = sample_poisson(window, padding, scenario.beta, seed)
    graph = build_rcm(points, scenario.phi, PairMarkSource(seed))
    report = run_census(graph, window, k_max=min(scenario.k_max, K_MAX))
    values = [_value_from_report(spec, report, graph, window)
              for spec in specs]
    n_in_window = int(np.sum(window.contains(points.points)))
    return values, n_in_window, report


def _value_from_report(spec, report, graph, window):
    if spec.statistic == "point_count":
        return float(np.sum(window.contains(graph.points.points)))
    if spec.statistic == "total_components":
        return float(report.alpha)
    if spec.statistic == "count_order":
        counts = (report.order_counts_lexmin if spec.mode == "lexmin"
                  else report.order_counts_inside)
        return float(counts.get(spec.k, 0))
    counts = (report.class_counts_lexmin if spec.mode == "lexmin"
              else report.class_counts_inside)
    if spec.statistic == "count_class":
        return float(counts.get(spec.cls.class_id, 0))
    return float(sum(w * counts.get(c.class_id, 0)
                     for w, c in zip(spec.a, spec.classes)))


def _thread_count(requested: int = None) -> int:
    env = os.environ.get("RCMLAB_THREADS")
    if env is not None:
        return max(1, int(env))
    if requested is not None:
        return max(1, requested)
    return 1


def _rung_samples(scenario: Scenario, rung: int, threads: int):
    specs = scenario.specs(rung)
    reps = range(scenario.replicates)

    def work(rep):
        return _run_replicate(scenario, rung, rep, specs)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, reps))
    else:
        results = [work(rep) for rep in reps]
    values = np.array([r[0] for r in results])      # (reps, n_stats)
    n_points = np.array([r[1] for r in results], dtype=float)
    return values, n_points, results


@dataclass
class RungResult:
    extent: float
    volume: float
    values: np.ndarray            # (replicates, n_statistics)
    means: np.ndarray
    variances: np.ndarray
    mecke_mean: float
    mecke_se: float
    distances: list               # per statistic: {"d_K": ..., "d_1": ...}
    extras: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    scenario: Scenario
    kind: str
    rungs: list
    regression: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def scenario_hash(self) -> str:
        return self.scenario.scenario_hash


def _standardize_and_distances(values: np.ndarray):
    out = []
    for col in values.T:
        sd = float(np.std(col, ddof=1))
        if sd == 0:
            out.append({"d_K": float("nan"), "d_1": float("nan")})
            continue
        z = (col - np.mean(col)) / sd
        out.append({"d_K": empirical_distance(z, "kolmogorov"),
                    "d_1": empirical_distance(z, "wasserstein")})
    return out


def _make_rung(scenario, rung, threads) -> RungResult:
    window = scenario.window(rung)
    values, n_points, _ = _rung_samples(scenario, rung, threads)
    means = np.mean(values, axis=0)
    variances = np.var(values, axis=0, ddof=1)
    mecke_mean = float(np.mean(n_points))
    mecke_se = float(np.std(n_points, ddof=1)
                     / math.sqrt(scenario.replicates))
    return RungResult(extent=scenario.extents[rung], volume=window.volume,
                      values=values, means=means, variances=variances,
                      mecke_mean=mecke_mean, mecke_se=mecke_se,
                      distances=_standardize_and_distances(values))


def _rate_regression(rungs: list, stat_index: int = 0) -> dict:
    xs, ys = [], []
    for r in rungs:
        dk = r.distances[stat_index]["d_K"]
        if dk > 0 and not math.isnan(dk):
            xs.append(math.log(r.volume))
            ys.append(math.log(dk))
    if len(xs) < 3:
        return {"slope": float("nan"), "intercept": float("nan"),
                "slope_se": float("nan"), "n": len(xs)}
    A = np.vstack([xs, np.ones(len(xs))]).T
    coef, res, _, _ = np.linalg.lstsq(A, np.array(ys), rcond=None)
    dof = len(xs) - 2
    if dof > 0 and len(res):
        s2 = float(res[0]) / dof
        cov = s2 * np.linalg.inv(A.T @ A)
        slope_se = math.sqrt(cov[0, 0])
    else:
        slope_se = float("nan")
    return {"slope": float(coef[0]), "intercept": float(coef[1]),
            "slope_se": slope_se, "n": len(xs)}


def run_scenario(config, threads: int = None) -> ExperimentResult:
    """Replicate ladder with empirical moments, distances, and the
    log-log rate regression of the Kolmogorov distance."""
    scenario = config if isinstance(config, Scenario) else \
        load_scenario(config)
    threads = _thread_count(threads)
    rungs = [_make_rung(scenario, i, threads)
             for i in range(len(scenario.extents))]
    return ExperimentResult(scenario=scenario, kind="clt", rungs=rungs,
                            regression=_rate_regression(rungs))


def covariance_experiment(config, threads: int = None) -> ExperimentResult:
    """Empirical vs analytic covariance matrices of the statistics."""
    scenario = config if isinstance(config, Scenario) else \
        load_scenario(config)
    if len(scenario.statistics) < 2:
        raise ConfigError("statistics: covariance experiment needs >= 2")
    threads = _thread_count(threads)
    rungs = []
    for i in range(len(scenario.extents)):
        rung = _make_rung(scenario, i, threads)
        cov = np.cov(rung.values.T) / rung.volume
        rung.extras["empirical_cov"] = cov.tolist()
        rung.extras["empirical_min_eigenvalue"] = float(
            np.min(np.linalg.eigvalsh(cov)))
        rungs.append(rung)
    specs = scenario.specs(0)
    classes = []
    for spec in specs:
        if spec.statistic != "count_class":
            raise ConfigError(
                "statistics: covariance experiment compares count_class"
                " statistics against the analytic matrix")
        classes.append(spec.cls)
    m = len(classes)
    mat = np.zeros((m, m))
    err = np.zeros((m, m))
    for i in range(m):
        for j in range(i, m):
            est = asy_cov(classes[i], classes[j], scenario.phi, scenario.phi,
                          scenario.beta, n_samples=scenario.mc_samples,
                          seed=scenario.seed_base + 7919 * (i * m + j))
            mat[i, j] = mat[j, i] = est.value
            err[i, j] = err[j, i] = est.std_error
    extras = {
        "analytic_cov": mat.tolist(),
        "analytic_cov_se": err.tolist(),
        "analytic_min_eigenvalue": float(np.min(np.linalg.eigvalsh(mat))),
    }
    return ExperimentResult(scenario=scenario, kind="covariance",
                            rungs=rungs, extras=extras)


def total_components_experiment(config, threads: int = None,
                                partial_cap: int = 3) -> ExperimentResult:
    """Total finite component count: variance stabilization, distances,
    and the analytic partial sums of the order-pair covariances."""
    scenario = config if isinstance(config, Scenario) else \
        load_scenario(config)
    if not any(s.get("statistic") == "total_components"
               for s in scenario.statistics):
        raise ConfigError("statistics: total_components not configured")
    threads = _thread_count(threads)
    rungs = []
    for i in range(len(scenario.extents)):
        rung = _make_rung(scenario, i, threads)
        idx = [j for j, s in enumerate(scenario.statistics)
               if s.get("statistic") == "total_components"][0]
        rung.extras["var_per_volume"] = float(
            rung.variances[idx] / rung.volume)
        rungs.append(rung)
    _, partials = sigma_total_partial(partial_cap, scenario.phi,
                                      scenario.beta,
                                      n_samples=scenario.mc_samples,
                                      seed=scenario.seed_base)
    extras = {"partial_sums": [{"m": i + 1, "value": p.value,
                                "std_error": p.std_error}
                               for i, p in enumerate(partials)]}
    return ExperimentResult(scenario=scenario, kind="total",
                            rungs=rungs, extras=extras)


def expectation_experiment(config, threads: int = None) -> ExperimentResult:
    """Empirical per-volume intensities vs the analytic predictions."""
    scenario = config if isinstance(config, Scenario) else \
        load_scenario(config)
    threads = _thread_count(threads)
    rungs = [_make_rung(scenario, i, threads)
             for i in range(len(scenario.extents))]
    specs = scenario.specs(0)
    preds = []
    for n, spec in enumerate(specs):
        if spec.statistic == "count_class":
            est = expected_count_intensity(
                spec.cls, scenario.phi, scenario.beta,
                n_samples=scenario.mc_samples,
                seed=scenario.seed_base + 31 * n)
            preds.append({"value": est.value, "std_error": est.std_error,
                          "method": est.method})
        else:
            preds.append(None)
    return ExperimentResult(scenario=scenario, kind="expectation",
                            rungs=rungs, extras={"predictions": preds})


# ---------------------------------------------------------------------------
# emission

def _fmt(x) -> str:
    return f"{x:.17g}"


def _stat_label(s: dict) -> str:
    parts = [s["statistic"]]
    for key in ("class", "k", "mode"):
        if key in s:
            parts.append(f"{key}={s[key]}")
    if "classes" in s:
        parts.append("classes=" + "+".join(s["classes"]))
    return ";".join(parts)


def _jsonable(x):
    if isinstance(x, float):
        return float(_fmt(x))
    if isinstance(x, (np.floating, np.integer)):
        return _jsonable(x.item())
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def emit(result: ExperimentResult, out_dir: str) -> list[str]:
    """Write the deterministic result layout; returns the file paths."""
    scenario = result.scenario
    base = os.path.join(out_dir, "results", result.scenario_hash)
    written = []
    stat_names = [_stat_label(s) for s in scenario.statistics]
    for rung_idx, rung in enumerate(result.rungs):
        rdir = os.path.join(base, str(rung_idx))
        os.makedirs(rdir, exist_ok=True)
        path = os.path.join(rdir, "census.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["replicate", "statistic", "value"])
            for rep in range(len(rung.values)):
                for s, name in enumerate(stat_names):
                    writer.writerow([rep, name, _fmt(rung.values[rep, s])])
        written.append(path)
        path = os.path.join(rdir, "distances.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["statistic", "d_K", "d_1"])
            for s, name in enumerate(stat_names):
                writer.writerow([name, _fmt(rung.distances[s]["d_K"]),
                                 _fmt(rung.distances[s]["d_1"])])
        written.append(path)
        path = os.path.join(rdir, "moments.json")
        doc = {
            "extent": rung.extent, "volume": rung.volume,
            "means": rung.means, "variances": rung.variances,
            "mecke_mean": rung.mecke_mean, "mecke_se": rung.mecke_se,
            "extras": rung.extras,
        }
        with open(path, "w") as fh:
            json.dump(_jsonable(doc), fh, sort_keys=True, indent=1)
        written.append(path)
        path = os.path.join(rdir, "summary.json")
        doc = {
            "scenario_hash": result.scenario_hash,
            "seed_base": scenario.seed_base,
            "version": VERSION,
            "kind": result.kind,
            "rung": rung_idx,
            "replicates": scenario.replicates,
            "statistics": scenario.statistics,
        }
        with open(path, "w") as fh:
            json.dump(_jsonable(doc), fh, sort_keys=True, indent=1)
        written.append(path)
    path = os.path.join(base, "summary.json")
    os.makedirs(base, exist_ok=True)
    doc = {
        "scenario_hash": result.scenario_hash,
        "seed_base": scenario.seed_base,
        "version": VERSION,
        "kind": result.kind,
        "regression": result.regression,
        "extras": result.extras,
        "n_rungs": len(result.rungs),
    }
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, sort_keys=True, indent=1)
    written.append(path)
    return written
