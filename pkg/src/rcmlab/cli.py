"""Command line interface.

Subcommands: sample, census, expectation, covariance, clt, bounds,
total. Every subcommand takes --config (scenario JSON), --seed
(overrides the configured seed base), --out (output directory) and
--threads (worker count; the RCMLAB_THREADS environment variable wins
over the flag).

Exit codes: 0 on success, 2 on configuration errors, 3 when a numerical
precondition is violated.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .analysis import poincare_bound
from .experiments import (ConfigError, covariance_experiment, emit,
                          expectation_experiment, load_scenario,
                          run_scenario, total_components_experiment,
                          _jsonable)
from .marks import PairMarkSource
from .sampling import build_rcm, sample_poisson

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class PreconditionError(RuntimeError):
    """A numerical precondition of the requested computation failed."""


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="scenario JSON file")
    p.add_argument("--seed", type=int, default=None,
                   help="override the configured seed base")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (RCMLAB_THREADS overrides)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcmlab",
        description="Random connection model simulation and validation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("sample", "draw one realization and write points and edges"),
        ("census", "replicate component census on the window ladder"),
        ("expectation", "empirical vs analytic count intensities"),
        ("covariance", "empirical vs analytic covariance matrices"),
        ("clt", "standardized distances and convergence rate"),
        ("bounds", "variance upper bounds for the configured statistics"),
        ("total", "total component count experiment"),
    ]:
        _add_common(sub.add_parser(name, help=help_text))
    return parser


def _load(args):
    scenario = load_scenario(args.config)
    if args.seed is not None:
        raw = dict(scenario.raw)
        raw["seed_base"] = args.seed
        scenario = load_scenario(raw)
    return scenario


def _cmd_sample(args) -> int:
    scenario = _load(args)
    window = scenario.window(0)
    specs = scenario.specs(0)
    padding = max(s.padding() for s in specs) if specs else \
        scenario.phi.truncation_radius()
    seed = scenario.seed_base
    points = sample_poisson(window, padding, scenario.beta, seed)
    graph = build_rcm(points, scenario.phi, PairMarkSource(seed))
    out = os.path.join(args.out, "results", scenario.scenario_hash, "0")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "points.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"x{i}" for i in range(points.dim)])
        for i, row in enumerate(points.points):
            writer.writerow([i] + [f"{v:.17g}" for v in row])
    with open(os.path.join(out, "edges.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j"])
        for i, j in graph.edges:
            writer.writerow([int(i), int(j)])
    print(f"wrote {points.n} points, {len(graph.edges)} edges to {out}")
    return EXIT_OK


def _cmd_bounds(args) -> int:
    scenario = _load(args)
    docs = []
    for idx in range(len(scenario.extents)):
        for spec in scenario.specs(idx):
            est = poincare_bound(spec, n_outer=max(50, scenario.inner * 25),
                                 seed=scenario.seed_base)
            docs.append({
                "rung": idx, "statistic": spec.statistic,
                "poincare_bound": est.value,
                "std_error": est.std_error,
            })
    out = os.path.join(args.out, "results", scenario.scenario_hash)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "bounds.json")
    with open(path, "w") as fh:
        json.dump(_jsonable(docs), fh, sort_keys=True, indent=1)
    print(f"wrote {path}")
    return EXIT_OK


def _check_result(result):
    for rung in result.rungs:
        if np.any(~np.isfinite(rung.means)):
            raise PreconditionError("non-finite replicate statistics")


def _run_and_emit(args, runner) -> int:
    scenario = _load(args)
    result = runner(scenario, threads=args.threads)
    _check_result(result)
    paths = emit(result, args.out)
    print(f"wrote {len(paths)} files under "
          f"{os.path.join(args.out, 'results', result.scenario_hash)}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sample":
            return _cmd_sample(args)
        if args.command == "bounds":
            return _cmd_bounds(args)
        if args.command in ("census", "clt"):
            return _run_and_emit(args, run_scenario)
        if args.command == "expectation":
            return _run_and_emit(args, expectation_experiment)
        if args.command == "covariance":
            return _run_and_emit(args, covariance_experiment)
        if args.command == "total":
            return _run_and_emit(args, total_components_experiment)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PreconditionError, FloatingPointError) as exc:
        print(f"numerical precondition violated: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"numerical precondition violated: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
