"""Command-line entry point: ``polyloc {generate,poa,run,summarize}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .geometry import area
from .model import Scenario, generate_scenario
from .poa import run_poa
from .sim import (
    DEFAULT_THRESHOLDS,
    TrialResult,
    export_results,
    load_results,
    results_to_csv,
    run_trials,
    summarize,
    trial_seed,
    trial_streams,
)

log = logging.getLogger("polyloc")


class CliError(Exception):
    pass


def _add_config_flags(p: argparse.ArgumentParser, seed_required: bool = False) -> None:
    p.add_argument("--config", type=Path, help="JSON file with RunConfig fields; flags override it")
    for f in fields(RunConfig):
        if f.name == "seed":
            continue
        flag = "--" + f.name.replace("_", "-")
        kind = {"int": int, "float": float, "str": str}[f.type]
        extra = {"choices": ["polygon", "baseline"]} if f.name == "proposal" else {}
        p.add_argument(flag, dest=f.name, type=kind, default=None, **extra)
    p.add_argument("--seed", type=int, required=seed_required, default=None, help="master seed")


def _config_from(args) -> RunConfig:
    base = RunConfig.load(args.config).to_dict() if args.config else RunConfig().to_dict()
    for name in base:
        value = getattr(args, name, None)
        if value is not None:
            base[name] = value
    return RunConfig.from_dict(base)


def _scenario_for(args, config: RunConfig) -> tuple[Scenario, int]:
    if getattr(args, "scenario", None):
        try:
            scen = Scenario.load(args.scenario)
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(f"cannot read scenario {args.scenario}: {exc}") from exc
        return scen, scen.seed if scen.seed is not None else config.seed
    seed = trial_seed(config.seed, args.trial)
    scen_rng, _, _ = trial_streams(seed)
    return generate_scenario(config, scen_rng, seed), seed


def cmd_generate(args) -> int:
    config = _config_from(args)
    scen, _ = _scenario_for(args, config)
    if args.output:
        scen.save(args.output)
    else:
        sys.stdout.write(json.dumps(scen.to_dict(), indent=1) + "\n")
    return 0


def cmd_poa(args) -> int:
    config = _config_from(args)
    scen, seed = _scenario_for(args, config)
    _, poa_rng, _ = trial_streams(seed)
    state = run_poa(scen, config.n_edges, config.poa_iterations, poa_rng)
    n = len(scen.agents)
    areas = [state.areas[j] for j in scen.agents]
    result = TrialResult(
        args.trial,
        seed,
        np.zeros((n, 0)),
        np.array(areas).reshape(n, -1),
        [state.flags[j] for j in scen.agents],
    )
    text = results_to_csv([result])
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if args.polygons:
        dump = [
            {
                "agent": j.index,
                "iteration": l + 1,
                "area_m2": area(polys[j]),
                "vertices": polys[j].vertices.tolist(),
            }
            for l, polys in enumerate(state.history)
            for j in scen.agents
        ]
        Path(args.polygons).write_text(json.dumps(dump, indent=1) + "\n")
    means = np.mean(np.array(areas), axis=0)
    for l, m in enumerate(means, start=1):
        log.info("POA iteration %d: mean polygon area %.6g m^2", l, m)
    return 0


def cmd_run(args) -> int:
    config = _config_from(args)
    summary, results = run_trials(config, jobs=args.jobs)
    export_results(results, args.output, summary, config)
    if args.timings:
        Path(args.timings).write_text(
            json.dumps([{"trial": r.trial, **r.timings} for r in results], indent=1) + "\n"
        )
    log.info(
        "%d trials, mean error per iteration %s, converged at %d, P(e > %g m) = %.4f",
        summary.n_trials,
        ", ".join(f"{e:.4f}" for e in summary.mean_error),
        summary.convergence_iteration,
        summary.outage_threshold,
        summary.outage_at_threshold,
    )
    return 0


def cmd_summarize(args) -> int:
    try:
        results = load_results(args.results)
    except OSError as exc:
        raise CliError(str(exc)) from exc
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if not results:
        raise CliError(f"{args.results}: no result rows")
    thresholds = [float(x) for x in args.thresholds.split(",")] if args.thresholds else DEFAULT_THRESHOLDS
    s = summarize(results, args.outage_threshold, thresholds, args.rel_tol)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["section", "x", "value"])
        for l, e in enumerate(s.mean_error, start=1):
            w.writerow(["mean_error_m", l, f"{e:.9g}"])
        for l, a in enumerate(s.mean_area, start=1):
            w.writerow(["mean_polygon_area_m2", l, f"{a:.9g}"])
        for t, p in zip(s.thresholds, s.outage):
            w.writerow(["outage_probability", f"{t:.9g}", f"{p:.9g}"])
        w.writerow(["convergence_iteration", "", s.convergence_iteration])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyloc", description="Polygon-constrained NBP localization simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a scenario file")
    _add_config_flags(g)
    g.add_argument("--trial", type=int, default=0, help="trial index whose seed to use")
    g.add_argument("-o", "--output", type=Path)
    g.set_defaults(func=cmd_generate)

    p = sub.add_parser("poa", help="polygon outer-approximation only: area rows per agent and iteration")
    _add_config_flags(p)
    p.add_argument("--scenario", type=Path, help="scenario file (default: generate from config)")
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--polygons", type=Path, help="also dump vertex lists as JSON")
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(func=cmd_poa)

    r = sub.add_parser("run", help="full POA + NBP Monte-Carlo run")
    _add_config_flags(r, seed_required=True)
    r.add_argument("-o", "--output", type=Path, default=Path("results.csv"))
    r.add_argument("--jobs", type=int, default=1, help="worker processes")
    r.add_argument("--timings", type=Path, help="write per-trial wall-clock to this JSON file")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("summarize", help="curves from a results CSV")
    s.add_argument("results", type=Path)
    s.add_argument("--thresholds", help="comma-separated outage thresholds in meters")
    s.add_argument("--outage-threshold", type=float, default=1.0)
    s.add_argument("--rel-tol", type=float, default=0.01)
    s.add_argument("-o", "--output", type=Path)
    s.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (CliError, ConfigError) as exc:
        print(f"polyloc: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"polyloc: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
