"""Monte-Carlo harness: seeded trials, metrics and result files."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import RunConfig
from .model import Scenario, generate_scenario
from .nbp import run_nbp
from .poa import run_poa

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
GOLDEN64 = 0x9E3779B97F4A7C15
CSV_HEADER = ["trial", "agent", "iteration", "error_m", "polygon_area_m2", "flag"]
DEFAULT_THRESHOLDS = tuple(round(0.25 * k, 2) for k in range(41))


def splitmix64(x: int) -> int:
    x = (x + GOLDEN64) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def trial_seed(master_seed: int, trial: int) -> int:
    """Seed of trial ``trial``: splitmix64 of ``master + trial * golden``."""
    return splitmix64((master_seed + trial * GOLDEN64) & MASK64)


def trial_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent (scenario, POA, NBP) generators for one trial seed.

    Separate streams keep the scenario identical across proposal kinds.
    """
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))


@dataclass
class TrialResult:
    trial: int
    seed: int | None
    errors: np.ndarray  # (n_agents, nbp_iterations)
    areas: np.ndarray  # (n_agents, poa_iterations); zero columns without POA
    flags: list[list[str]]  # per agent, per row iteration
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def n_agents(self) -> int:
        return self.errors.shape[0]

    @property
    def n_rows(self) -> int:
        return max(self.errors.shape[1], self.areas.shape[1])


@dataclass
class Summary:
    mean_error: list[float]
    convergence_iteration: int
    thresholds: list[float]
    outage: list[float]
    outage_threshold: float
    outage_at_threshold: float
    mean_area: list[float]
    n_trials: int

    def to_dict(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "mean_error_m": self.mean_error,
            "convergence_iteration": self.convergence_iteration,
            "outage_threshold_m": self.outage_threshold,
            "outage_at_threshold": self.outage_at_threshold,
            "outage_curve": {"thresholds_m": self.thresholds, "probability": self.outage},
            "mean_polygon_area_m2": self.mean_area,
        }


def run_trial(config: RunConfig, trial: int, scenario: Scenario | None = None) -> TrialResult:
    seed = trial_seed(config.seed, trial)
    scen_rng, poa_rng, nbp_rng = trial_streams(seed)
    timings = {}
    t0 = time.perf_counter()
    if scenario is None:
        scenario = generate_scenario(config, scen_rng, seed)
    timings["scenario_s"] = time.perf_counter() - t0
    n = len(scenario.agents)
    poa_flags = [[] for _ in range(n)]
    poa = None
    areas = np.zeros((n, 0))
    if config.proposal == "polygon":
        t0 = time.perf_counter()
        poa = run_poa(scenario, config.n_edges, config.poa_iterations, poa_rng)
        timings["poa_s"] = time.perf_counter() - t0
        areas = np.array([poa.areas[j] for j in scenario.agents]).reshape(n, -1)
        poa_flags = [poa.flags[j] for j in scenario.agents]
    t0 = time.perf_counter()
    states = run_nbp(scenario, poa, config, nbp_rng)
    timings["nbp_s"] = time.perf_counter() - t0
    truth = scenario.agent_positions
    errors = np.array(
        [[float(np.hypot(*(s.estimates[j] - truth[k]))) for s in states] for k, j in enumerate(scenario.agents)]
    ).reshape(n, len(states))
    rows = max(errors.shape[1], areas.shape[1])
    flags = []
    for k, j in enumerate(scenario.agents):
        per = []
        for l in range(rows):
            parts = []
            if l < len(poa_flags[k]) and poa_flags[k][l]:
                parts.append(poa_flags[k][l])
            if l < len(states) and states[l].flags[j]:
                parts.append(states[l].flags[j])
            per.append("|".join(parts))
        flags.append(per)
    return TrialResult(trial, seed, errors, areas, flags, timings)


def _run_one(args):
    return run_trial(*args)


def run_trials(config: RunConfig, jobs: int = 1) -> tuple[Summary, list[TrialResult]]:
    """Run ``config.n_trials`` trials; output order never depends on ``jobs``."""
    work = [(config, t) for t in range(config.n_trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, work))
    else:
        results = [_run_one(w) for w in work]
    results.sort(key=lambda r: r.trial)
    return summarize(results, config.outage_threshold), results


def convergence_iteration(mean_errors: Sequence[float], rel_tol: float = 0.01) -> int:
    """First 1-based iteration whose relative change to the next is below ``rel_tol``."""
    e = list(mean_errors)
    if len(e) < 2:
        raise ValueError("need at least two iterations to judge convergence")
    for l in range(len(e) - 1):
        if e[l] == 0.0:
            if e[l + 1] == 0.0:
                return l + 1
            continue
        if abs(e[l + 1] - e[l]) / e[l] < rel_tol:
            return l + 1
    return len(e)


def _all_errors(results: Sequence[TrialResult]) -> np.ndarray:
    return np.concatenate([r.errors for r in results], axis=0)


def mean_error_curve(results: Sequence[TrialResult]) -> np.ndarray:
    return _all_errors(results).mean(axis=0)


def outage_curve(
    results: Sequence[TrialResult],
    thresholds: Sequence[float],
    iteration: int | None = None,
    rel_tol: float = 0.01,
) -> np.ndarray:
    """Empirical ``P(e > threshold)`` at the (1-based) converged iteration."""
    if not results:
        raise ValueError("no results to summarise")
    errs = _all_errors(results)
    if iteration is None:
        curve = errs.mean(axis=0)
        iteration = convergence_iteration(curve, rel_tol) if len(curve) > 1 else 1
    col = errs[:, iteration - 1]
    return np.array([float(np.mean(col > th)) for th in thresholds])


def summarize(
    results: Sequence[TrialResult],
    outage_threshold: float = 1.0,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    rel_tol: float = 0.01,
) -> Summary:
    if not results:
        raise ValueError("no results to summarise")
    curve = mean_error_curve(results)
    if len(curve) == 0:
        raise ValueError("results carry no localization errors")
    conv = convergence_iteration(curve, rel_tol) if len(curve) > 1 else 1
    outage = outage_curve(results, thresholds, conv)
    at = outage_curve(results, [outage_threshold], conv)[0]
    all_areas = np.concatenate([r.areas for r in results], axis=0)
    mean_area = all_areas.mean(axis=0).tolist() if all_areas.size else []
    return Summary(
        [float(x) for x in curve],
        conv,
        [float(t) for t in thresholds],
        [float(p) for p in outage],
        float(outage_threshold),
        float(at),
        mean_area,
        len(results),
    )


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.9g}"


def results_to_csv(results: Sequence[TrialResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in results:
        for a in range(r.n_agents):
            for l in range(r.n_rows):
                err = r.errors[a, l] if l < r.errors.shape[1] else None
                ar = r.areas[a, l] if l < r.areas.shape[1] else None
                w.writerow([r.trial, a, l + 1, _fmt(err), _fmt(ar), r.flags[a][l]])
    return buf.getvalue()


def summary_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".summary.json")


def export_results(
    results: Sequence[TrialResult],
    path: str | Path,
    summary: Summary | None = None,
    config: RunConfig | None = None,
) -> Path:
    """Write the per-row CSV and a ``<stem>.summary.json`` sibling."""
    path = Path(path)
    if summary is None:
        summary = summarize(results, config.outage_threshold if config else 1.0)
    doc = {"summary": summary.to_dict()}
    if config is not None:
        doc["config"] = config.to_dict()
    doc["trial_seeds"] = [r.seed for r in results]
    try:
        path.write_text(results_to_csv(results))
        summary_path(path).write_text(json.dumps(doc, indent=1) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def _num(s: str) -> float:
    return float(s) if s != "" else math.nan


def load_results(path: str | Path) -> list[TrialResult]:
    """Parse a results CSV back into :class:`TrialResult` objects."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read results from {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != CSV_HEADER:
        raise ValueError(f"{path}: not a results file (header {header})")
    rows: dict[int, dict[int, dict[int, tuple]]] = {}
    for rec in reader:
        if not rec:
            continue
        t, a, l = int(rec[0]), int(rec[1]), int(rec[2])
        rows.setdefault(t, {}).setdefault(a, {})[l] = (_num(rec[3]), _num(rec[4]), rec[5])
    out = []
    for t in sorted(rows):
        agents = rows[t]
        n_rows = max(max(v) for v in agents.values())
        errs = np.array([[agents[a][l][0] for l in range(1, n_rows + 1)] for a in sorted(agents)])
        ars = np.array([[agents[a][l][1] for l in range(1, n_rows + 1)] for a in sorted(agents)])
        n_err = int(np.sum(~np.all(np.isnan(errs), axis=0)))
        n_area = int(np.sum(~np.all(np.isnan(ars), axis=0)))
        flags = [[agents[a][l][2] for l in range(1, n_rows + 1)] for a in sorted(agents)]
        out.append(TrialResult(t, None, errs[:, :n_err], ars[:, :n_area], flags))
    return out
