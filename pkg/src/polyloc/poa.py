"""Distributed polygon outer-approximation of each agent's feasible set.

Every iteration is a synchronous map over agents: each agent reads its
neighbours' previous-iteration polygons, grows them by the measured range,
and intersects the results with its anchor polygons.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .geometry import (
    ConvexPolygon,
    area,
    circumscribed_disk_polygon,
    intersect_all,
    offset_outward,
)
from .model import NodeId, Scenario, neighbor_sets

log = logging.getLogger(__name__)

# flag recorded when an intersection came back empty and a fallback was used
EMPTY_FLAG = "poa_empty"


@dataclass
class PoaState:
    iteration: int
    polygons: dict[NodeId, ConvexPolygon]
    n_edges: int
    angle_offsets: dict[tuple[NodeId, NodeId], float]
    areas: dict[NodeId, list[float]] = field(default_factory=dict)
    flags: dict[NodeId, list[str]] = field(default_factory=dict)
    history: list[dict[NodeId, ConvexPolygon]] = field(default_factory=list)

    def anchor_polygon(self, scenario: Scenario, src: NodeId, dst: NodeId) -> ConvexPolygon:
        return circumscribed_disk_polygon(
            scenario.position(src), scenario.z(src, dst), self.n_edges, self.angle_offsets[(src, dst)]
        )


def draw_angle_offsets(scenario: Scenario, rng: np.random.Generator) -> dict[tuple[NodeId, NodeId], float]:
    """One random rotation per anchor -> agent link, drawn in sorted link order."""
    pairs = sorted((m.src, m.dst) for m in scenario.measurements if m.src.is_anchor)
    draws = rng.uniform(0.0, 2.0 * math.pi, size=len(pairs))
    return {p: float(a) for p, a in zip(pairs, draws)}


def poa_first_iteration(
    scenario: Scenario,
    n_edges: int,
    rng: np.random.Generator,
    angle_offsets: Mapping[tuple[NodeId, NodeId], float] | None = None,
) -> PoaState:
    """Anchor-only polygons; agents without anchors get the deployment area."""
    if n_edges < 3:
        raise ValueError(f"n_edges must be at least 3, got {n_edges}")
    offsets = draw_angle_offsets(scenario, rng)
    if angle_offsets:
        offsets.update(angle_offsets)
    state = PoaState(1, {}, n_edges, offsets)
    deployment = scenario.deployment.to_polygon()
    for j, nb in neighbor_sets(scenario).items():
        flags = []
        if nb.anchors:
            poly = intersect_all([state.anchor_polygon(scenario, i, j) for i in nb.anchors])
            if poly is None:
                log.warning("empty anchor intersection for %s; using deployment area", j)
                poly = deployment
                flags.append(EMPTY_FLAG)
        else:
            poly = deployment
        state.polygons[j] = poly
        state.areas[j] = [area(poly)]
        state.flags[j] = ["|".join(flags)]
    state.history.append(dict(state.polygons))
    return state


def _update_agent(
    j: NodeId, nb, state: PoaState, scenario: Scenario
) -> tuple[ConvexPolygon, str]:
    previous = state.polygons[j]
    # own previous polygon first: it is usually the smallest, and keeping it
    # makes the refinement monotone
    parts = [previous]
    for i in nb.all:
        if i.is_anchor:
            parts.append(state.anchor_polygon(scenario, i, j))
        else:
            parts.append(offset_outward(state.polygons[i], scenario.z(i, j)))
    poly = intersect_all(parts)
    if poly is None:
        log.warning("empty intersection for %s at iteration %d; keeping previous polygon", j, state.iteration + 1)
        return previous, EMPTY_FLAG
    return poly, ""


def poa_iterate(state: PoaState, scenario: Scenario, order=None) -> PoaState:
    """One synchronous round; ``order`` only permutes processing, never results."""
    neighbors = neighbor_sets(scenario)
    agents = list(order) if order is not None else sorted(neighbors)
    new_polys = {}
    new_flags = {}
    for j in agents:
        new_polys[j], new_flags[j] = _update_agent(j, neighbors[j], state, scenario)
    polygons = {j: new_polys[j] for j in sorted(new_polys)}
    nxt = PoaState(
        state.iteration + 1,
        polygons,
        state.n_edges,
        state.angle_offsets,
        {j: state.areas[j] + [area(p)] for j, p in polygons.items()},
        {j: state.flags[j] + [new_flags[j]] for j in polygons},
        state.history + [polygons],
    )
    return nxt


def run_poa(scenario: Scenario, n_edges: int, n_iterations: int, rng: np.random.Generator) -> PoaState:
    if n_iterations < 1:
        raise ValueError(f"need at least one POA iteration, got {n_iterations}")
    state = poa_first_iteration(scenario, n_edges, rng)
    for _ in range(n_iterations - 1):
        state = poa_iterate(state, scenario)
    return state


def discard_violating_measurements(scenario: Scenario) -> Scenario:
    """Drop ranges shorter than the true distance (needs ground truth)."""
    kept = []
    for m in scenario.measurements:
        xi, xj = scenario.position(m.src), scenario.position(m.dst)
        if m.z_hat >= math.hypot(xi[0] - xj[0], xi[1] - xj[1]):
            kept.append(m)
    if len(kept) == len(scenario.measurements):
        return scenario
    return scenario.replace_measurements(kept)
