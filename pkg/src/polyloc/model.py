"""Network topology, one-sided exponential ranging, and scenario files."""

from __future__ import annotations

import enum
import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .config import RunConfig
from .geometry import Rect


class NodeKind(str, enum.Enum):
    ANCHOR = "anchor"
    AGENT = "agent"


@functools.total_ordering
@dataclass(frozen=True)
class NodeId:
    """Node handle; anchors sort before agents, then by index."""

    kind: NodeKind
    index: int

    def __lt__(self, other: NodeId) -> bool:
        return (not self.is_anchor, self.index) < (not other.is_anchor, other.index)

    def __str__(self) -> str:
        return f"{self.kind.value}{self.index}"

    @property
    def is_anchor(self) -> bool:
        return self.kind is NodeKind.ANCHOR


def anchor(index: int) -> NodeId:
    return NodeId(NodeKind.ANCHOR, index)


def agent(index: int) -> NodeId:
    return NodeId(NodeKind.AGENT, index)


@dataclass(frozen=True)
class RangeMeasurement:
    src: NodeId
    dst: NodeId
    z_hat: float


@dataclass(frozen=True)
class RangingModel:
    lambda_inv: float

    def __post_init__(self):
        if not self.lambda_inv > 0:
            raise ValueError(f"mean ranging error must be positive, got {self.lambda_inv}")

    @property
    def rate(self) -> float:
        return 1.0 / self.lambda_inv


@dataclass(frozen=True, eq=False)
class Scenario:
    """Static network: true positions, connectivity and the fixed range draws.

    Measurements are kept for ordered pairs ``src -> dst`` with ``dst`` an
    agent; neighbour sets are read off the measurement list.
    """

    deployment: Rect
    anchor_positions: np.ndarray
    agent_positions: np.ndarray
    comm_range: float
    lambda_inv: float
    measurements: tuple[RangeMeasurement, ...]
    seed: int | None = None
    _by_pair: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "anchor_positions", _frozen_points(self.anchor_positions))
        object.__setattr__(self, "agent_positions", _frozen_points(self.agent_positions))
        object.__setattr__(self, "measurements", tuple(self.measurements))
        object.__setattr__(self, "_by_pair", {(m.src, m.dst): m.z_hat for m in self.measurements})

    @property
    def anchors(self) -> list[NodeId]:
        return [anchor(k) for k in range(len(self.anchor_positions))]

    @property
    def agents(self) -> list[NodeId]:
        return [agent(k) for k in range(len(self.agent_positions))]

    @property
    def ranging(self) -> RangingModel:
        return RangingModel(self.lambda_inv)

    def position(self, node: NodeId) -> np.ndarray:
        table = self.anchor_positions if node.is_anchor else self.agent_positions
        return table[node.index]

    def z(self, src: NodeId, dst: NodeId) -> float:
        return self._by_pair[(src, dst)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.deployment == other.deployment
            and np.array_equal(self.anchor_positions, other.anchor_positions)
            and np.array_equal(self.agent_positions, other.agent_positions)
            and self.comm_range == other.comm_range
            and self.lambda_inv == other.lambda_inv
            and self.measurements == other.measurements
            and self.seed == other.seed
        )

    def replace_measurements(self, measurements: Sequence[RangeMeasurement]) -> Scenario:
        return Scenario(
            self.deployment,
            self.anchor_positions,
            self.agent_positions,
            self.comm_range,
            self.lambda_inv,
            tuple(measurements),
            self.seed,
        )

    def to_dict(self) -> dict:
        d = self.deployment
        return {
            "deployment": {"xmin": d.xmin, "ymin": d.ymin, "xmax": d.xmax, "ymax": d.ymax},
            "anchors": [{"index": k, "x": float(x), "y": float(y)} for k, (x, y) in enumerate(self.anchor_positions)],
            "agents": [{"index": k, "x": float(x), "y": float(y)} for k, (x, y) in enumerate(self.agent_positions)],
            "comm_range": self.comm_range,
            "lambda_inv": self.lambda_inv,
            "measurements": [
                {
                    "from": {"kind": m.src.kind.value, "index": m.src.index},
                    "to": {"kind": m.dst.kind.value, "index": m.dst.index},
                    "z_hat": m.z_hat,
                }
                for m in self.measurements
            ],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> Scenario:
        def node(d):
            return NodeId(NodeKind(d["kind"]), int(d["index"]))

        def points(rows):
            rows = sorted(rows, key=lambda r: r["index"])
            if [r["index"] for r in rows] != list(range(len(rows))):
                raise ValueError("node indices must be 0..n-1 without gaps")
            return np.array([[r["x"], r["y"]] for r in rows], dtype=float).reshape(-1, 2)

        return cls(
            Rect(**data["deployment"]),
            points(data["anchors"]),
            points(data["agents"]),
            float(data["comm_range"]),
            float(data["lambda_inv"]),
            tuple(
                RangeMeasurement(node(m["from"]), node(m["to"]), float(m["z_hat"]))
                for m in data["measurements"]
            ),
            data.get("seed"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> Scenario:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _frozen_points(a) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(-1, 2)
    arr.setflags(write=False)
    return arr


def measure(model: RangingModel, x_i, x_j, rng: np.random.Generator) -> float:
    """True distance plus a non-negative exponential error."""
    d = math.hypot(x_i[0] - x_j[0], x_i[1] - x_j[1])
    return d + float(rng.exponential(model.lambda_inv))


def likelihood(model: RangingModel, z_hat: float, x_i, x_j) -> float:
    d = math.hypot(x_j[0] - x_i[0], x_j[1] - x_i[1])
    if z_hat < d:
        return 0.0
    lam = model.rate
    return lam * math.exp(-lam * (z_hat - d))


def anchor_lattice(deployment: Rect, n_anchors: int) -> np.ndarray:
    """Deterministic anchor grid: about sqrt(n) rows, cell-centred.

    Rows get ``n // rows`` anchors; the remainder goes to the rows after the
    first, so 13 anchors lay out as 3-4-3-3.
    """
    if n_anchors == 0:
        return np.zeros((0, 2))
    rows = max(1, round(math.sqrt(n_anchors)))
    counts = [n_anchors // rows] * rows
    for r in range(n_anchors % rows):
        counts[(r + 1) % rows] += 1
    pts = []
    for r, count in enumerate(counts):
        y = deployment.ymin + (r + 0.5) / rows * deployment.height
        for c in range(count):
            x = deployment.xmin + (c + 0.5) / count * deployment.width
            pts.append((x, y))
    return np.array(pts)


def build_scenario(
    deployment: Rect,
    anchor_positions,
    agent_positions,
    comm_range: float,
    lambda_inv: float,
    rng: np.random.Generator,
    seed: int | None = None,
) -> Scenario:
    """Draw one range per ordered in-range pair ``i -> j`` (``j`` an agent)."""
    anchors_xy = np.array(anchor_positions, dtype=float).reshape(-1, 2)
    agents_xy = np.array(agent_positions, dtype=float).reshape(-1, 2)
    model = RangingModel(lambda_inv)
    nodes = [(anchor(k), p) for k, p in enumerate(anchors_xy)]
    nodes += [(agent(k), p) for k, p in enumerate(agents_xy)]
    measurements = []
    for dst_k, x_j in enumerate(agents_xy):
        dst = agent(dst_k)
        for src, x_i in nodes:
            if src == dst:
                continue
            if math.hypot(x_i[0] - x_j[0], x_i[1] - x_j[1]) <= comm_range:
                measurements.append(RangeMeasurement(src, dst, measure(model, x_i, x_j, rng)))
    return Scenario(deployment, anchors_xy, agents_xy, comm_range, lambda_inv, tuple(measurements), seed)


def generate_scenario(config: RunConfig, rng: np.random.Generator, seed: int | None = None) -> Scenario:
    deployment = Rect(0.0, 0.0, config.width, config.height)
    u = rng.random((config.n_agents, 2))
    agents_xy = np.column_stack((u[:, 0] * config.width, u[:, 1] * config.height))
    return build_scenario(
        deployment,
        anchor_lattice(deployment, config.n_anchors),
        agents_xy,
        config.comm_range,
        config.lambda_inv,
        rng,
        seed,
    )


@dataclass(frozen=True)
class Neighbors:
    anchors: tuple[NodeId, ...]
    all: tuple[NodeId, ...]


def neighbor_sets(scenario: Scenario) -> dict[NodeId, Neighbors]:
    """Map each agent to its measuring neighbours (anchors first, sorted)."""
    incoming: dict[NodeId, list[NodeId]] = {a: [] for a in scenario.agents}
    for m in scenario.measurements:
        incoming[m.dst].append(m.src)
    out = {}
    for a, srcs in incoming.items():
        srcs = sorted(set(srcs))
        out[a] = Neighbors(tuple(s for s in srcs if s.is_anchor), tuple(srcs))
    return out
