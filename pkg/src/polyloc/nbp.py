"""Nonparametric belief propagation over the ranging factor graph.

Messages and beliefs are weighted particle sets.  Filtering pushes a
sender's particles through the one-sided ranging likelihood; multiplication
draws from a proposal and weights each draw by the product of the incoming
kernel density estimates divided by the proposal density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Protocol, Sequence

import numpy as np

from .config import ConfigError, RunConfig
from .geometry import ConvexPolygon, area, contains_points, sample_uniform
from .model import NodeId, RangingModel, Scenario, neighbor_sets
from .poa import PoaState

BANDWIDTH_FLOOR = 1e-6
# rows x centres per KDE evaluation block; bounds peak memory
_KDE_BLOCK = 1 << 20

DEGENERATE_FLAG = "degenerate"
NO_MESSAGE_FLAG = "no_messages"


class Particle(NamedTuple):
    position: np.ndarray
    weight: float


@dataclass
class ParticleSet:
    positions: np.ndarray
    weights: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(self.positions) != len(self.weights):
            raise ValueError("positions and weights differ in length")

    @classmethod
    def equal_weights(cls, positions: np.ndarray) -> ParticleSet:
        n = len(positions)
        return cls(positions, np.full(n, 1.0 / n))

    def __len__(self) -> int:
        return len(self.weights)

    def __getitem__(self, k: int) -> Particle:
        return Particle(self.positions[k], float(self.weights[k]))

    def mean(self) -> np.ndarray:
        return self.weights @ self.positions

    def covariance(self) -> np.ndarray:
        d = self.positions - self.mean()
        return (d * self.weights[:, None]).T @ d

    def spread(self) -> float:
        """Trace of the weighted sample covariance."""
        return float(np.trace(self.covariance()))


def estimate_bandwidth(samples: ParticleSet) -> np.ndarray:
    """Diagonal rule-of-thumb bandwidth ``sigma_d * n^(-1/6)`` per axis."""
    n = len(samples)
    sigma = np.sqrt(np.maximum(np.diag(samples.covariance()), 0.0))
    h = np.maximum(sigma * n ** (-1.0 / 6.0), BANDWIDTH_FLOOR)
    return np.diag(h**2)


@dataclass
class KernelDensity:
    """Weighted Gaussian mixture with a shared covariance ``bandwidth``."""

    centers: np.ndarray
    weights: np.ndarray
    bandwidth: np.ndarray
    _precision: np.ndarray = field(init=False, repr=False)
    _norm: float = field(init=False, repr=False)

    def __post_init__(self):
        bw = np.asarray(self.bandwidth, dtype=float).reshape(2, 2)
        a, b, c = float(bw[0, 0]), float(bw[0, 1]), float(bw[1, 1])
        det = a * c - b * b
        # 2x2 closed forms: SPD iff symmetric with a > 0 and det > 0
        if not (math.isclose(b, float(bw[1, 0]), rel_tol=1e-9, abs_tol=1e-15) and a > 0 and det > 0):
            raise ValueError("bandwidth must be symmetric positive definite")
        self.bandwidth = bw
        self._precision = np.array([[c, -b], [-b, a]]) / det
        self._norm = 1.0 / (2.0 * math.pi * math.sqrt(det))

    @classmethod
    def from_particles(cls, ps: ParticleSet) -> KernelDensity:
        return cls(ps.positions, ps.weights, estimate_bandwidth(ps))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        a, b, c = self._precision[0, 0], self._precision[0, 1], self._precision[1, 1]
        cx, cy = self.centers[:, 0], self.centers[:, 1]
        out = np.empty(len(pts))
        step = max(1, _KDE_BLOCK // max(len(cx), 1))
        for s in range(0, len(pts), step):
            dx = pts[s : s + step, 0, None] - cx
            dy = pts[s : s + step, 1, None] - cy
            q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
            out[s : s + step] = np.exp(-0.5 * q) @ self.weights
        return out * self._norm


def kde_eval(kd: KernelDensity, x) -> float:
    return float(kd.evaluate(np.asarray(x, dtype=float))[0])


def resample_indices(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial resampling by inverse CDF."""
    cdf = weights.cumsum()
    u = rng.random(n)
    u *= cdf[-1]
    idx = cdf.searchsorted(u, side="right")
    # u * total can round up to the total itself
    return np.minimum(idx, len(weights) - 1, out=idx)


def filter_message(
    source: ParticleSet | Sequence[float],
    z_hat: float,
    model: RangingModel,
    n_s: int,
    rng: np.random.Generator,
) -> ParticleSet:
    """Sample the receiver-side message implied by one range measurement.

    ``source`` is an anchor position or the sender's belief.  Each sample
    picks a sender location, a radius ``z_hat - eps`` with ``eps`` an
    exponential error truncated to ``[0, z_hat]``, and a uniform bearing.
    """
    if n_s < 1:
        raise ValueError(f"n_s must be positive, got {n_s}")
    if isinstance(source, ParticleSet):
        origins = source.positions[resample_indices(source.weights, n_s, rng)]
        ox, oy = origins[:, 0], origins[:, 1]
    else:
        ox, oy = float(source[0]), float(source[1])
    if z_hat > 0.0:
        eps = rng.exponential(model.lambda_inv, n_s)
        bad = eps > z_hat
        while bad.any():
            eps[bad] = rng.exponential(model.lambda_inv, int(bad.sum()))
            bad = eps > z_hat
        radius = z_hat - eps
    else:
        radius = np.zeros(n_s)
    theta = (2.0 * math.pi) * rng.random(n_s)
    pts = np.empty((n_s, 2))
    pts[:, 0] = ox + radius * np.cos(theta)
    pts[:, 1] = oy + radius * np.sin(theta)
    return ParticleSet(pts, np.full(n_s, 1.0 / n_s))


class Proposal(Protocol):
    kind: str

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray: ...

    def density(self, points: np.ndarray) -> np.ndarray: ...


class PolygonUniformProposal:
    """Uniform density ``1 / area`` over a convex polygon, zero outside."""

    kind = "polygon"

    def __init__(self, polygon: ConvexPolygon):
        self.polygon = polygon
        self.area = area(polygon)

    def sample(self, n, rng):
        return sample_uniform(self.polygon, n, rng)

    def density(self, points):
        return np.where(contains_points(self.polygon, points), 1.0 / self.area, 0.0)


class LowestSpreadProposal:
    """Baseline: draw from the KDE of the incoming message with least spread.

    Spread is the trace of the weighted sample covariance, standing in for
    entropy.  Draws resample that message's particles and add kernel noise,
    so the density is the message's own KDE.
    """

    kind = "baseline"

    def __init__(self, message: KernelDensity):
        self.kde = message
        self._chol = np.linalg.cholesky(message.bandwidth)

    @classmethod
    def from_messages(cls, messages: Sequence[ParticleSet]) -> LowestSpreadProposal:
        best = min(range(len(messages)), key=lambda k: messages[k].spread())
        return cls(KernelDensity.from_particles(messages[best]))

    def sample(self, n, rng):
        idx = resample_indices(self.kde.weights, n, rng)
        noise = rng.standard_normal((n, 2)) @ self._chol.T
        return self.kde.centers[idx] + noise

    def density(self, points):
        return self.kde.evaluate(points)


def multiply_messages(
    incoming: Sequence[ParticleSet],
    proposal: Proposal,
    n_s: int,
    rng: np.random.Generator,
) -> ParticleSet:
    """Importance-sampled product of the incoming messages.

    If every weight underflows to zero the draws are returned with uniform
    weights and ``degenerate`` set.
    """
    if not incoming:
        raise ValueError("need at least one incoming message")
    x = proposal.sample(n_s, rng)
    w = np.ones(n_s)
    for msg in incoming:
        w *= KernelDensity.from_particles(msg).evaluate(x)
    q = proposal.density(x)
    w = np.divide(w, q, out=np.zeros(n_s), where=q > 0)
    total = w.sum()
    if not (total > 0.0 and math.isfinite(total)):
        return ParticleSet(x, np.full(n_s, 1.0 / n_s), degenerate=True)
    return ParticleSet(x, w / total)


@dataclass
class BeliefState:
    iteration: int
    beliefs: dict[NodeId, ParticleSet]
    estimates: dict[NodeId, np.ndarray]
    informative: dict[NodeId, bool]
    flags: dict[NodeId, str] = field(default_factory=dict)


def agent_rng(base_seed: int, iteration: int, node: NodeId) -> np.random.Generator:
    """Independent stream per (agent, iteration); order-free by construction."""
    return np.random.default_rng([base_seed, iteration, node.index])


def initial_beliefs(
    scenario: Scenario,
    supports: Mapping[NodeId, ConvexPolygon],
    n_s: int,
    base_seed: int,
) -> BeliefState:
    """Uniform draws over each agent's prior support.

    A belief counts as informative once its support is strictly smaller
    than the deployment area; uninformative agents send no messages.
    """
    full = scenario.deployment.area
    beliefs, estimates, informative = {}, {}, {}
    for j in scenario.agents:
        support = supports[j]
        ps = ParticleSet.equal_weights(sample_uniform(support, n_s, agent_rng(base_seed, 0, j)))
        beliefs[j] = ps
        estimates[j] = ps.mean()
        informative[j] = area(support) < full * (1.0 - 1e-9)
    return BeliefState(0, beliefs, estimates, informative, {j: "" for j in beliefs})


def nbp_iteration(
    state: BeliefState,
    scenario: Scenario,
    proposals: Mapping[NodeId, Proposal | None],
    n_s: int,
    base_seed: int,
    neighbors=None,
) -> BeliefState:
    """One synchronous round: every agent filters, then multiplies.

    A ``None`` proposal selects the lowest-spread baseline for that agent.
    """
    model = scenario.ranging
    neighbors = neighbors or neighbor_sets(scenario)
    l = state.iteration + 1
    beliefs, estimates, informative, flags = {}, {}, {}, {}
    for j in scenario.agents:
        rng = agent_rng(base_seed, l, j)
        messages = []
        for i in neighbors[j].all:
            if i.is_anchor:
                src = scenario.position(i)
            elif state.informative[i]:
                src = state.beliefs[i]
            else:
                continue
            messages.append(filter_message(src, scenario.z(i, j), model, n_s, rng))
        if not messages:
            beliefs[j] = state.beliefs[j]
            informative[j] = state.informative[j]
            flags[j] = NO_MESSAGE_FLAG
        else:
            proposal = proposals.get(j) or LowestSpreadProposal.from_messages(messages)
            belief = multiply_messages(messages, proposal, n_s, rng)
            beliefs[j] = belief
            informative[j] = True
            flags[j] = DEGENERATE_FLAG if belief.degenerate else ""
        estimates[j] = beliefs[j].mean()
    return BeliefState(l, beliefs, estimates, informative, flags)


def run_nbp(
    scenario: Scenario,
    poa_state: PoaState | None,
    config: RunConfig,
    rng: np.random.Generator,
) -> list[BeliefState]:
    """Run ``config.nbp_iterations`` rounds; returns the state after each."""
    if config.proposal == "polygon":
        if poa_state is None:
            raise ConfigError("the polygon proposal needs a POA result")
        supports = dict(poa_state.polygons)
        proposals = {j: PolygonUniformProposal(p) for j, p in supports.items()}
    else:
        deployment = scenario.deployment.to_polygon()
        supports = {j: deployment for j in scenario.agents}
        proposals = {j: None for j in scenario.agents}
    base_seed = int(rng.integers(2**63))
    n_s = config.n_samples
    state = initial_beliefs(scenario, supports, n_s, base_seed)
    neighbors = neighbor_sets(scenario)
    states = []
    for _ in range(config.nbp_iterations):
        state = nbp_iteration(state, scenario, proposals, n_s, base_seed, neighbors)
        states.append(state)
    return states
