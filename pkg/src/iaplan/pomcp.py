"""POMCP: UCB1 tree search over simulated histories with unweighted particle beliefs.

The planner only talks to the generic simulator contract (``sample_initial``,
``step``, ``action_count``), so global simulators and influence-augmented local
simulators are driven by exactly the same code.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable

from iaplan.core import SIMULATION_COUNT, RngStream, SimulatorBudget

REINVIGORATION_DIVISOR = 6


class ParticleDepletion(RuntimeError):
    """The belief at the new root is empty even after reinvigoration."""


class EmptyBelief(RuntimeError):
    """Planning was requested from a root without particles."""


@dataclass(frozen=True)
class PlannerConfig:
    ucb_c: float = 100.0
    gamma: float = 1.0
    horizon: int = 10
    effective_horizon: int = 10
    budget: SimulatorBudget = field(default_factory=lambda: SimulatorBudget(SIMULATION_COUNT, 1000))
    n_initial_particles: int = 1000
    reinvigoration_divisor: int = REINVIGORATION_DIVISOR
    seed: int = 0

    def __post_init__(self):
        if self.ucb_c < 0:
            raise ValueError("ucb_c must be non-negative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.horizon < 1 or self.effective_horizon < 1:
            raise ValueError("horizons must be positive")
        if self.effective_horizon > self.horizon:
            raise ValueError("effective_horizon cannot exceed horizon")
        if self.n_initial_particles < 1:
            raise ValueError("need at least one initial particle")
        if self.reinvigoration_divisor < 1:
            raise ValueError("reinvigoration_divisor must be positive")


class ActionEdge:
    __slots__ = ("n", "q", "total", "children")

    def __init__(self):
        self.n = 0
        self.q = 0.0
        self.total = 0.0  # shadow sum of backed-up returns, for consistency checks
        self.children: dict[int, SearchNode] = {}


class SearchNode:
    __slots__ = ("n", "edges", "particles")

    def __init__(self, particles: list | None = None):
        self.n = 0
        self.edges: list[ActionEdge] | None = None
        self.particles: list = particles if particles is not None else []

    @property
    def expanded(self) -> bool:
        return self.edges is not None

    def expand(self, n_actions: int) -> None:
        if self.edges is None:
            self.edges = [ActionEdge() for _ in range(n_actions)]


def ucb1_select(node: SearchNode, c: float) -> int:
    """Untried actions first (lowest index), then the UCB1 maximiser with lowest-index ties."""
    edges = node.edges
    for a, edge in enumerate(edges):
        if edge.n == 0:
            return a
    log_n = math.log(node.n)
    best, best_value = 0, -math.inf
    for a, edge in enumerate(edges):
        value = edge.q + c * math.sqrt(log_n / edge.n)
        if value > best_value:
            best, best_value = a, value
    return best


def best_action(node: SearchNode) -> int:
    """Highest mean return among tried actions; ties go to more visits, then the lower index."""
    best, key = 0, None
    for a, edge in enumerate(node.edges or ()):
        if edge.n == 0:
            continue
        k = (edge.q, edge.n)
        if key is None or k > key:
            best, key = a, k
    return best


def rollout(state, depth: int, limit: int, sim, gamma: float, rng: RngStream) -> float:
    """Uniform-random policy from ``depth`` to the depth limit; returns the discounted return."""
    n_actions = sim.action_count()
    step = sim.step
    rand = rng.random
    ret, discount = 0.0, 1.0
    for _ in range(depth, limit):
        state, _, reward = step(state, int(rand() * n_actions), rng)
        ret += discount * reward
        discount *= gamma
    return ret


def simulate(state, node: SearchNode, depth: int, limit: int, sim, cfg: PlannerConfig, rng: RngStream) -> float:
    """One POMCP simulation from ``node``; ``limit`` is the depth at which returns are truncated."""
    if depth >= limit:
        return 0.0
    if node.edges is None:
        node.expand(sim.action_count())
        return rollout(state, depth, limit, sim, cfg.gamma, rng)
    a = ucb1_select(node, cfg.ucb_c)
    next_state, obs, reward = sim.step(state, a, rng)
    edge = node.edges[a]
    child = edge.children.get(obs)
    if child is None:
        child = edge.children[obs] = SearchNode()
    child.particles.append(next_state)
    ret = reward + cfg.gamma * simulate(next_state, child, depth + 1, limit, sim, cfg, rng)
    node.n += 1
    edge.n += 1
    edge.total += ret
    edge.q += (ret - edge.q) / edge.n
    return ret


def depth_limit(cfg: PlannerConfig, steps_taken: int) -> int:
    return min(cfg.effective_horizon, cfg.horizon - steps_taken)


def search(root: SearchNode, sim, cfg: PlannerConfig, rng: RngStream, steps_taken: int = 0) -> int:
    """Run simulations from ``root`` until the budget is spent; returns how many were run."""
    particles = root.particles
    if not particles:
        raise EmptyBelief("root particle pool is empty")
    root.expand(sim.action_count())
    limit = depth_limit(cfg, steps_taken)
    n_particles = len(particles)
    budget = cfg.budget
    count = 0
    if budget.kind == SIMULATION_COUNT:
        for _ in range(int(budget.amount)):
            state = particles[int(rng.random() * n_particles)]
            simulate(state, root, 0, limit, sim, cfg, rng)
        return int(budget.amount)
    deadline = time.perf_counter() + budget.amount
    while True:
        state = particles[int(rng.random() * n_particles)]
        simulate(state, root, 0, limit, sim, cfg, rng)
        count += 1
        if time.perf_counter() >= deadline:
            return count


def plan(root: SearchNode, sim, cfg: PlannerConfig, rng: RngStream, steps_taken: int = 0) -> int:
    search(root, sim, cfg, rng, steps_taken)
    return best_action(root)


def observe(root: SearchNode, action: int, observation: int, b0_sampler: Callable[[RngStream], Any],
            cfg: PlannerConfig, rng: RngStream) -> SearchNode:
    """Prune to the child reached by (action, observation) and top up its pool from b0.

    Raises :class:`ParticleDepletion` when no particle survives.
    """
    if root.edges is None or not 0 <= action < len(root.edges):
        raise ValueError(f"action {action} has no edge at the root")
    child = root.edges[action].children.get(observation)
    if child is None:
        child = SearchNode()
    n = len(child.particles)
    for _ in range(n // cfg.reinvigoration_divisor):
        child.particles.append(b0_sampler(rng))
    if not child.particles:
        raise ParticleDepletion(f"no particles left after action {action}, observation {observation}")
    return child


def initial_root(sim, cfg: PlannerConfig, rng: RngStream) -> SearchNode:
    return SearchNode([sim.sample_initial(rng) for _ in range(cfg.n_initial_particles)])


class Pomcp:
    """Stateful wrapper for the online loop: plan, execute, observe."""

    def __init__(self, sim, cfg: PlannerConfig, rng: RngStream):
        self.sim = sim
        self.cfg = cfg
        self.rng = rng
        self.root = initial_root(sim, cfg, rng)
        self.steps_taken = 0
        self.last_simulations = 0

    def plan(self) -> int:
        self.last_simulations = search(self.root, self.sim, self.cfg, self.rng, self.steps_taken)
        return best_action(self.root)

    def observe(self, action: int, observation: int) -> None:
        self.root = observe(self.root, action, observation, self.sim.sample_initial, self.cfg, self.rng)
        self.steps_taken += 1


def check_counts(node: SearchNode, tol: float = 1e-9) -> None:
    """Assert N(h) = sum_a N(h,a) and Q = shadow mean everywhere below ``node``."""
    if node.edges is None:
        return
    if node.n != sum(e.n for e in node.edges):
        raise AssertionError(f"visit count {node.n} != sum of edge counts")
    for edge in node.edges:
        if edge.n and abs(edge.q - edge.total / edge.n) > tol * max(1.0, abs(edge.q)):
            raise AssertionError("edge value drifted from the mean of its returns")
        for child in edge.children.values():
            check_counts(child, tol)
