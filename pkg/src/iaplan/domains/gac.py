"""Grab A Chair: N agents on a ring, each grabbing the chair to its left or right.

Agent ``i`` sits between chair ``i`` (its left chair) and chair ``(i + 1) % N``
(its right chair). Agent 0 is the planning agent; every other agent follows a
random-then-greedy policy driven by its own (noisy) success statistics.

Random draws are ordered so that the planning agent's two draws (contest
outcome, observation flip) always come first in a global step. The local
simulator consumes the same two draws, which makes the global and local
simulators agree step for step when they share a random stream snapshot.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from iaplan.core import RngStream, StepResult

LEFT = 0
RIGHT = 1
ACTION_NAMES = ("L", "R")

SOURCE_SPEC = (2, 2)
INPUT_WIDTH = 3


@dataclass(frozen=True)
class GacConfig:
    n_agents: int = 5
    p: float = 0.0
    obs_flip_prob: float = 0.2
    horizon: int = 10

    def __post_init__(self):
        if self.n_agents < 3:
            raise ValueError("Grab A Chair needs at least 3 agents")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if not 0.0 <= self.obs_flip_prob <= 1.0:
            raise ValueError("obs_flip_prob must lie in [0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")


class GacGlobalState(NamedTuple):
    obtained: tuple[int, ...]
    # (v_L, w_L, v_R, w_R) per agent, flattened; agent 0's entries stay zero.
    counts: tuple[int, ...]
    t: int


class GacInfluenceSource(NamedTuple):
    contest_left: int
    contest_right: int


# The local state X is the planning agent's obtained bit, a plain int.
GacLocalState = int


def initial_state(n_agents: int) -> GacGlobalState:
    return GacGlobalState((0,) * n_agents, (0,) * (4 * n_agents), 0)


def is_contested(actions: Sequence[int], i: int) -> bool:
    n = len(actions)
    if actions[i] == LEFT:
        return actions[i - 1] == RIGHT
    return actions[(i + 1) % n] == LEFT


def gac_resolve(actions: Sequence[int], p: float, rng: RngStream) -> tuple[int, ...]:
    """Chair outcomes for a joint action; contestants each win with probability ``p``."""
    out = []
    for i in range(len(actions)):
        if is_contested(actions, i):
            out.append(1 if rng.random() < p else 0)
        else:
            out.append(1)
    return tuple(out)


def gac_observe(obtained: int, flip_prob: float, rng: RngStream) -> int:
    return obtained ^ 1 if rng.random() < flip_prob else obtained


def left_probability(counts: Sequence[int]) -> float:
    """Probability that a non-planning agent picks its left chair: 0, 0.5 or 1."""
    vl, wl, vr, wr = counts
    if vl == 0 or vr == 0:
        return 0.5
    # compare wl/vl with wr/vr without division
    diff = wl * vr - wr * vl
    if diff > 0:
        return 1.0
    if diff < 0:
        return 0.0
    return 0.5


def other_agent_act(counts: Sequence[int], rng: RngStream) -> int:
    prob = left_probability(counts)
    if prob == 0.5:
        return LEFT if rng.random() < 0.5 else RIGHT
    return LEFT if prob == 1.0 else RIGHT


def gac_extract_sources(state: GacGlobalState, actions: Sequence[int]) -> GacInfluenceSource:
    """Contest bits of the planning agent given the joint action used at this step."""
    return GacInfluenceSource(int(actions[-1] == RIGHT), int(actions[1] == LEFT))


class GacGlobalSimulator:
    """Simulates all N agents."""

    def __init__(self, cfg: GacConfig):
        self.cfg = cfg
        self.n = cfg.n_agents

    def action_count(self) -> int:
        return 2

    def sample_initial(self, rng: RngStream) -> GacGlobalState:
        return initial_state(self.n)

    def clone_state(self, state: GacGlobalState) -> GacGlobalState:
        return state

    def local_state(self, state: GacGlobalState) -> int:
        return state.obtained[0]

    def step(self, state: GacGlobalState, action: int, rng: RngStream) -> StepResult:
        result, _ = self.transition(state, action, rng)
        return result

    def step_with_sources(self, state, action, rng):
        result, actions = self.transition(state, action, rng)
        return result, gac_extract_sources(state, actions)

    def transition(self, state: GacGlobalState, action: int, rng: RngStream):
        """One step; returns the step result and the joint action that produced it."""
        n = self.n
        p = self.cfg.p
        flip = self.cfg.obs_flip_prob
        rand = rng.random
        u_contest = rand()
        u_flip = rand()

        counts = state.counts
        actions = [action] * n
        for i in range(1, n):
            j = 4 * i
            vl = counts[j]
            vr = counts[j + 2]
            if vl and vr:
                diff = counts[j + 1] * vr - counts[j + 3] * vl
                if diff > 0:
                    actions[i] = LEFT
                elif diff < 0:
                    actions[i] = RIGHT
                else:
                    actions[i] = LEFT if rand() < 0.5 else RIGHT
            else:
                actions[i] = LEFT if rand() < 0.5 else RIGHT

        if action == LEFT:
            contested = actions[n - 1] == RIGHT
        else:
            contested = actions[1] == LEFT
        x = (1 if u_contest < p else 0) if contested else 1
        obs = x ^ 1 if u_flip < flip else x

        obtained = [x] * n
        new_counts = list(counts)
        last = n - 1
        for i in range(1, n):
            a = actions[i]
            if a == LEFT:
                contested = actions[i - 1] == RIGHT
            else:
                contested = actions[i + 1 if i < last else 0] == LEFT
            got = (1 if rand() < p else 0) if contested else 1
            seen = got ^ 1 if rand() < flip else got
            j = 4 * i + 2 * a
            new_counts[j] += 1
            new_counts[j + 1] += seen
            obtained[i] = got

        next_state = GacGlobalState(tuple(obtained), tuple(new_counts), state.t + 1)
        return StepResult(next_state, obs, float(x)), actions


class GacLocalSimulator:
    """The planning agent's chair, driven by given neighbour contest bits."""

    def __init__(self, cfg: GacConfig):
        self.cfg = cfg

    def action_count(self) -> int:
        return 2

    def step(self, x: int, y: Sequence[int], action: int, rng: RngStream):
        rand = rng.random
        u_contest = rand()
        u_flip = rand()
        contested = y[0] if action == LEFT else y[1]
        x_next = (1 if u_contest < self.cfg.p else 0) if contested else 1
        obs = x_next ^ 1 if u_flip < self.cfg.obs_flip_prob else x_next
        return x_next, obs, float(x_next)


def gac_local_step(x: int, y: Sequence[int], a: int, cfg: GacConfig, rng: RngStream):
    return GacLocalSimulator(cfg).step(x, y, a, rng)


def sample_initial_local(cfg: GacConfig, rng: RngStream) -> tuple[int, GacInfluenceSource]:
    """(x_0, y_0) from the initial global state and the neighbours' t=0 policy."""
    state = initial_state(cfg.n_agents)
    n = cfg.n_agents
    left = other_agent_act(state.counts[4 * (n - 1):4 * n], rng)
    right = other_agent_act(state.counts[4:8], rng)
    return state.obtained[0], GacInfluenceSource(int(left == RIGHT), int(right == LEFT))


_INPUTS = {
    (a, x): np.array([a == LEFT, a == RIGHT, x], dtype=float) for a in (LEFT, RIGHT) for x in (0, 1)
}


def encode_input(action: int, x: int) -> np.ndarray:
    """Predictor input for (a_{t-1}, x_t): one-hot action followed by the obtained bit."""
    return _INPUTS[action, x]
