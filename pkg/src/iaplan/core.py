"""Shared contracts: seeded random streams, step results, budgets and returns."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Hashable, NamedTuple, Protocol, Sequence

import numpy as np

ActionId = int
ObservationId = int

SIMULATION_COUNT = "simulation_count"
WALL_CLOCK_SECONDS = "wall_clock_seconds"


class RngStream(random.Random):
    """A reproducible random stream identified by ``(seed, path)``.

    The generator is CPython's Mersenne Twister, seeded with 128 bits drawn
    from ``numpy.random.SeedSequence(seed, spawn_key=path)``. Forking only
    depends on the identity of the parent, never on how far it has been
    consumed, so children can be created in any order. The draw position is
    the generator's internal state; see :meth:`snapshot`.
    """

    def __new__(cls, *args, **kwargs):
        # the C base class only accepts a single seed argument
        return super().__new__(cls)

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.root_seed = int(seed)
        self.path = tuple(int(i) for i in path)
        words = np.random.SeedSequence(self.root_seed, spawn_key=self.path).generate_state(4)
        super().__init__(int.from_bytes(words.tobytes(), "little"))

    def fork(self, child_index: int) -> "RngStream":
        return rng_fork(self, child_index)

    def snapshot(self) -> tuple:
        return self.getstate()

    def restore(self, snap: tuple) -> "RngStream":
        self.setstate(snap)
        return self

    def copy(self) -> "RngStream":
        twin = RngStream.__new__(RngStream)
        twin.root_seed = self.root_seed
        twin.path = self.path
        random.Random.__init__(twin, 0)
        twin.setstate(self.getstate())
        return twin

    def __reduce__(self):
        return (_rebuild_stream, (self.root_seed, self.path, self.getstate()))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.root_seed}, path={self.path})"


def _rebuild_stream(seed: int, path: tuple[int, ...], state: tuple) -> RngStream:
    stream = RngStream(seed, path)
    stream.setstate(state)
    return stream


def rng_fork(parent: RngStream, child_index: int) -> RngStream:
    """Child stream, a deterministic function of the parent's identity and ``child_index``."""
    if child_index < 0:
        raise ValueError("child_index must be >= 0")
    return RngStream(parent.root_seed, parent.path + (child_index,))


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    total = 0.0
    weight = 1.0
    for r in rewards:
        total += weight * r
        weight *= gamma
    return total


class StepResult(NamedTuple):
    next_state: Any
    observation: ObservationId
    reward: float


@dataclass(frozen=True)
class SimulatorBudget:
    kind: str
    amount: float

    def __post_init__(self):
        if self.kind not in (SIMULATION_COUNT, WALL_CLOCK_SECONDS):
            raise ValueError(f"unknown budget kind {self.kind!r}")
        if not self.amount > 0:
            raise ValueError("budget amount must be positive")
        if self.kind == SIMULATION_COUNT and int(self.amount) != self.amount:
            raise ValueError("simulation_count budgets must be whole numbers")


@dataclass
class History:
    """Action-observation pairs since the start of an episode."""

    horizon: int
    steps: list[tuple[ActionId, ObservationId]] = field(default_factory=list)

    def append(self, action: ActionId, observation: ObservationId) -> None:
        if len(self.steps) >= self.horizon:
            raise ValueError("history already spans the full horizon")
        self.steps.append((action, observation))

    def __len__(self) -> int:
        return len(self.steps)


class GenerativeSimulator(Protocol):
    """What the planner needs from a simulator. States are treated as opaque values."""

    def sample_initial(self, rng: RngStream) -> Any: ...

    def step(self, state: Any, action: ActionId, rng: RngStream) -> StepResult: ...

    def action_count(self) -> int: ...

    def clone_state(self, state: Any) -> Any: ...


class InfluencePredictor(Protocol):
    """Conditional distribution over influence sources given the local history.

    ``z`` summarises the history; it must be treated as an immutable value.
    """

    def initial_hidden(self) -> Hashable | Any: ...

    def forward(self, z: Any, action: ActionId, local_state: Any) -> tuple[Any, Any]: ...

    def sample(self, dist: Any, rng: RngStream) -> tuple[int, ...]: ...
