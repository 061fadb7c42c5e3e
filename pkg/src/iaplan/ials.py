"""Influence-augmented local simulator: an exact local simulator plus an influence predictor."""
from __future__ import annotations

from typing import Any, Callable, NamedTuple

from iaplan.core import RngStream, StepResult


class IalsState(NamedTuple):
    x: Any
    y_src: tuple[int, ...]
    z: Any


class IalsSimulator:
    """Generative simulator over (local state, influence sources, predictor hidden state).

    A transition first steps the local simulator with the current sources, then
    feeds (action, next local state) to the predictor and samples the next
    sources from its output.
    """

    def __init__(self, local_sim, predictor, initial_sampler: Callable[[RngStream], tuple[Any, tuple]]):
        self.local_sim = local_sim
        self.predictor = predictor
        self.initial_sampler = initial_sampler
        self._n_actions = local_sim.action_count()

    def action_count(self) -> int:
        return self._n_actions

    def sample_initial(self, rng: RngStream) -> IalsState:
        x0, y0 = self.initial_sampler(rng)
        return IalsState(x0, tuple(y0), self.predictor.initial_hidden())

    def clone_state(self, state: IalsState) -> IalsState:
        return state

    def step(self, state: IalsState, action: int, rng: RngStream) -> StepResult:
        x, obs, reward = self.local_sim.step(state.x, state.y_src, action, rng)
        predictor = self.predictor
        z, dist = predictor.forward(state.z, action, x)
        return StepResult(IalsState(x, predictor.sample(dist, rng), z), obs, reward)


def ials_sample_initial(sim: IalsSimulator, rng: RngStream) -> IalsState:
    return sim.sample_initial(rng)


def ials_step(sim: IalsSimulator, state: IalsState, action: int, rng: RngStream) -> StepResult:
    return sim.step(state, action, rng)


def make_ials(domain, predictor) -> IalsSimulator:
    if domain.local_sim is None:
        raise ValueError(f"{domain.name} configuration has no local simulator")
    return IalsSimulator(domain.local_sim, predictor, domain.sample_initial_local)
