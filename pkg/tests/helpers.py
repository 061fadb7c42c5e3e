"""Utilities shared by the unit and acceptance tests."""
from __future__ import annotations

import numpy as np

from iaplan.core import RngStream
from iaplan.domains.gac import GacGlobalSimulator
from iaplan.influence import init_predictor, loss_and_grads, sequence_loss


class ScriptedRng:
    """Stands in for an RngStream and returns a fixed sequence of uniforms."""

    def __init__(self, draws):
        self.draws = list(draws)
        self.used = 0

    def random(self):
        value = self.draws[self.used]
        self.used += 1
        return value


def replay_mismatches(domain, n_episodes: int, seed: int) -> int:
    """Run global episodes, replay the centre/planning agent through the local simulator.

    The local simulator gets the extracted influence sources and the same
    random stream position the global step started from. Returns the number of
    steps at which (local state, observation, reward) differ.
    """
    sim, local = domain.global_sim, domain.local_sim
    mismatches = 0
    for e in range(n_episodes):
        env_rng = RngStream(seed, (e, 0))
        act_rng = RngStream(seed, (e, 1))
        state = sim.sample_initial(env_rng)
        x = sim.local_state(state)
        for _ in range(domain.horizon):
            action = int(act_rng.random() * sim.action_count())
            snap = env_rng.snapshot()
            result, sources = sim.step_with_sources(state, action, env_rng)
            replay_rng = RngStream(0).restore(snap)
            x_next, obs, reward = local.step(x, sources, action, replay_rng)
            state = result.next_state
            expected = sim.local_state(state)
            if (x_next, obs, reward) != (expected, result.observation, result.reward):
                mismatches += 1
            x = expected
    return mismatches


def rejection_table(cfg, history, n_draws: int, seed: int):
    """Monte Carlo estimate of P(contest_left, contest_right | local history).

    Episodes are simulated with the real global simulator using the history's
    actions; an episode is kept when the planning agent's obtained bits match
    the history, and the contest bits of the following step are tallied.
    Returns (2x2 table of frequencies, number of accepted draws).
    """
    sim = GacGlobalSimulator(cfg)
    rng = RngStream(seed)
    counts = np.zeros((2, 2))
    start = sim.sample_initial(rng)
    for _ in range(n_draws):
        state = start
        for action, x in history:
            state = sim.transition(state, action, rng)[0].next_state
            if state.obtained[0] != x:
                break
        else:
            _, src = sim.step_with_sources(state, 0, rng)
            counts[src[0], src[1]] += 1
    accepted = int(counts.sum())
    return counts / max(accepted, 1), accepted


def random_rnn_instance(cell, head, spec, seed, steps=3, batch=2, width=4, hidden=3):
    """A predictor with random parameters plus random inputs and targets."""
    rng = np.random.default_rng(seed)
    pred = init_predictor(cell, width, hidden, spec, head, rng)
    for name in pred.params:
        pred.params[name] = rng.normal(size=pred.params[name].shape)
    inputs = rng.normal(size=(batch, steps, width))
    targets = np.stack([rng.integers(0, k, size=(batch, steps)) for k in spec], axis=-1)
    return pred, inputs, targets


def max_gradient_error(pred, inputs, targets, eps=1e-5):
    """Largest relative error between analytic and central-difference gradients."""
    _, grads = loss_and_grads(pred, inputs, targets)
    worst = 0.0
    for name, value in pred.params.items():
        for idx in np.ndindex(value.shape):
            old = value[idx]
            value[idx] = old + eps
            up = sequence_loss(pred, inputs, targets)
            value[idx] = old - eps
            down = sequence_loss(pred, inputs, targets)
            value[idx] = old
            numeric = (up - down) / (2 * eps)
            scale = max(abs(numeric), abs(grads[name][idx]), 1e-7)
            worst = max(worst, abs(numeric - grads[name][idx]) / scale)
    return worst
