"""Tiny table-defined problems with known optimal behaviour, used to check the planner."""
from __future__ import annotations

from typing import NamedTuple, Sequence

from iaplan.core import RngStream, StepResult


class BanditSimulator:
    """One-step problem: action ``a`` always pays ``payoffs[a]``; a single observation."""

    def __init__(self, payoffs: Sequence[float] = (1.0, 0.0)):
        self.payoffs = tuple(float(v) for v in payoffs)

    def action_count(self) -> int:
        return len(self.payoffs)

    def sample_initial(self, rng: RngStream) -> int:
        return 0

    def clone_state(self, state):
        return state

    def step(self, state, action: int, rng: RngStream) -> StepResult:
        return StepResult(state, 0, self.payoffs[action])


class BernoulliBandit(BanditSimulator):
    """One-step problem where action ``a`` pays 1 with probability ``means[a]``."""

    def step(self, state, action: int, rng: RngStream) -> StepResult:
        return StepResult(state, 0, 1.0 if rng.random() < self.payoffs[action] else 0.0)


class TableState(NamedTuple):
    t: int
    s: int


class TablePomdp:
    """Finite-horizon POMDP with a static hidden state and time-indexed tables.

    ``reward[t][s][a]`` and ``obs_prob[t][a][s][o]`` fully define the problem;
    the hidden state is drawn once from ``b0`` and never changes.
    """

    def __init__(self, b0, reward, obs_prob):
        self.b0 = tuple(b0)
        self.reward = reward
        self.obs_prob = obs_prob
        self.horizon = len(reward)
        self.n_states = len(self.b0)
        self.n_actions = len(reward[0][0])
        self.n_obs = len(obs_prob[0][0][0])

    def action_count(self) -> int:
        return self.n_actions

    def sample_initial(self, rng: RngStream) -> TableState:
        return TableState(0, _draw(self.b0, rng.random()))

    def clone_state(self, state):
        return state

    def step(self, state: TableState, action: int, rng: RngStream) -> StepResult:
        t, s = state
        obs = _draw(self.obs_prob[t][action][s], rng.random())
        return StepResult(TableState(t + 1, s), obs, self.reward[t][s][action])

    def expectimax(self) -> tuple[int, list[float]]:
        """Exact optimal root action and per-action values by enumerating beliefs."""
        values = [self._q(list(self.b0), 0, a) for a in range(self.n_actions)]
        best = max(range(self.n_actions), key=lambda a: (values[a], -a))
        return best, values

    def _v(self, belief, t):
        if t >= self.horizon:
            return 0.0
        return max(self._q(belief, t, a) for a in range(self.n_actions))

    def _q(self, belief, t, a):
        value = sum(b * self.reward[t][s][a] for s, b in enumerate(belief))
        for o in range(self.n_obs):
            joint = [b * self.obs_prob[t][a][s][o] for s, b in enumerate(belief)]
            p_o = sum(joint)
            if p_o > 0:
                value += p_o * self._v([j / p_o for j in joint], t + 1)
        return value


def _draw(probs, u: float) -> int:
    acc = 0.0
    for k, p in enumerate(probs):
        acc += p
        if u < acc:
            return k
    return len(probs) - 1


def listen_or_guess(prior_one: float = 0.6, accuracy: float = 0.8, listen_cost: float = 0.0) -> TablePomdp:
    """Two steps, two actions, two observations.

    Step 0: action 0 listens (noisy reading of the hidden bit, optional cost),
    action 1 guesses "1" (±1 payoff, uninformative observation). Step 1: action
    ``a`` guesses ``a``. With the defaults listening first is optimal (0.6 vs 0.4).
    """
    b0 = (1.0 - prior_one, prior_one)
    guess = [[1.0, -1.0], [-1.0, 1.0]]  # guess[s][a]: +1 when a == s
    reward = [
        [[-listen_cost, guess[s][1]] for s in range(2)],
        [guess[s] for s in range(2)],
    ]
    noisy = [[accuracy, 1.0 - accuracy], [1.0 - accuracy, accuracy]]
    flat = [[0.5, 0.5], [0.5, 0.5]]
    obs_prob = [
        [noisy, flat],
        [flat, flat],
    ]
    return TablePomdp(b0, reward, obs_prob)
