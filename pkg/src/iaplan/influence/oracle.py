"""Exact influence for small Grab A Chair games by forward enumeration.

The non-local state that matters for the future is the tuple of other agents'
(v_L, w_L, v_R, w_R) counts. Given a local history of (action, obtained bit)
pairs we keep the exact posterior over that tuple: every joint action of the
other agents, every chair outcome and every observation flip is enumerated and
weighted, and branches inconsistent with the planning agent's obtained bit
are dropped. The influence distribution is the posterior predictive of the two
neighbours' next decisions.
"""
from __future__ import annotations

import itertools
from collections import defaultdict

import numpy as np

from iaplan.core import RngStream
from iaplan.domains.gac import LEFT, RIGHT, GacConfig, is_contested, left_probability

MAX_AGENTS = 5
MAX_HORIZON = 6

LocalHistory = tuple[tuple[int, int], ...]


class ExactGacInfluence:
    """Exact P(contest_left, contest_right | local history) as a 2x2 table.

    Also usable as an influence predictor: the "hidden state" is the local
    history itself, so an IALS built on it is the lossless local model.
    """

    def __init__(self, cfg: GacConfig, max_agents: int = MAX_AGENTS, max_horizon: int = MAX_HORIZON):
        if cfg.n_agents > max_agents:
            raise ValueError(f"exact influence is limited to {max_agents} agents, got {cfg.n_agents}")
        if cfg.horizon > max_horizon:
            raise ValueError(f"exact influence is limited to horizon {max_horizon}, got {cfg.horizon}")
        self.cfg = cfg
        self.n = cfg.n_agents
        self._beliefs: dict[LocalHistory, dict[tuple, float]] = {(): {(0,) * (4 * (self.n - 1)): 1.0}}
        self._tables: dict[LocalHistory, tuple[float, float, float, float]] = {}

    def belief(self, history: LocalHistory) -> dict[tuple, float]:
        """Posterior over other agents' counts (agents 1..N-1, flattened)."""
        history = tuple(tuple(step) for step in history)
        if history in self._beliefs:
            return self._beliefs[history]
        if len(history) > self.cfg.horizon:
            raise ValueError("history longer than the configured horizon")
        prior = self.belief(history[:-1])
        action, x = history[-1]
        post = self._update(prior, action, x)
        self._beliefs[history] = post
        return post

    def _update(self, prior: dict[tuple, float], action: int, x: int) -> dict[tuple, float]:
        n, p, flip = self.n, self.cfg.p, self.cfg.obs_flip_prob
        post: dict[tuple, float] = defaultdict(float)
        for counts, weight in prior.items():
            choices = []
            for i in range(n - 1):
                pl = left_probability(counts[4 * i:4 * i + 4])
                choices.append([(side, prob) for side, prob in ((LEFT, pl), (RIGHT, 1.0 - pl)) if prob > 0])
            for profile in itertools.product(*choices):
                actions = (action,) + tuple(side for side, _ in profile)
                w = weight
                for _, prob in profile:
                    w *= prob
                if is_contested(actions, 0):
                    w *= p if x == 1 else 1.0 - p
                elif x == 0:
                    w = 0.0
                if w == 0.0:
                    continue
                # per-agent distribution of the observed bit, then count updates
                branches = []
                for i in range(1, n):
                    got = p if is_contested(actions, i) else 1.0
                    seen_one = got * (1.0 - flip) + (1.0 - got) * flip
                    branches.append(((1, seen_one), (0, 1.0 - seen_one)))
                for seen in itertools.product(*branches):
                    ws = w
                    new = list(counts)
                    for i, (bit, prob) in enumerate(seen):
                        ws *= prob
                        j = 4 * i + 2 * actions[i + 1]
                        new[j] += 1
                        new[j + 1] += bit
                    if ws > 0.0:
                        post[tuple(new)] += ws
        total = sum(post.values())
        if total == 0.0:
            raise ValueError("local history has probability zero")
        return {k: v / total for k, v in post.items()}

    def table(self, history: LocalHistory) -> np.ndarray:
        """P[contest_left, contest_right] for the step after ``history``."""
        return np.array(self._flat(tuple(tuple(step) for step in history))).reshape(2, 2)

    def _flat(self, history: LocalHistory) -> tuple[float, float, float, float]:
        flat = self._tables.get(history)
        if flat is None:
            p00 = p01 = p10 = p11 = 0.0
            last = 4 * (self.n - 2)
            for counts, weight in self.belief(history).items():
                # left neighbour is agent N-1 (contests when it goes right),
                # right neighbour is agent 1 (contests when it goes left)
                no_left = left_probability(counts[last:last + 4])
                yes_right = left_probability(counts[0:4])
                p00 += weight * no_left * (1.0 - yes_right)
                p01 += weight * no_left * yes_right
                p10 += weight * (1.0 - no_left) * (1.0 - yes_right)
                p11 += weight * (1.0 - no_left) * yes_right
            flat = self._tables[history] = (p00, p01, p10, p11)
        return flat

    # influence-predictor interface
    def initial_hidden(self) -> LocalHistory:
        return ()

    def forward(self, z: LocalHistory, action: int, local_state: int):
        z_next = z + ((action, local_state),)
        return z_next, self._flat(z_next)

    def sample(self, dist, rng: RngStream) -> tuple[int, int]:
        """``dist`` is the flattened table (P00, P01, P10, P11) returned by :meth:`forward`."""
        u = rng.random()
        acc = 0.0
        for k, (cl, cr) in enumerate(_OUTCOMES):
            acc += dist[k]
            if u < acc:
                return cl, cr
        return 1, 1


_OUTCOMES = ((0, 0), (0, 1), (1, 0), (1, 1))


def exact_influence_gac(cfg: GacConfig, history: LocalHistory) -> np.ndarray:
    return ExactGacInfluence(cfg).table(history)


def reachable_histories(cfg: GacConfig, length: int, oracle: ExactGacInfluence | None = None):
    """All local histories of the given length with non-zero probability."""
    oracle = oracle or ExactGacInfluence(cfg)
    out = []
    for steps in itertools.product(itertools.product((LEFT, RIGHT), (0, 1)), repeat=length):
        try:
            oracle.belief(steps)
        except ValueError:
            continue
        out.append(steps)
    return out
