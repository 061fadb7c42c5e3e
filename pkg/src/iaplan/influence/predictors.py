"""Influence predictors usable inside an influence-augmented local simulator.

All predictors share one duck-typed interface: ``initial_hidden()``,
``forward(z, action, local_state) -> (z', dist)`` and ``sample(dist, rng)``.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from numba import njit

from iaplan.core import RngStream
from iaplan.influence.rnn import RnnPredictor


@njit(cache=True)
def _affine(W, x, b):
    out = b.copy()
    for i in range(W.shape[0]):
        acc = 0.0
        for j in range(W.shape[1]):
            acc += W[i, j] * x[j]
        out[i] += acc
    return out


@njit(cache=True)
def _gru_step(z, x, W, U, b, W_out, b_out):
    # W, U, b stack the reset, update and candidate blocks in that order
    h = z.shape[0]
    pre = _affine(W, x, b)
    r = np.empty(h)
    u = np.empty(h)
    for i in range(h):
        a_r = pre[i]
        a_u = pre[h + i]
        for j in range(h):
            a_r += U[i, j] * z[j]
            a_u += U[h + i, j] * z[j]
        r[i] = 1.0 / (1.0 + math.exp(-a_r))
        u[i] = 1.0 / (1.0 + math.exp(-a_u))
    z_next = np.empty(h)
    for i in range(h):
        a_h = pre[2 * h + i]
        for j in range(h):
            a_h += U[2 * h + i, j] * r[j] * z[j]
        z_next[i] = u[i] * z[i] + (1.0 - u[i]) * math.tanh(a_h)
    return z_next, _affine(W_out, z_next, b_out)


@njit(cache=True)
def _elman_step(z, x, W, U, b, W_out, b_out):
    pre = _affine(W, x, b)
    z_next = np.empty(z.shape[0])
    for i in range(z.shape[0]):
        acc = pre[i]
        for j in range(z.shape[0]):
            acc += U[i, j] * z[j]
        z_next[i] = math.tanh(acc)
    return z_next, _affine(W_out, z_next, b_out)


def _bernoulli_probs(logits: np.ndarray) -> list[float]:
    return [1.0 / (1.0 + math.exp(-v)) for v in logits.tolist()]


class LearnedInfluence:
    """Wraps a trained :class:`RnnPredictor` and the domain's input encoder.

    ``dist`` is a list of P(y_i = 1) for Bernoulli heads, or a list of
    per-variable probability lists for softmax heads.
    """

    def __init__(self, model: RnnPredictor, encode_input: Callable):
        self.model = model
        self.encode_input = encode_input
        p = model.params
        if model.cell_kind == "gru":
            self._kernel = _gru_step
            names = [("W_r", "W_u", "W_h"), ("U_r", "U_u", "U_h"), ("b_r", "b_u", "b_h")]
            self._weights = tuple(np.ascontiguousarray(np.concatenate([p[n] for n in group])) for group in names)
        else:
            self._kernel = _elman_step
            self._weights = tuple(np.ascontiguousarray(p[n]) for n in ("W", "U", "b"))
        self._weights += (np.ascontiguousarray(p["W_out"]), np.ascontiguousarray(p["b_out"]))
        self._bernoulli = model.head_kind == "bernoulli"
        self._offsets = model.group_offsets.tolist()
        self.source_spec = model.source_spec

    def initial_hidden(self) -> np.ndarray:
        return np.zeros(self.model.hidden_width)

    def forward(self, z: np.ndarray, action: int, local_state):
        x = self.encode_input(action, local_state)
        z_next, logits = self._kernel(z, x, *self._weights)
        if self._bernoulli:
            return z_next, _bernoulli_probs(logits)
        dists = []
        values = logits.tolist()
        for i in range(len(self.source_spec)):
            group = values[self._offsets[i]:self._offsets[i + 1]]
            m = max(group)
            e = [math.exp(v - m) for v in group]
            s = sum(e)
            dists.append([v / s for v in e])
        return z_next, dists

    def sample(self, dist, rng: RngStream) -> tuple[int, ...]:
        rand = rng.random
        if self._bernoulli:
            return tuple(1 if rand() < p else 0 for p in dist)
        return tuple(_categorical(probs, rand()) for probs in dist)


def _categorical(probs: Sequence[float], u: float) -> int:
    acc = 0.0
    for k, p in enumerate(probs):
        acc += p
        if u < acc:
            return k
    return len(probs) - 1


class UniformInfluence:
    """Ignores the history: every source variable is uniform over its alphabet."""

    def __init__(self, source_spec: Sequence[int]):
        self.source_spec = tuple(source_spec)
        self._dist = tuple(tuple(1.0 / k for _ in range(k)) for k in self.source_spec)

    def initial_hidden(self) -> tuple:
        return ()

    def forward(self, z, action: int, local_state):
        return z, self._dist

    def sample(self, dist, rng: RngStream) -> tuple[int, ...]:
        rand = rng.random
        return tuple(int(rand() * k) for k in self.source_spec)


def uniform_predictor(source_spec: Sequence[int]) -> UniformInfluence:
    return UniformInfluence(source_spec)
