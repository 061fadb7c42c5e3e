import math
import pickle

import pytest
from hypothesis import given, strategies as st

from iaplan.core import (SIMULATION_COUNT, WALL_CLOCK_SECONDS, History, RngStream, SimulatorBudget,
                         discounted_return, rng_fork)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


def test_discounted_return_examples():
    assert discounted_return([], 0.95) == 0.0
    assert discounted_return([1, 1, 1], 1.0) == 3.0
    assert discounted_return([1, 1, 1], 0.95) == pytest.approx(1 + 0.95 + 0.95 ** 2)
    assert discounted_return([1, 1, 1], 0.95) == pytest.approx(2.8525, abs=1e-12)


def test_discounted_return_rejects_bad_gamma():
    with pytest.raises(ValueError):
        discounted_return([1.0], 1.5)


@given(st.lists(finite, max_size=40))
def test_undiscounted_equals_sum(rewards):
    assert discounted_return(rewards, 1.0) == pytest.approx(math.fsum(rewards), rel=1e-9, abs=1e-6)


@given(st.lists(finite, max_size=30), st.floats(min_value=-100, max_value=100), st.floats(min_value=0, max_value=1))
def test_discounted_return_is_linear(rewards, alpha, gamma):
    scaled = discounted_return([alpha * r for r in rewards], gamma)
    assert scaled == pytest.approx(alpha * discounted_return(rewards, gamma), rel=1e-9, abs=1e-3)


def _draws(stream, n=1000):
    return [stream.random() for _ in range(n)]


def test_fork_is_deterministic():
    assert _draws(rng_fork(RngStream(7), 0)) == _draws(rng_fork(RngStream(7), 0))


def test_forks_with_different_indices_differ():
    assert _draws(rng_fork(RngStream(7), 0)) != _draws(rng_fork(RngStream(7), 1))


def test_forks_with_different_seeds_differ():
    assert _draws(rng_fork(RngStream(7), 0)) != _draws(rng_fork(RngStream(8), 0))


def test_fork_ignores_parent_consumption():
    parent = RngStream(3)
    before = _draws(parent.fork(2), 10)
    _draws(parent, 50)
    assert _draws(parent.fork(2), 10) == before


def test_fork_rejects_negative_index():
    with pytest.raises(ValueError):
        rng_fork(RngStream(1), -1)


def test_snapshot_restore_and_pickle():
    stream = RngStream(5, (1, 2))
    snap = stream.snapshot()
    first = _draws(stream, 20)
    assert _draws(stream.restore(snap), 20) == first
    clone = pickle.loads(pickle.dumps(stream))
    assert _draws(clone, 20) == _draws(stream, 20)
    assert clone.path == (1, 2) and clone.root_seed == 5


def test_copy_is_independent():
    stream = RngStream(9)
    twin = stream.copy()
    assert _draws(stream, 5) == _draws(twin, 5)


def test_budget_validation():
    SimulatorBudget(SIMULATION_COUNT, 1000)
    SimulatorBudget(WALL_CLOCK_SECONDS, 0.25)
    with pytest.raises(ValueError):
        SimulatorBudget(SIMULATION_COUNT, 0)
    with pytest.raises(ValueError):
        SimulatorBudget("flops", 1)
    with pytest.raises(ValueError):
        SimulatorBudget(SIMULATION_COUNT, 2.5)


def test_history_respects_horizon():
    history = History(horizon=2)
    history.append(0, 1)
    history.append(1, 0)
    assert len(history) == 2
    with pytest.raises(ValueError):
        history.append(0, 0)
