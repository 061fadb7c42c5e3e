import pytest
from hypothesis import given, settings, strategies as st

from helpers import replay_mismatches
from iaplan.core import RngStream
from iaplan.domains import build
from iaplan.domains.gtc import (EAST_OUT, EW_GREEN, NORTH_OUT, NS_GREEN, SOUTH_IN, WEST_IN, GtcConfig,
                                GtcGlobalSimulator, GtcGlobalState, GtcLocalSimulator, Intersection, _advance,
                                advance_lane, bits_to_lane, gtc_local_step, gtc_sample_initial, gtc_sources,
                                handcoded_light, lane_to_bits, observe)

CFG = GtcConfig()
HEAD = 1 << (CFG.lane_len - 1)
FULL = (1 << CFG.lane_len) - 1


def _empty_state(cfg=CFG):
    k = cfg.rows * cfg.cols
    return GtcGlobalState((0,) * (4 * k), (EW_GREEN,) * k, 0)


def _with(state, k, lane, value):
    lanes = list(state.lanes)
    lanes[4 * k + lane] = value
    return state._replace(lanes=tuple(lanes))


def _total(state):
    return sum(lane.bit_count() for lane in state.lanes)


def test_advance_lane_examples():
    assert advance_lane([1, 1, 1, 1, 1, 1], True) == ([0, 1, 1, 1, 1, 1], 1)
    assert advance_lane([0, 0, 1, 0, 0, 0], False) == ([0, 0, 0, 1, 0, 0], 0)
    assert advance_lane([0, 0, 0, 0, 0, 1], False) == ([0, 0, 0, 0, 0, 1], 0)


def test_advance_lane_partial_jam():
    # the jammed run at the head stays, the vehicle behind the gap moves up
    assert advance_lane([1, 0, 1, 0, 1, 1], False) == ([0, 1, 0, 1, 1, 1], 0)


@given(st.integers(1, 8).flatmap(lambda n: st.tuples(st.just(n), st.lists(st.integers(0, 1), min_size=n, max_size=n))),
       st.booleans())
def test_bitmask_advance_matches_reference(sized, can_leave):
    n, bits = sized
    expected, departed = advance_lane(bits, can_leave)
    lane, left = _advance(bits_to_lane(bits), 1 << (n - 1), (1 << n) - 1, can_leave)
    assert lane_to_bits(lane, n) == expected
    assert int(left) == departed
    assert sum(expected) == sum(bits) - departed


def test_handcoded_light_examples():
    waiting = HEAD
    assert handcoded_light(Intersection(waiting, 0, 0, 0, NS_GREEN)) == EW_GREEN
    assert handcoded_light(Intersection(0, 0, 0, 0, NS_GREEN)) == NS_GREEN
    assert handcoded_light(Intersection(waiting, 1, waiting, 0, EW_GREEN)) == NS_GREEN
    assert handcoded_light(Intersection(waiting, 1, waiting, 1, EW_GREEN)) == EW_GREEN


def test_initial_occupancy_extremes():
    empty = gtc_sample_initial(GtcConfig(init_occupancy_prob=0.0), RngStream(0))
    assert _total(empty) == 0
    full = gtc_sample_initial(GtcConfig(init_occupancy_prob=1.0), RngStream(0))
    assert _total(full) == 216
    assert full.lights == (EW_GREEN,) * 9 and full.t == 0


def test_initial_occupancy_rate():
    rng = RngStream(17)
    n = 10_000
    occupied = sum(_total(gtc_sample_initial(CFG, rng)) for _ in range(n))
    assert abs(occupied / (216 * n) - 0.7) <= 0.01


def test_empty_system_gives_zero_reward():
    result = GtcGlobalSimulator(CFG).step(_empty_state(), EW_GREEN, RngStream(0))
    assert result.reward == 0.0 and result.observation == 0


def test_full_centre_gives_minus_24():
    full = gtc_sample_initial(GtcConfig(init_occupancy_prob=1.0), RngStream(0))
    result = GtcGlobalSimulator(CFG).step(full, EW_GREEN, RngStream(0))
    assert result.reward == -24.0


def test_single_vehicle_crosses_on_green():
    state = _with(_empty_state(), CFG.center, WEST_IN, HEAD)
    result = GtcGlobalSimulator(CFG).step(state, EW_GREEN, RngStream(0))
    centre = result.next_state.intersection(CFG.center)
    assert centre.west_in == 0 and centre.east_out == 1
    assert result.observation & 1 == 0 and result.observation & 4
    held = GtcGlobalSimulator(CFG).step(state, NS_GREEN, RngStream(0))
    assert held.next_state.intersection(CFG.center).west_in == HEAD


def test_local_step_examples():
    empty = Intersection(0, 0, 0, 0, EW_GREEN)
    x, obs, r = gtc_local_step(empty, (1, 1, 0, 0), EW_GREEN, CFG)
    assert r == -2.0 and x.west_in == 1 and x.south_in == 1
    full_east = Intersection(0, FULL, 0, 0, EW_GREEN)
    x, _, _ = gtc_local_step(full_east, (0, 0, 1, 0), EW_GREEN, CFG)
    assert x.east_out == FULL
    x, _, _ = gtc_local_step(full_east, (0, 0, 0, 0), EW_GREEN, CFG)
    assert x.east_out == FULL & ~1  # head leaves, the rest shift up, the rear grid empties
    lone = Intersection(0b100, 0, 0, 0, EW_GREEN)
    x, obs, r = gtc_local_step(lone, (0, 0, 0, 0), NS_GREEN, CFG)
    assert x == Intersection(0b1000, 0, 0, 0, NS_GREEN) and r == -1.0 and obs == 0


def test_transfer_into_centre_sets_arrive_west():
    west = CFG.center - 1
    state = _with(_empty_state(), west, EAST_OUT, HEAD)
    _, src = GtcGlobalSimulator(CFG).step_with_sources(state, EW_GREEN, RngStream(0))
    assert src.arrive_west == 1 and src.arrive_south == 0


def test_occupied_downstream_entrance_sets_blocked_east():
    east = CFG.center + 1
    state = _with(_empty_state(), east, WEST_IN, 1)
    _, src = GtcGlobalSimulator(CFG).step_with_sources(state, EW_GREEN, RngStream(0))
    assert src.blocked_east == 1 and src.blocked_north == 0


def test_initial_sources_extremes():
    assert gtc_sources(CFG, gtc_sample_initial(GtcConfig(init_occupancy_prob=0.0), RngStream(0))) == (0, 0, 0, 0)
    src = gtc_sources(CFG, gtc_sample_initial(GtcConfig(init_occupancy_prob=1.0), RngStream(0)))
    assert src.blocked_east == 1 and src.blocked_north == 1


def test_local_simulator_needs_interior_centre():
    small = GtcConfig(rows=1, cols=1)
    with pytest.raises(ValueError):
        GtcLocalSimulator(small)
    assert build("gtc", {"rows": 1, "cols": 1}).local_sim is None
    with pytest.raises(ValueError):
        GtcGlobalSimulator(small).step_with_sources(_empty_state(small), EW_GREEN, RngStream(0))


@pytest.mark.parametrize("rows,cols", [(1, 1), (2, 2), (3, 3)])
def test_small_grids_run(rows, cols):
    cfg = GtcConfig(rows=rows, cols=cols, lane_len=3)
    sim = GtcGlobalSimulator(cfg)
    rng = RngStream(2)
    state = sim.sample_initial(rng)
    for t in range(20):
        result = sim.step(state, t % 2, rng)
        assert -12.0 <= result.reward <= 0.0
        state = result.next_state


def test_local_simulator_is_exact():
    assert replay_mismatches(build("gtc"), 30, seed=6) == 0


def _entries_and_exits(sim, state, rng):
    cfg = sim.cfg
    snap = rng.snapshot()
    exits = 0
    for k in sim.east_border:
        if rng.random() < cfg.exit_prob and state.lanes[4 * k + EAST_OUT] & sim.head:
            exits += 1
    for k in sim.north_border:
        if rng.random() < cfg.exit_prob and state.lanes[4 * k + NORTH_OUT] & sim.head:
            exits += 1
    rng.restore(snap)
    entries = sum(not state.lanes[4 * k + WEST_IN] & 1 for k in sim.west_border)
    entries += sum(not state.lanes[4 * k + SOUTH_IN] & 1 for k in sim.south_border)
    return entries, exits


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.0, 1.0), st.lists(st.integers(0, 1), min_size=15, max_size=15))
def test_step_invariants(seed, occupancy, actions):
    cfg = GtcConfig(init_occupancy_prob=occupancy)
    sim = GtcGlobalSimulator(cfg)
    rng = RngStream(seed)
    state = sim.sample_initial(rng)
    for a in actions:
        entries, exits = _entries_and_exits(sim, state, rng)
        result = sim.step(state, a, rng)
        nxt = result.next_state
        assert _total(nxt) == _total(state) + entries - exits
        assert all(0 <= lane <= FULL for lane in nxt.lanes)
        assert -24.0 <= result.reward <= 0.0
        c = nxt.intersection(cfg.center)
        assert result.observation == observe(c.west_in, c.east_out, c.south_in, c.north_out, HEAD)
        assert result.reward == -float(sum(lane.bit_count() for lane in c[:4]))
        assert nxt.lights[cfg.center] == a
        state = nxt


def test_step_is_deterministic_given_stream():
    sim = GtcGlobalSimulator(CFG)
    state = sim.sample_initial(RngStream(1))
    assert sim.step(state, NS_GREEN, RngStream(4, (2,))) == sim.step(state, NS_GREEN, RngStream(4, (2,)))
