"""Grid Traffic Control: one-way eastbound/northbound traffic through a grid of lights.

Each intersection owns four lane segments of ``lane_len`` grids, stored as
bitmasks where bit ``i`` is grid ``i``; bit 0 is the rear (entrance side) and
the top bit is the head (the end vehicles leave from):

    west_in   eastbound, before the light   (head at the light)
    east_out  eastbound, after the light    (rear at the light)
    south_in  northbound, before the light
    north_out northbound, after the light

Intersection ``(r, c)`` has index ``r * cols + c``; row 0 is the southern
border and column 0 the western border. Vehicles enter at the west/south
borders and leave at the east/north borders.

A step runs five phases in a fixed order, shared verbatim by the global and
the local simulator:

1. lights: hand-coded rule for every light except the centre, which takes the action;
2. border exits: each border out-lane head leaves with probability ``exit_prob``;
3. transfers: out-lane heads move into the downstream entrance grid if it is free;
4. advance: out-lanes first, then in-lanes, whose heads cross on green into a free out-lane rear;
   a vehicle that entered a lane in phase 3 has used its move and stays on the entrance grid;
5. border entries: a border entrance that was empty at the start of the step gets a vehicle.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from iaplan.core import RngStream, StepResult

EW_GREEN = 0
NS_GREEN = 1
ACTION_NAMES = ("EW_green", "NS_green")

WEST_IN, EAST_OUT, SOUTH_IN, NORTH_OUT = range(4)

SOURCE_SPEC = (2, 2, 2, 2)


@dataclass(frozen=True)
class GtcConfig:
    rows: int = 3
    cols: int = 3
    lane_len: int = 6
    init_occupancy_prob: float = 0.7
    exit_prob: float = 0.3
    horizon: int = 30

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have at least one intersection")
        if self.lane_len < 1:
            raise ValueError("lane_len must be positive")
        for name in ("init_occupancy_prob", "exit_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")

    @property
    def center(self) -> int:
        return (self.rows // 2) * self.cols + self.cols // 2

    @property
    def center_is_interior(self) -> bool:
        r, c = self.rows // 2, self.cols // 2
        return 0 < r < self.rows - 1 and 0 < c < self.cols - 1

    @property
    def input_width(self) -> int:
        return 2 + 4 * self.lane_len + 1


class Intersection(NamedTuple):
    west_in: int
    east_out: int
    south_in: int
    north_out: int
    light: int


# The local state X is the centre intersection.
GtcLocalState = Intersection


class GtcGlobalState(NamedTuple):
    lanes: tuple[int, ...]  # 4 bitmasks per intersection
    lights: tuple[int, ...]
    t: int

    def intersection(self, k: int) -> Intersection:
        return Intersection(*self.lanes[4 * k:4 * k + 4], self.lights[k])


class GtcInfluenceSource(NamedTuple):
    arrive_west: int
    arrive_south: int
    blocked_east: int
    blocked_north: int


class TransferLog(NamedTuple):
    """Phase-3 outcomes at the centre's four boundaries."""

    delivered_west: bool
    delivered_south: bool
    east_entrance_occupied: bool
    north_entrance_occupied: bool
    departed_east: bool
    departed_north: bool


def lane_to_bits(lane: int, lane_len: int) -> list[int]:
    return [(lane >> i) & 1 for i in range(lane_len)]


def bits_to_lane(bits: Sequence[int]) -> int:
    return sum(1 << i for i, b in enumerate(bits) if b)


def advance_lane(lane: Sequence[int], head_can_leave: bool) -> tuple[list[int], int]:
    """Move a lane one step, front to back. Index 0 is the rear, index -1 the head."""
    cells = list(lane)
    n = len(cells)
    departed = 0
    if cells[n - 1] and head_can_leave:
        cells[n - 1] = 0
        departed = 1
    for i in range(n - 2, -1, -1):
        if cells[i] and not cells[i + 1]:
            cells[i] = 0
            cells[i + 1] = 1
    return cells, departed


def _advance(lane: int, head: int, mask: int, can_leave: bool) -> tuple[int, bool]:
    # Same rule as advance_lane on bitmasks: everything shifts one grid except
    # a jammed run of vehicles that ends at a head which cannot leave.
    if not lane & head:
        return lane << 1, False
    if can_leave:
        return (lane << 1) & mask, True
    empty = ~lane & mask
    if not empty:
        return lane, False
    gap = empty.bit_length() - 1
    below = (1 << gap) - 1
    return (lane & ~below) | ((lane & below) << 1), False


def _score(in_lane: int, out_lane: int, head: int) -> int:
    if not in_lane & head:
        return 0
    return 1 if out_lane & 1 else 2


def handcoded_light(x: Intersection, lane_len: int = 6) -> int:
    """Prefer the direction with a waiting vehicle and a free exit; ties keep the light."""
    head = 1 << (lane_len - 1)
    ew = _score(x.west_in, x.east_out, head)
    ns = _score(x.south_in, x.north_out, head)
    if ew > ns:
        return EW_GREEN
    if ns > ew:
        return NS_GREEN
    return x.light


def _cross(wi, eo, si, no, light, head, mask, hold_w=False, hold_s=False):
    """Phase 4 for one intersection.

    ``hold_w``/``hold_s`` mark an in-lane whose entrance grid was filled in
    phase 3; that vehicle has already moved this step and stays put.
    """
    eo = _advance(eo, head, mask, False)[0]
    no = _advance(no, head, mask, False)[0]
    wi, crossed = _advance(wi & ~1 if hold_w else wi, head, mask, light == EW_GREEN and not eo & 1)
    if hold_w:
        wi |= 1
    if crossed:
        eo |= 1
    si, crossed = _advance(si & ~1 if hold_s else si, head, mask, light == NS_GREEN and not no & 1)
    if hold_s:
        si |= 1
    if crossed:
        no |= 1
    return wi, eo, si, no


def observe(wi: int, eo: int, si: int, no: int, head: int) -> int:
    """4-bit observation: west_in head, south_in head, east_out rear, north_out rear."""
    return (1 if wi & head else 0) | (2 if si & head else 0) | (4 if eo & 1 else 0) | (8 if no & 1 else 0)


def occupied(wi: int, eo: int, si: int, no: int) -> int:
    return wi.bit_count() + eo.bit_count() + si.bit_count() + no.bit_count()


def gtc_sample_initial(cfg: GtcConfig, rng: RngStream) -> GtcGlobalState:
    rand = rng.random
    prob = cfg.init_occupancy_prob
    k = cfg.rows * cfg.cols
    lanes = []
    for _ in range(4 * k):
        lane = 0
        for i in range(cfg.lane_len):
            if rand() < prob:
                lane |= 1 << i
        lanes.append(lane)
    return GtcGlobalState(tuple(lanes), (EW_GREEN,) * k, 0)


def gtc_sources(cfg: GtcConfig, state: GtcGlobalState) -> GtcInfluenceSource:
    """Influence sources the centre receives in the step starting from ``state``.

    Phase 2 never touches the centre's neighbours' boundary grids when the
    centre is interior, so the sources are a function of the state alone.
    """
    if not cfg.center_is_interior:
        raise ValueError("influence sources need an interior centre intersection")
    head = 1 << (cfg.lane_len - 1)
    lanes = state.lanes
    c = cfg.center
    west, east, south, north = c - 1, c + 1, c - cfg.cols, c + cfg.cols
    arrive_west = bool(lanes[4 * west + EAST_OUT] & head) and not lanes[4 * c + WEST_IN] & 1
    arrive_south = bool(lanes[4 * south + NORTH_OUT] & head) and not lanes[4 * c + SOUTH_IN] & 1
    blocked_east = lanes[4 * east + WEST_IN] & 1
    blocked_north = lanes[4 * north + SOUTH_IN] & 1
    return GtcInfluenceSource(int(arrive_west), int(arrive_south), int(blocked_east), int(blocked_north))


def gtc_extract_sources(state_before: GtcGlobalState, state_after: GtcGlobalState,
                        transfer_log: TransferLog) -> GtcInfluenceSource:
    """Influence sources of one global step, read off its transfer log.

    ``blocked_*`` is the occupancy of the downstream entrance grid, i.e. whether
    a departing head would have been (or was) refused.
    """
    return GtcInfluenceSource(
        int(transfer_log.delivered_west),
        int(transfer_log.delivered_south),
        int(transfer_log.east_entrance_occupied),
        int(transfer_log.north_entrance_occupied),
    )


class GtcGlobalSimulator:
    def __init__(self, cfg: GtcConfig):
        self.cfg = cfg
        self.head = 1 << (cfg.lane_len - 1)
        self.mask = (1 << cfg.lane_len) - 1
        rows, cols = cfg.rows, cfg.cols
        self.n_intersections = rows * cols
        self.center = cfg.center
        self.east_border = [r * cols + cols - 1 for r in range(rows)]
        self.north_border = [(rows - 1) * cols + c for c in range(cols)]
        self.west_border = [r * cols for r in range(rows)]
        self.south_border = list(range(cols))
        # (upstream intersection, downstream intersection) pairs
        self.east_links = [(r * cols + c, r * cols + c + 1) for r in range(rows) for c in range(cols - 1)]
        self.north_links = [(r * cols + c, (r + 1) * cols + c) for r in range(rows - 1) for c in range(cols)]

    def action_count(self) -> int:
        return 2

    def sample_initial(self, rng: RngStream) -> GtcGlobalState:
        return gtc_sample_initial(self.cfg, rng)

    def clone_state(self, state: GtcGlobalState) -> GtcGlobalState:
        return state

    def local_state(self, state: GtcGlobalState) -> Intersection:
        return state.intersection(self.center)

    def step(self, state: GtcGlobalState, action: int, rng: RngStream) -> StepResult:
        return self.transition(state, action, rng)[0]

    def step_with_sources(self, state, action, rng):
        result, log = self.transition(state, action, rng)
        if log is None:
            raise ValueError("influence sources need an interior centre intersection")
        return result, gtc_extract_sources(state, result.next_state, log)

    def transition(self, state: GtcGlobalState, action: int, rng: RngStream):
        head, mask = self.head, self.mask
        before = state.lanes
        lanes = list(before)
        c = self.center

        # 1. lights
        lights = []
        for k in range(self.n_intersections):
            if k == c:
                lights.append(action)
                continue
            j = 4 * k
            wi, eo, si, no = lanes[j], lanes[j + 1], lanes[j + 2], lanes[j + 3]
            ew = (1 if eo & 1 else 2) if wi & head else 0
            ns = (1 if no & 1 else 2) if si & head else 0
            lights.append(EW_GREEN if ew > ns else NS_GREEN if ns > ew else state.lights[k])

        # 2. border exits
        rand = rng.random
        exit_prob = self.cfg.exit_prob
        for k in self.east_border:
            if rand() < exit_prob and lanes[4 * k + EAST_OUT] & head:
                lanes[4 * k + EAST_OUT] ^= head
        for k in self.north_border:
            if rand() < exit_prob and lanes[4 * k + NORTH_OUT] & head:
                lanes[4 * k + NORTH_OUT] ^= head

        # 3. transfers
        log = {}
        held = [False] * len(lanes)
        for src, dst in self.east_links:
            s, d = 4 * src + EAST_OUT, 4 * dst + WEST_IN
            occupied_dst = lanes[d] & 1
            moved = bool(lanes[s] & head) and not occupied_dst
            if moved:
                lanes[s] ^= head
                lanes[d] |= 1
                held[d] = True
            if src == c:
                log["east_entrance_occupied"] = bool(occupied_dst)
                log["departed_east"] = moved
            if dst == c:
                log["delivered_west"] = moved
        for src, dst in self.north_links:
            s, d = 4 * src + NORTH_OUT, 4 * dst + SOUTH_IN
            occupied_dst = lanes[d] & 1
            moved = bool(lanes[s] & head) and not occupied_dst
            if moved:
                lanes[s] ^= head
                lanes[d] |= 1
                held[d] = True
            if src == c:
                log["north_entrance_occupied"] = bool(occupied_dst)
                log["departed_north"] = moved
            if dst == c:
                log["delivered_south"] = moved

        # 4. advance with light crossing
        for k in range(self.n_intersections):
            j = 4 * k
            lanes[j], lanes[j + 1], lanes[j + 2], lanes[j + 3] = _cross(
                lanes[j], lanes[j + 1], lanes[j + 2], lanes[j + 3], lights[k], head, mask,
                held[j + WEST_IN], held[j + SOUTH_IN])

        # 5. border entries
        for k in self.west_border:
            if not before[4 * k + WEST_IN] & 1:
                lanes[4 * k + WEST_IN] |= 1
        for k in self.south_border:
            if not before[4 * k + SOUTH_IN] & 1:
                lanes[4 * k + SOUTH_IN] |= 1

        j = 4 * c
        wi, eo, si, no = lanes[j], lanes[j + 1], lanes[j + 2], lanes[j + 3]
        next_state = GtcGlobalState(tuple(lanes), tuple(lights), state.t + 1)
        result = StepResult(next_state, observe(wi, eo, si, no, head), -float(occupied(wi, eo, si, no)))
        transfer_log = None
        if len(log) == 6:
            transfer_log = TransferLog(**log)
        return result, transfer_log


class GtcLocalSimulator:
    """The centre intersection with its boundary replaced by influence sources."""

    def __init__(self, cfg: GtcConfig):
        if not cfg.center_is_interior:
            raise ValueError("the local simulator needs an interior centre intersection")
        self.cfg = cfg
        self.head = 1 << (cfg.lane_len - 1)
        self.mask = (1 << cfg.lane_len) - 1

    def action_count(self) -> int:
        return 2

    def step(self, x: Intersection, y: Sequence[int], action: int, rng: RngStream | None = None):
        head = self.head
        wi, eo, si, no, _ = x
        arrive_west, arrive_south, blocked_east, blocked_north = y
        # 3. boundary exchange
        if eo & head and not blocked_east:
            eo ^= head
        if no & head and not blocked_north:
            no ^= head
        hold_w = bool(arrive_west) and not wi & 1
        hold_s = bool(arrive_south) and not si & 1
        if hold_w:
            wi |= 1
        if hold_s:
            si |= 1
        # 4. advance with light crossing
        wi, eo, si, no = _cross(wi, eo, si, no, action, head, self.mask, hold_w, hold_s)
        x_next = Intersection(wi, eo, si, no, action)
        return x_next, observe(wi, eo, si, no, head), -float(occupied(wi, eo, si, no))


def gtc_local_step(x: Intersection, y: Sequence[int], a: int, cfg: GtcConfig, rng: RngStream | None = None):
    return GtcLocalSimulator(cfg).step(x, y, a, rng)


def sample_initial_local(cfg: GtcConfig, rng: RngStream) -> tuple[Intersection, GtcInfluenceSource]:
    state = gtc_sample_initial(cfg, rng)
    return state.intersection(cfg.center), gtc_sources(cfg, state)


def make_encoder(lane_len: int):
    """Predictor input for (a_{t-1}, x_t): one-hot action, 4 lanes rear-to-head, light bit."""

    @lru_cache(maxsize=1 << 16)
    def encode_input(action: int, x: Intersection) -> np.ndarray:
        bits = [float(action == EW_GREEN), float(action == NS_GREEN)]
        for lane in x[:4]:
            bits.extend(float((lane >> i) & 1) for i in range(lane_len))
        bits.append(float(x[4]))
        out = np.array(bits)
        out.setflags(write=False)
        return out

    return encode_input
