"""Benchmark domains and a small registry that wires each one together."""
from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Any, Callable

from iaplan.domains import gac, gtc


@dataclass
class Domain:
    name: str
    cfg: Any
    global_sim: Any
    local_sim: Any
    sample_initial_local: Callable
    encode_input: Callable
    input_width: int
    source_spec: tuple[int, ...]

    @property
    def horizon(self) -> int:
        return self.cfg.horizon


def build(name: str, params: dict | None = None) -> Domain:
    params = dict(params or {})
    if name == "gac":
        cfg = gac.GacConfig(**params)
        return Domain(
            name="gac",
            cfg=cfg,
            global_sim=gac.GacGlobalSimulator(cfg),
            local_sim=gac.GacLocalSimulator(cfg),
            sample_initial_local=partial(gac.sample_initial_local, cfg),
            encode_input=gac.encode_input,
            input_width=gac.INPUT_WIDTH,
            source_spec=gac.SOURCE_SPEC,
        )
    if name == "gtc":
        cfg = gtc.GtcConfig(**params)
        local = gtc.GtcLocalSimulator(cfg) if cfg.center_is_interior else None
        return Domain(
            name="gtc",
            cfg=cfg,
            global_sim=gtc.GtcGlobalSimulator(cfg),
            local_sim=local,
            sample_initial_local=partial(gtc.sample_initial_local, cfg),
            encode_input=gtc.make_encoder(cfg.lane_len),
            input_width=cfg.input_width,
            source_spec=gtc.SOURCE_SPEC,
        )
    raise ValueError(f"unknown domain {name!r}")
