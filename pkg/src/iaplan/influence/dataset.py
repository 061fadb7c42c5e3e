"""Influence datasets: (a_{t-1}, x_t) input sequences and y^src_t target sequences."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from iaplan.core import RngStream


@dataclass
class InfluenceDataset:
    inputs: np.ndarray  # (episodes, steps, input_width) floats
    targets: np.ndarray  # (episodes, steps, n_source_vars) ints
    source_spec: tuple[int, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=np.int64)
        self.source_spec = tuple(int(k) for k in self.source_spec)
        if self.inputs.ndim != 3 or self.targets.ndim != 3:
            raise ValueError("inputs and targets must be 3-d (episodes, steps, width)")
        if self.inputs.shape[:2] != self.targets.shape[:2]:
            raise ValueError("inputs and targets disagree on episodes/steps")
        if self.targets.shape[2] != len(self.source_spec):
            raise ValueError("target width does not match the source spec")
        if self.targets.size and (self.targets.min() < 0 or (self.targets >= np.array(self.source_spec)).any()):
            raise ValueError("target values outside the source alphabet")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def seq_len(self) -> int:
        return self.inputs.shape[1]

    @property
    def input_width(self) -> int:
        return self.inputs.shape[2]

    def subset(self, idx) -> "InfluenceDataset":
        return InfluenceDataset(self.inputs[idx], self.targets[idx], self.source_spec, dict(self.meta))

    def split(self, train_fraction: float = 0.8) -> tuple["InfluenceDataset", "InfluenceDataset"]:
        """First ``train_fraction`` of episodes for training, the rest for validation."""
        cut = int(round(train_fraction * len(self)))
        return self.subset(slice(0, cut)), self.subset(slice(cut, None))

    def save(self, path: str | Path) -> None:
        header = {"input_width": self.input_width, "seq_len": self.seq_len,
                  "source_spec": list(self.source_spec), **self.meta}
        lines = [json.dumps(header)]
        for x, y in zip(self.inputs, self.targets):
            lines.append(json.dumps({"inputs": x.tolist(), "targets": y.tolist()}))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "InfluenceDataset":
        with open(path) as fh:
            header = json.loads(fh.readline())
            records = [json.loads(line) for line in fh if line.strip()]
        width, seq_len = int(header["input_width"]), int(header["seq_len"])
        spec = tuple(header["source_spec"])
        inputs = np.array([r["inputs"] for r in records], dtype=float).reshape(len(records), seq_len, width)
        targets = np.array([r["targets"] for r in records], dtype=np.int64).reshape(len(records), seq_len, len(spec))
        meta = {k: v for k, v in header.items() if k not in ("input_width", "seq_len", "source_spec")}
        return cls(inputs, targets, spec, meta)


def uniform_policy(n_actions: int) -> Callable[[RngStream], int]:
    def act(rng: RngStream) -> int:
        return int(rng.random() * n_actions)
    return act


def collect_dataset(domain, n_episodes: int, rng: RngStream, horizon: int | None = None,
                    policy: Callable[[RngStream], int] | None = None) -> InfluenceDataset:
    """Roll out ``policy`` (uniform random by default) in the global simulator.

    Episode ``e`` uses the stream ``rng.fork(e)``. Inputs at t = 1..H-1 are the
    encoded (a_{t-1}, x_t); the initial local state is dropped. Targets are the
    influence sources extracted from global step t.
    """
    sim = domain.global_sim
    if not hasattr(sim, "step_with_sources"):
        raise TypeError(f"{type(sim).__name__} does not expose influence-source extraction")
    horizon = domain.horizon if horizon is None else horizon
    if horizon < 2:
        raise ValueError("need a horizon of at least 2 to form input sequences")
    policy = policy or uniform_policy(sim.action_count())
    steps = horizon - 1
    inputs = np.zeros((n_episodes, steps, domain.input_width))
    targets = np.zeros((n_episodes, steps, len(domain.source_spec)), dtype=np.int64)
    for e in range(n_episodes):
        ep_rng = rng.fork(e)
        state = sim.sample_initial(ep_rng)
        prev_action = None
        for t in range(horizon):
            if t > 0:
                inputs[e, t - 1] = domain.encode_input(prev_action, sim.local_state(state))
            action = policy(ep_rng)
            result, sources = sim.step_with_sources(state, action, ep_rng)
            if t > 0:
                targets[e, t - 1] = sources
            state = result.next_state
            prev_action = action
    meta = {"domain": domain.name, "horizon": horizon, "n_episodes": n_episodes}
    return InfluenceDataset(inputs, targets, domain.source_spec, meta)
