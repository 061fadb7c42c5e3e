"""Recurrent sequence classifier for influence sources, with hand-written BPTT.

Two cells are supported:

* ``gru``:   r = σ(W_r x + U_r z + b_r), u = σ(W_u x + U_u z + b_u),
             h = tanh(W_h x + U_h (r ⊙ z) + b_h), z' = u ⊙ z + (1 − u) ⊙ h
* ``elman``: z' = tanh(W x + U z + b)

Output heads read the new hidden state. ``bernoulli`` heads emit one logit per
binary source variable; ``softmax`` heads emit one logit per category, grouped
per source variable. The loss is the cross-entropy averaged over batch, time
and source variables (nats per target variable).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

CELL_PARAMS = {
    "gru": ("W_r", "U_r", "b_r", "W_u", "U_u", "b_u", "W_h", "U_h", "b_h"),
    "elman": ("W", "U", "b"),
}
HEAD_PARAMS = ("W_out", "b_out")


@dataclass
class RnnPredictor:
    cell_kind: str
    input_width: int
    hidden_width: int
    source_spec: tuple[int, ...]
    head_kind: str
    params: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cell_kind not in CELL_PARAMS:
            raise ValueError(f"unknown cell kind {self.cell_kind!r}")
        if self.head_kind not in ("bernoulli", "softmax"):
            raise ValueError(f"unknown head kind {self.head_kind!r}")
        if self.head_kind == "bernoulli" and any(k != 2 for k in self.source_spec):
            raise ValueError("bernoulli heads need binary source variables")
        self.source_spec = tuple(int(k) for k in self.source_spec)
        expected = param_shapes(self.cell_kind, self.input_width, self.hidden_width, self.n_logits)
        for name, shape in expected.items():
            if name not in self.params:
                raise ValueError(f"missing parameter {name}")
            if self.params[name].shape != shape:
                raise ValueError(f"parameter {name} has shape {self.params[name].shape}, expected {shape}")
        extra = set(self.params) - set(expected)
        if extra:
            raise ValueError(f"unexpected parameters {sorted(extra)}")

    @property
    def n_logits(self) -> int:
        if self.head_kind == "bernoulli":
            return len(self.source_spec)
        return sum(self.source_spec)

    @property
    def group_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.source_spec)]).astype(np.int64)

    def copy(self) -> "RnnPredictor":
        return RnnPredictor(self.cell_kind, self.input_width, self.hidden_width, self.source_spec,
                            self.head_kind, {k: v.copy() for k, v in self.params.items()}, dict(self.meta))

    def save(self, path: str | Path) -> None:
        doc = {
            "cell_kind": self.cell_kind,
            "input_width": self.input_width,
            "hidden_width": self.hidden_width,
            "source_spec": list(self.source_spec),
            "head_kind": self.head_kind,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.params.items()},
            **self.meta,
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path: str | Path) -> "RnnPredictor":
        doc = json.loads(Path(path).read_text())
        params = {}
        for name, entry in doc["params"].items():
            data = np.asarray(entry["data"], dtype=float)
            shape = tuple(entry["shape"])
            if data.size != math.prod(shape):
                raise ValueError(f"parameter {name}: {data.size} values for shape {shape}")
            params[name] = data.reshape(shape)
        core = ("cell_kind", "input_width", "hidden_width", "source_spec", "head_kind", "params")
        meta = {k: v for k, v in doc.items() if k not in core}
        return cls(doc["cell_kind"], int(doc["input_width"]), int(doc["hidden_width"]),
                   tuple(doc["source_spec"]), doc["head_kind"], params, meta)


def param_shapes(cell_kind: str, input_width: int, hidden_width: int, n_logits: int) -> dict[str, tuple]:
    d, h = input_width, hidden_width
    shapes = {}
    for name in CELL_PARAMS[cell_kind]:
        shapes[name] = {"W": (h, d), "U": (h, h), "b": (h,)}[name[0]]
    shapes["W_out"] = (n_logits, h)
    shapes["b_out"] = (n_logits,)
    return shapes


def init_predictor(cell_kind: str, input_width: int, hidden_width: int, source_spec: Sequence[int],
                   head_kind: str = "bernoulli", rng: np.random.Generator | None = None) -> RnnPredictor:
    """Uniform initialisation in ±1/sqrt(fan_in); biases use the hidden width as fan-in."""
    rng = rng if rng is not None else np.random.default_rng(0)
    spec = tuple(source_spec)
    n_logits = len(spec) if head_kind == "bernoulli" else sum(spec)
    params = {}
    for name, shape in param_shapes(cell_kind, input_width, hidden_width, n_logits).items():
        fan_in = shape[1] if len(shape) == 2 else hidden_width
        bound = 1.0 / math.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    return RnnPredictor(cell_kind, input_width, hidden_width, spec, head_kind, params)


def zero_predictor(cell_kind: str, input_width: int, hidden_width: int, source_spec: Sequence[int],
                   head_kind: str = "bernoulli") -> RnnPredictor:
    pred = init_predictor(cell_kind, input_width, hidden_width, source_spec, head_kind)
    for v in pred.params.values():
        v[...] = 0.0
    return pred


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def head_distributions(pred: RnnPredictor, logits: np.ndarray) -> list[np.ndarray]:
    """Per-source-variable category probabilities from the logits (last axis)."""
    if pred.head_kind == "bernoulli":
        p1 = _sigmoid(logits)
        return [np.stack([1.0 - p1[..., i], p1[..., i]], axis=-1) for i in range(len(pred.source_spec))]
    out = []
    offsets = pred.group_offsets
    for i in range(len(pred.source_spec)):
        g = logits[..., offsets[i]:offsets[i + 1]]
        g = np.exp(g - g.max(axis=-1, keepdims=True))
        out.append(g / g.sum(axis=-1, keepdims=True))
    return out


def cell_step(pred: RnnPredictor, z: np.ndarray, x: np.ndarray) -> np.ndarray:
    p = pred.params
    if pred.cell_kind == "elman":
        return np.tanh(x @ p["W"].T + z @ p["U"].T + p["b"])
    r = _sigmoid(x @ p["W_r"].T + z @ p["U_r"].T + p["b_r"])
    u = _sigmoid(x @ p["W_u"].T + z @ p["U_u"].T + p["b_u"])
    h = np.tanh(x @ p["W_h"].T + (r * z) @ p["U_h"].T + p["b_h"])
    return u * z + (1.0 - u) * h


def rnn_forward(pred: RnnPredictor, z: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """One step: new hidden state and per-head distributions."""
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != pred.input_width:
        raise ValueError(f"input width {x.shape[-1]} does not match predictor width {pred.input_width}")
    if z.shape[-1] != pred.hidden_width:
        raise ValueError(f"hidden width {z.shape[-1]} does not match predictor width {pred.hidden_width}")
    z_next = cell_step(pred, z, x)
    logits = z_next @ pred.params["W_out"].T + pred.params["b_out"]
    return z_next, head_distributions(pred, logits)


def _forward_sequence(pred: RnnPredictor, inputs: np.ndarray):
    p = pred.params
    batch, steps, _ = inputs.shape
    hdim = pred.hidden_width
    zs = np.zeros((batch, steps + 1, hdim))
    cache = {}
    if pred.cell_kind == "elman":
        pre = inputs @ p["W"].T + p["b"]
        for t in range(steps):
            zs[:, t + 1] = np.tanh(pre[:, t] + zs[:, t] @ p["U"].T)
    else:
        pre_r = inputs @ p["W_r"].T + p["b_r"]
        pre_u = inputs @ p["W_u"].T + p["b_u"]
        pre_h = inputs @ p["W_h"].T + p["b_h"]
        rs = np.empty((batch, steps, hdim))
        us = np.empty_like(rs)
        hs = np.empty_like(rs)
        for t in range(steps):
            z = zs[:, t]
            r = _sigmoid(pre_r[:, t] + z @ p["U_r"].T)
            u = _sigmoid(pre_u[:, t] + z @ p["U_u"].T)
            h = np.tanh(pre_h[:, t] + (r * z) @ p["U_h"].T)
            zs[:, t + 1] = u * z + (1.0 - u) * h
            rs[:, t], us[:, t], hs[:, t] = r, u, h
        cache.update(r=rs, u=us, h=hs)
    logits = zs[:, 1:] @ p["W_out"].T + p["b_out"]
    return zs, logits, cache


def _ce_and_dlogits(pred: RnnPredictor, logits: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy per target variable and its gradient w.r.t. the logits."""
    n_vars = len(pred.source_spec)
    denom = targets.shape[0] * targets.shape[1] * n_vars
    if pred.head_kind == "bernoulli":
        y = targets.astype(float)
        # softplus(l) - y * l, evaluated stably
        loss = np.logaddexp(0.0, logits) - y * logits
        return loss.sum() / denom, (_sigmoid(logits) - y) / denom
    offsets = pred.group_offsets
    total = 0.0
    dlogits = np.empty_like(logits)
    for i in range(n_vars):
        g = logits[..., offsets[i]:offsets[i + 1]]
        m = g.max(axis=-1, keepdims=True)
        e = np.exp(g - m)
        s = e.sum(axis=-1, keepdims=True)
        logp = g - m - np.log(s)
        idx = targets[..., i][..., None]
        total -= np.take_along_axis(logp, idx, axis=-1).sum()
        d = e / s
        np.put_along_axis(d, idx, np.take_along_axis(d, idx, axis=-1) - 1.0, axis=-1)
        dlogits[..., offsets[i]:offsets[i + 1]] = d
    return total / denom, dlogits / denom


def sequence_loss(pred: RnnPredictor, inputs: np.ndarray, targets: np.ndarray) -> float:
    _, logits, _ = _forward_sequence(pred, inputs)
    return _ce_and_dlogits(pred, logits, targets)[0]


def head_cross_entropy(pred: RnnPredictor, inputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Mean cross-entropy of each source variable separately, in nats."""
    _, logits, _ = _forward_sequence(pred, inputs)
    offsets = pred.group_offsets
    out = np.empty(len(pred.source_spec))
    for i in range(len(pred.source_spec)):
        if pred.head_kind == "bernoulli":
            y, l = targets[..., i].astype(float), logits[..., i]
            out[i] = (np.logaddexp(0.0, l) - y * l).mean()
        else:
            g = logits[..., offsets[i]:offsets[i + 1]]
            m = g.max(axis=-1, keepdims=True)
            logp = g - m - np.log(np.exp(g - m).sum(axis=-1, keepdims=True))
            out[i] = -np.take_along_axis(logp, targets[..., i][..., None], axis=-1).mean()
    return out


def loss_and_grads(pred: RnnPredictor, inputs: np.ndarray, targets: np.ndarray):
    """Cross-entropy over full sequences and its gradient by backpropagation through time.

    ``inputs`` has shape (batch, steps, input_width); ``targets`` (batch, steps,
    n_source_vars) holds category indices. The hidden state starts at zero.
    """
    p = pred.params
    zs, logits, cache = _forward_sequence(pred, inputs)
    loss, dlogits = _ce_and_dlogits(pred, logits, targets)
    batch, steps, _ = inputs.shape
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    z_out = zs[:, 1:]
    grads["W_out"] = np.einsum("btk,bth->kh", dlogits, z_out)
    grads["b_out"] = dlogits.sum(axis=(0, 1))
    dz_heads = dlogits @ p["W_out"]

    dz = np.zeros((batch, pred.hidden_width))
    if pred.cell_kind == "elman":
        dpre = np.empty((batch, steps, pred.hidden_width))
        for t in range(steps - 1, -1, -1):
            dz = dz + dz_heads[:, t]
            da = dz * (1.0 - z_out[:, t] ** 2)
            dpre[:, t] = da
            dz = da @ p["U"]
        grads["W"] = np.einsum("bth,btd->hd", dpre, inputs)
        grads["U"] = np.einsum("bth,btk->hk", dpre, zs[:, :-1])
        grads["b"] = dpre.sum(axis=(0, 1))
        return loss, grads

    rs, us, hs = cache["r"], cache["u"], cache["h"]
    d_r = np.empty((batch, steps, pred.hidden_width))
    d_u = np.empty_like(d_r)
    d_h = np.empty_like(d_r)
    for t in range(steps - 1, -1, -1):
        z_prev = zs[:, t]
        r, u, h = rs[:, t], us[:, t], hs[:, t]
        dz = dz + dz_heads[:, t]
        dh = dz * (1.0 - u) * (1.0 - h ** 2)
        du = dz * (z_prev - h) * u * (1.0 - u)
        drz = dh @ p["U_h"]
        dr = drz * z_prev * r * (1.0 - r)
        dz = dz * u + drz * r + du @ p["U_u"] + dr @ p["U_r"]
        d_r[:, t], d_u[:, t], d_h[:, t] = dr, du, dh
    z_prev_all = zs[:, :-1]
    for gate, d in (("r", d_r), ("u", d_u), ("h", d_h)):
        grads[f"W_{gate}"] = np.einsum("bth,btd->hd", d, inputs)
        grads[f"b_{gate}"] = d.sum(axis=(0, 1))
    grads["U_r"] = np.einsum("bth,btk->hk", d_r, z_prev_all)
    grads["U_u"] = np.einsum("bth,btk->hk", d_u, z_prev_all)
    grads["U_h"] = np.einsum("bth,btk->hk", d_h, rs * z_prev_all)
    return loss, grads


@dataclass
class TrainConfig:
    learning_rate: float = 0.0005
    batch_size: int = 128
    epochs: int = 8000
    weight_decay: float = 0.0
    optimizer: str = "sgd"
    grad_clip_norm: float = 5.0
    seed: int = 0
    cell_kind: str = "gru"
    hidden_width: int = 8
    head_kind: str = "bernoulli"

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("learning_rate, batch_size and epochs must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class LearningCurve:
    train_ce: list[float] = field(default_factory=list)
    val_ce: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train_ce)

    def to_csv(self, path: str | Path) -> None:
        lines = ["epoch,train_ce,val_ce"]
        lines += [f"{i + 1},{a:.10g},{b:.10g}" for i, (a, b) in enumerate(zip(self.train_ce, self.val_ce))]
        Path(path).write_text("\n".join(lines) + "\n")


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def update(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def train(dataset, cfg: TrainConfig, log_every: int = 0) -> tuple[RnnPredictor, LearningCurve]:
    """Mini-batch training on the first 80% of episodes; keeps the best-validation epoch."""
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    train_set, val_set = dataset.split()
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("dataset too small for an 80/20 train/validation split")
    rng = np.random.default_rng(cfg.seed)
    pred = init_predictor(cfg.cell_kind, dataset.input_width, cfg.hidden_width, dataset.source_spec,
                          cfg.head_kind, rng)
    pred.meta["train_config"] = asdict(cfg)
    adam = _Adam(pred.params, cfg.learning_rate) if cfg.optimizer == "adam" else None
    x_train, y_train = train_set.inputs, train_set.targets
    n = len(train_set)
    curve = LearningCurve()
    best_val, best_params, best_epoch = math.inf, None, 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(pred, x_train[idx], y_train[idx])
            if not math.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite training loss at epoch {epoch + 1}, batch starting at {start}; "
                    f"largest parameter magnitude {max(np.abs(v).max() for v in pred.params.values()):.3g}")
            loss_sum += loss * len(idx)
            if cfg.weight_decay:
                for k in grads:
                    grads[k] = grads[k] + cfg.weight_decay * pred.params[k]
            norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if cfg.grad_clip_norm and norm > cfg.grad_clip_norm:
                scale = cfg.grad_clip_norm / norm
                grads = {k: g * scale for k, g in grads.items()}
            if adam is not None:
                adam.update(pred.params, grads)
            else:
                for k, g in grads.items():
                    pred.params[k] -= cfg.learning_rate * g
        val = sequence_loss(pred, val_set.inputs, val_set.targets)
        curve.train_ce.append(loss_sum / n)
        curve.val_ce.append(val)
        if val < best_val:
            best_val, best_epoch = val, epoch + 1
            best_params = {k: v.copy() for k, v in pred.params.items()}
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1}: train {loss_sum / n:.5f} val {val:.5f} (best {best_val:.5f} @ {best_epoch})")

    pred.params = best_params
    pred.meta.update(best_epoch=best_epoch, val_ce=best_val)
    return pred, curve
