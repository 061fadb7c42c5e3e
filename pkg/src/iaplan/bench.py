"""Experiment harness: the online plan/execute/observe loop, grids of configs, CSV and SVG output."""
from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

from iaplan.core import SIMULATION_COUNT, RngStream, SimulatorBudget, discounted_return
from iaplan.domains import Domain, build
from iaplan.domains.gac import GacConfig
from iaplan.ials import make_ials
from iaplan.influence import ExactGacInfluence, LearnedInfluence, RnnPredictor, UniformInfluence
from iaplan.influence.oracle import MAX_AGENTS as ORACLE_MAX_AGENTS, MAX_HORIZON as ORACLE_MAX_HORIZON
from iaplan.pomcp import ParticleDepletion, PlannerConfig, Pomcp

SIMULATORS = ("global", "ials_learned", "ials_uniform", "ials_oracle")

CSV_COLUMNS = (
    "domain", "simulator", "grid_var", "grid_value", "n_episodes",
    "mean_return", "se_return", "mean_disc_return", "se_disc_return",
    "mean_sim_time", "se_sim_time", "mean_sims_per_step", "se_sims_per_step",
    "mean_steps_to_go", "se_steps_to_go",
)

# metric name in the CSV -> EpisodeMetrics attribute
METRICS = {
    "return": "undiscounted_return",
    "disc_return": "discounted_return",
    "sim_time": "sim_time_per_step",
    "sims_per_step": "sims_per_step",
    "steps_to_go": "steps_to_go_on_depletion",
}

PLANNER_KEYS = ("ucb_c", "gamma", "horizon", "effective_horizon", "budget_kind", "budget_amount",
                "n_initial_particles", "seed")


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""


@dataclass
class ExperimentConfig:
    domain: str
    simulator: str
    planner: PlannerConfig
    n_episodes: int = 1
    seed: int = 0
    domain_params: dict = field(default_factory=dict)
    model_path: str | None = None
    grid_var: str = ""
    grid_value: Any = ""
    record_timing: bool = True

    def __post_init__(self):
        if self.domain not in ("gac", "gtc"):
            raise ConfigError(f"unknown domain {self.domain!r}")
        if self.simulator not in SIMULATORS:
            raise ConfigError(f"unknown simulator {self.simulator!r}; expected one of {SIMULATORS}")
        if (self.simulator == "ials_learned") != (self.model_path is not None):
            raise ConfigError("model_path is required for ials_learned and only allowed there")
        if self.simulator == "ials_oracle":
            if self.domain != "gac":
                raise ConfigError("the exact influence oracle exists only for Grab A Chair")
            n = self.domain_params.get("n_agents", GacConfig.n_agents)
            if n > ORACLE_MAX_AGENTS or self.planner.horizon > ORACLE_MAX_HORIZON:
                raise ConfigError(f"the exact influence oracle handles at most {ORACLE_MAX_AGENTS} agents and "
                                  f"horizon {ORACLE_MAX_HORIZON}")
        if self.n_episodes < 1:
            raise ConfigError("n_episodes must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key in ("domain", "simulator"):
            if key not in raw:
                raise ConfigError(f"missing config key {key!r}")
        planner_raw = dict(raw.pop("planner", {}))
        bad = set(planner_raw) - set(PLANNER_KEYS)
        if bad:
            raise ConfigError(f"unknown planner keys {sorted(bad)}")
        params = dict(raw.get("domain_params", {}))
        try:
            domain = build(raw["domain"], params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad domain parameters: {exc}") from exc
        horizon = planner_raw.pop("horizon", domain.horizon)
        if horizon != domain.horizon:
            raise ConfigError(f"planner horizon {horizon} differs from the domain horizon {domain.horizon}")
        try:
            budget = SimulatorBudget(planner_raw.pop("budget_kind", SIMULATION_COUNT),
                                     planner_raw.pop("budget_amount", 1000))
            planner = PlannerConfig(horizon=horizon,
                                    effective_horizon=planner_raw.pop("effective_horizon", horizon),
                                    budget=budget, **planner_raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad planner parameters: {exc}") from exc
        if raw.get("grid_var") and "grid_value" not in raw:
            raw["grid_value"] = _lookup_grid_value(raw["grid_var"], params, planner)
        raw["domain_params"] = params
        try:
            return cls(planner=planner, **raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = asdict(self)
        planner = out.pop("planner")
        budget = planner.pop("budget")
        planner.pop("reinvigoration_divisor")
        planner.update(budget_kind=budget["kind"], budget_amount=budget["amount"])
        out["planner"] = planner
        return out


def _lookup_grid_value(name: str, params: dict, planner: PlannerConfig):
    if name in params:
        return params[name]
    if name == "budget_amount":
        return planner.budget.amount
    if hasattr(planner, name):
        return getattr(planner, name)
    raise ConfigError(f"grid_var {name!r} is neither a domain nor a planner parameter")


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_grid(path: str | Path) -> list[ExperimentConfig]:
    """Read a grid file: a JSON list of configs, or ``{"defaults": {...}, "configs": [...]}``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    defaults: dict = {}
    if isinstance(doc, dict):
        defaults = doc.get("defaults", {})
        doc = doc.get("configs")
    if not isinstance(doc, list):
        raise ConfigError(f"{path}: expected a list of config objects")
    base = Path(path).parent
    configs = []
    for raw in doc:
        merged = _deep_merge(defaults, raw)
        if merged.get("model_path") and not os.path.isabs(merged["model_path"]):
            merged["model_path"] = str(base / merged["model_path"])
        configs.append(ExperimentConfig.from_dict(merged))
    return configs


class TimedSimulator:
    """Forwards to ``inner`` and accumulates wall time spent inside ``step``."""

    def __init__(self, inner):
        self.inner = inner
        self.elapsed = 0.0
        self._inner_step = inner.step

    def action_count(self) -> int:
        return self.inner.action_count()

    def sample_initial(self, rng):
        return self.inner.sample_initial(rng)

    def clone_state(self, state):
        return self.inner.clone_state(state)

    def step(self, state, action, rng):
        start = time.perf_counter()
        result = self._inner_step(state, action, rng)
        self.elapsed += time.perf_counter() - start
        return result


_MODEL_CACHE: dict[tuple, RnnPredictor] = {}


def load_model(path: str) -> RnnPredictor:
    stat = os.stat(path)
    key = (os.path.abspath(path), stat.st_mtime_ns, stat.st_size)
    if key not in _MODEL_CACHE:
        _MODEL_CACHE[key] = RnnPredictor.load(path)
    return _MODEL_CACHE[key]


_ORACLE_CACHE: dict = {}


def _oracle(gac_cfg) -> ExactGacInfluence:
    # the oracle's belief tables are pure functions of the config, so share them across episodes
    if gac_cfg not in _ORACLE_CACHE:
        _ORACLE_CACHE[gac_cfg] = ExactGacInfluence(gac_cfg)
    return _ORACLE_CACHE[gac_cfg]


def planning_simulator(cfg: ExperimentConfig, domain: Domain):
    kind = cfg.simulator
    if kind == "global":
        return domain.global_sim
    if kind == "ials_uniform":
        return make_ials(domain, UniformInfluence(domain.source_spec))
    if kind == "ials_oracle":
        return make_ials(domain, _oracle(domain.cfg))
    model = load_model(cfg.model_path)
    if model.input_width != domain.input_width or model.source_spec != tuple(domain.source_spec):
        raise ConfigError(
            f"model {cfg.model_path} expects input width {model.input_width} and sources {model.source_spec}, "
            f"domain provides {domain.input_width} and {tuple(domain.source_spec)}")
    return make_ials(domain, LearnedInfluence(model, domain.encode_input))


@dataclass
class EpisodeMetrics:
    undiscounted_return: float
    discounted_return: float
    sim_time_per_step: float
    sims_per_step: float
    steps_to_go_on_depletion: int
    wall_time: float
    actions: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)


def episode_streams(cfg: ExperimentConfig, episode_index: int) -> tuple[RngStream, RngStream, RngStream]:
    """Environment, planner and depletion-fallback streams for one episode."""
    root = RngStream(cfg.seed, (episode_index,))
    return root.fork(0), root.fork(1).fork(cfg.planner.seed), root.fork(2)


def run_episode(cfg: ExperimentConfig, episode_index: int, trace=None) -> EpisodeMetrics:
    """Plan with the configured simulator, act in the global simulator."""
    wall_start = time.perf_counter()
    domain = build(cfg.domain, cfg.domain_params)
    env = domain.global_sim
    sim = planning_simulator(cfg, domain)
    timed = TimedSimulator(sim) if cfg.record_timing else None
    env_rng, plan_rng, fallback_rng = episode_streams(cfg, episode_index)

    state = env.sample_initial(env_rng)
    planner = Pomcp(timed or sim, cfg.planner, plan_rng)
    horizon = cfg.planner.horizon
    n_actions = env.action_count()
    rewards: list[float] = []
    actions: list[int] = []
    sim_times: list[float] = []
    sims: list[int] = []
    steps_to_go = horizon
    depleted = False
    for t in range(horizon):
        if depleted:
            action = int(fallback_rng.random() * n_actions)
        else:
            if timed is not None:
                timed.elapsed = 0.0
            action = planner.plan()
            sims.append(planner.last_simulations)
            sim_times.append(timed.elapsed if timed is not None else 0.0)
        state, obs, reward = env.step(state, action, env_rng)
        rewards.append(reward)
        actions.append(action)
        if trace is not None:
            trace(t, action, obs, reward, None if depleted else planner.last_simulations, depleted)
        if not depleted and t < horizon - 1:
            try:
                planner.observe(action, obs)
            except ParticleDepletion:
                depleted = True
                steps_to_go = horizon - (t + 1)
    return EpisodeMetrics(
        undiscounted_return=float(math.fsum(rewards)),
        discounted_return=discounted_return(rewards, cfg.planner.gamma),
        sim_time_per_step=math.fsum(sim_times) / len(sim_times),
        sims_per_step=sum(sims) / len(sims),
        steps_to_go_on_depletion=steps_to_go,
        wall_time=time.perf_counter() - wall_start if cfg.record_timing else 0.0,
        actions=actions,
        rewards=rewards,
    )


def mean_and_se(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and standard error (sample stddev / sqrt(n)); the error is 0 for n < 2."""
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def pooled_se(se_a: float, se_b: float) -> float:
    """Standard error of a difference of two independent means."""
    return math.hypot(se_a, se_b)


@dataclass
class AggregateRow:
    domain: str
    simulator: str
    grid_var: str
    grid_value: Any
    n_episodes: int
    means: dict[str, float]
    ses: dict[str, float]
    config: dict = field(default_factory=dict)
    error: str | None = None

    def csv_record(self) -> list[str]:
        rec = [self.domain, self.simulator, self.grid_var, _fmt(self.grid_value), str(self.n_episodes)]
        for metric in METRICS:
            rec += [_fmt(self.means[metric]), _fmt(self.ses[metric])]
        return rec


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def aggregate(cfg: ExperimentConfig, episodes: Sequence[EpisodeMetrics]) -> AggregateRow:
    means, ses = {}, {}
    for metric, attr in METRICS.items():
        means[metric], ses[metric] = mean_and_se([float(getattr(e, attr)) for e in episodes])
    return AggregateRow(cfg.domain, cfg.simulator, cfg.grid_var, cfg.grid_value, len(episodes),
                        means, ses, cfg.to_dict())


def _run_task(task):
    ci, cfg, episode = task
    try:
        return ci, episode, run_episode(cfg, episode), None
    except Exception as exc:  # reported per config, the grid keeps going
        return ci, episode, None, f"{type(exc).__name__}: {exc}"


def run_grid(configs: Sequence[ExperimentConfig], workers: int = 1, progress=None) -> list[AggregateRow]:
    """Run every episode of every config; one aggregate row per config, in config order.

    Results are keyed by (config index, episode index) and reduced in that
    order, so the output does not depend on worker scheduling.
    """
    tasks = [(ci, cfg, e) for ci, cfg in enumerate(configs) for e in range(cfg.n_episodes)]
    results: dict[tuple[int, int], EpisodeMetrics] = {}
    errors: dict[int, str] = {}
    if workers <= 1:
        stream = map(_run_task, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        stream = pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * workers)))
    try:
        for done, (ci, episode, metrics, err) in enumerate(stream, 1):
            if err is not None:
                errors.setdefault(ci, f"episode {episode}: {err}")
            else:
                results[(ci, episode)] = metrics
            if progress is not None:
                progress(done, len(tasks))
    finally:
        if workers > 1:
            pool.shutdown()
    rows = []
    for ci, cfg in enumerate(configs):
        if ci in errors:
            rows.append(AggregateRow(cfg.domain, cfg.simulator, cfg.grid_var, cfg.grid_value, 0,
                                     {}, {}, cfg.to_dict(), errors[ci]))
        else:
            rows.append(aggregate(cfg, [results[(ci, e)] for e in range(cfg.n_episodes)]))
    return rows


def results_csv(rows: Sequence[AggregateRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        if row.error is None:
            writer.writerow(row.csv_record())
    return buf.getvalue()


def emit_results(rows: Sequence[AggregateRow], out_dir: str | Path) -> list[Path]:
    """Write ``results.csv`` plus one SVG line plot per metric; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "results.csv"]
    written[0].write_text(results_csv(rows))
    good = [r for r in rows if r.error is None]
    for metric in METRICS:
        path = out / f"plot_{metric}.svg"
        path.write_text(svg_plot(good, metric))
        written.append(path)
    failed = [r for r in rows if r.error is not None]
    if failed:
        path = out / "errors.txt"
        path.write_text("".join(f"{r.domain}/{r.simulator}/{r.grid_var}={r.grid_value}: {r.error}\n" for r in failed))
        written.append(path)
    return written


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def svg_plot(rows: Sequence[AggregateRow], metric: str, width: int = 560, height: int = 360) -> str:
    """Mean ± standard error against the grid variable, one polyline per (domain, simulator)."""
    series: dict[tuple[str, str], list[AggregateRow]] = {}
    for row in rows:
        series.setdefault((row.domain, row.simulator), []).append(row)
    xs_raw = sorted({row.grid_value for row in rows}, key=_sort_key)
    numeric = all(isinstance(v, (int, float)) for v in xs_raw)
    x_pos = {v: (float(v) if numeric else float(i)) for i, v in enumerate(xs_raw)}
    points = [(x_pos[r.grid_value], r.means[metric], r.ses[metric]) for r in rows]
    left, right, top, bottom = 70, 150, 30, 50
    pw, ph = width - left - right, height - top - bottom
    if points:
        x_lo, x_hi = min(p[0] for p in points), max(p[0] for p in points)
        y_lo = min(p[1] - p[2] for p in points)
        y_hi = max(p[1] + p[2] for p in points)
    else:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0

    def sx(x):
        return left + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return top + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph

    xlabel = rows[0].grid_var if rows else ""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="12">{_esc(xlabel)}</text>',
        f'<text x="15" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 15 {top + ph / 2:.1f})">{_esc(metric)}</text>',
        f'<text x="{left - 5}" y="{sy(y_hi) + 4:.1f}" text-anchor="end" font-size="10">{y_hi:.4g}</text>',
        f'<text x="{left - 5}" y="{sy(y_lo) + 4:.1f}" text-anchor="end" font-size="10">{y_lo:.4g}</text>',
    ]
    for v in xs_raw:
        parts.append(f'<text x="{sx(x_pos[v]):.1f}" y="{top + ph + 15}" text-anchor="middle" '
                     f'font-size="10">{_esc(_fmt(v))}</text>')
    for k, ((domain, sim), srows) in enumerate(sorted(series.items())):
        colour = _PALETTE[k % len(_PALETTE)]
        srows = sorted(srows, key=lambda r: _sort_key(r.grid_value))
        coords = [(sx(x_pos[r.grid_value]), sy(r.means[metric]), r.ses[metric]) for r in srows]
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="'
                     + " ".join(f"{x:.1f},{y:.1f}" for x, y, _ in coords) + '"/>')
        for r, (x, y, _) in zip(srows, coords):
            y0, y1 = sy(r.means[metric] - r.ses[metric]), sy(r.means[metric] + r.ses[metric])
            parts.append(f'<line x1="{x:.1f}" y1="{y0:.1f}" x2="{x:.1f}" y2="{y1:.1f}" stroke="{colour}"/>')
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="2.5" fill="{colour}"/>')
        ly = top + 15 * k
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" stroke="{colour}" '
                     f'stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 35}" y="{ly + 4}" font-size="11">{_esc(domain)} {_esc(sim)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _sort_key(v):
    return (0, float(v), "") if isinstance(v, (int, float)) else (1, 0.0, str(v))


def _esc(text: str) -> str:
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
