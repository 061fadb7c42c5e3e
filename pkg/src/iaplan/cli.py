"""Command-line entry point: ``iaplan {collect,train,oracle,plan,bench}``.

Exit status is 0 on success, 1 for configuration errors and 2 for failures
while running.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _ConfigProblem(Exception):
    pass


def _parse_params(pairs) -> dict:
    params = {}
    for pair in pairs or ():
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise _ConfigProblem(f"expected key=value, got {pair!r}")
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw
    return params


def _domain(name: str, params: dict):
    from iaplan.domains import build
    try:
        return build(name, params)
    except (TypeError, ValueError) as exc:
        raise _ConfigProblem(f"bad {name} parameters: {exc}") from exc


def cmd_collect(args) -> int:
    from iaplan.core import RngStream
    from iaplan.influence import collect_dataset

    params = _parse_params(args.param)
    if args.horizon is not None:
        params["horizon"] = args.horizon
    domain = _domain(args.domain, params)
    if args.episodes < 0:
        raise _ConfigProblem("--episodes must be non-negative")
    dataset = collect_dataset(domain, args.episodes, RngStream(args.seed))
    dataset.meta.update(domain_params=params, seed=args.seed)
    dataset.save(args.out)
    print(f"wrote {len(dataset)} episodes x {dataset.seq_len} steps to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from iaplan.influence import InfluenceDataset, TrainConfig, train

    if not Path(args.dataset).exists():
        raise _ConfigProblem(f"dataset {args.dataset} not found")
    try:
        cfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch, epochs=args.epochs,
                          weight_decay=args.weight_decay, optimizer=args.optimizer, grad_clip_norm=args.clip,
                          seed=args.seed, cell_kind=args.cell, hidden_width=args.hidden, head_kind=args.head)
    except ValueError as exc:
        raise _ConfigProblem(str(exc)) from exc
    dataset = InfluenceDataset.load(args.dataset)
    try:
        model, curve = train(dataset, cfg, log_every=args.log_every)
    except ValueError as exc:
        raise _ConfigProblem(str(exc)) from exc
    model.meta["dataset"] = dict(dataset.meta)
    model.save(args.out)
    if args.curve:
        curve.to_csv(args.curve)
    print(f"best validation cross-entropy {model.meta['val_ce']:.5f} at epoch {model.meta['best_epoch']}; "
          f"model written to {args.out}")
    return EXIT_OK


def _parse_history(text: str):
    steps = []
    for token in filter(None, (t.strip() for t in text.split(","))):
        if len(token) != 2 or token[0].upper() not in "LR" or token[1] not in "01":
            raise _ConfigProblem(f"history steps look like L1 or R0, got {token!r}")
        steps.append((0 if token[0].upper() == "L" else 1, int(token[1])))
    return tuple(steps)


def cmd_oracle(args) -> int:
    from iaplan.domains.gac import GacConfig
    from iaplan.influence import ExactGacInfluence, reachable_histories

    try:
        cfg = GacConfig(n_agents=args.n_agents, p=args.p, obs_flip_prob=args.obs_flip_prob, horizon=args.horizon)
        oracle = ExactGacInfluence(cfg)
    except ValueError as exc:
        raise _ConfigProblem(str(exc)) from exc
    if args.length is not None:
        histories = reachable_histories(cfg, args.length, oracle)
    else:
        histories = [_parse_history(args.history or "")]
    for history in histories:
        try:
            table = oracle.table(history)
        except ValueError as exc:
            raise _ConfigProblem(str(exc)) from exc
        label = ",".join(("L" if a == 0 else "R") + str(x) for a, x in history) or "(empty)"
        print(json.dumps({"history": label, "p_contest": table.round(12).tolist()}))
    return EXIT_OK


def _load_configs(path: str):
    from iaplan.bench import ConfigError, ExperimentConfig, load_grid

    if not Path(path).exists():
        raise _ConfigProblem(f"config {path} not found")
    try:
        doc = json.loads(Path(path).read_text())
        if isinstance(doc, dict) and "configs" not in doc:
            raw = dict(doc)
            if raw.get("model_path") and not Path(raw["model_path"]).is_absolute():
                raw["model_path"] = str(Path(path).parent / raw["model_path"])
            return [ExperimentConfig.from_dict(raw)]
        return load_grid(path)
    except (ConfigError, json.JSONDecodeError) as exc:
        raise _ConfigProblem(str(exc)) from exc


def _check_models(configs):
    for cfg in configs:
        if cfg.model_path and not Path(cfg.model_path).exists():
            raise _ConfigProblem(f"model {cfg.model_path} not found")


def cmd_plan(args) -> int:
    import dataclasses

    from iaplan.bench import run_episode

    configs = _load_configs(args.config)
    cfg = configs[0]
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    _check_models([cfg])

    def trace(t, action, obs, reward, sims, depleted):
        mode = "random (depleted)" if depleted else f"{sims} simulations"
        print(f"t={t:3d} action={action} observation={obs:2d} reward={reward:g} [{mode}]")

    metrics = run_episode(cfg, args.episode, trace=trace)
    print(f"return={metrics.undiscounted_return:g} discounted={metrics.discounted_return:.6g} "
          f"sims/step={metrics.sims_per_step:.1f} sim_time/step={metrics.sim_time_per_step:.4g}s "
          f"steps_to_go_on_depletion={metrics.steps_to_go_on_depletion}")
    return EXIT_OK


def cmd_bench(args) -> int:
    import dataclasses

    from iaplan.bench import emit_results, run_grid

    configs = _load_configs(args.config)
    if args.no_timing:
        configs = [dataclasses.replace(c, record_timing=False) for c in configs]
    _check_models(configs)
    if args.workers < 1:
        raise _ConfigProblem("--workers must be at least 1")

    def progress(done, total):
        if args.verbose:
            print(f"\r{done}/{total} episodes", end="", file=sys.stderr, flush=True)

    rows = run_grid(configs, workers=args.workers, progress=progress)
    if args.verbose:
        print(file=sys.stderr)
    paths = emit_results(rows, args.out)
    failed = [r for r in rows if r.error is not None]
    for row in failed:
        print(f"config {row.domain}/{row.simulator} {row.grid_var}={row.grid_value} failed: {row.error}",
              file=sys.stderr)
    print(f"wrote {', '.join(str(p) for p in paths)}")
    return EXIT_RUNTIME if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iaplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="roll out a uniform policy in a global simulator and record influence data")
    p.add_argument("--domain", choices=("gac", "gtc"), required=True)
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="domain parameter, repeatable")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="fit a recurrent influence predictor")
    p.add_argument("--dataset", required=True)
    p.add_argument("--cell", choices=("gru", "elman"), default="gru")
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--head", choices=("bernoulli", "softmax"), default="bernoulli")
    p.add_argument("--lr", type=float, default=0.0005)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--epochs", type=int, default=8000)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="sgd")
    p.add_argument("--clip", type=float, default=5.0, help="global gradient-norm clip (0 disables)")
    p.add_argument("--out", required=True)
    p.add_argument("--curve", help="optional learning-curve CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("oracle", help="exact influence tables for small Grab A Chair games")
    p.add_argument("--n-agents", type=int, default=3)
    p.add_argument("--p", type=float, default=0.0)
    p.add_argument("--obs-flip-prob", type=float, default=0.2)
    p.add_argument("--horizon", type=int, default=3)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--history", help="comma-separated steps such as L1,R0")
    group.add_argument("--length", type=int, help="print every reachable history of this length")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("plan", help="run one episode and print a step-by-step trace")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--episode", type=int, default=0)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench", help="run an experiment grid and write results.csv plus plots")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--no-timing", action="store_true", help="skip timers so every column is reproducible")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except _ConfigProblem as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything else is a failure while running
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
