"""Collect uniform-policy datasets and fit the influence predictors used by the experiment grids.

Writes ``<out>/gac_n{N}_p{p}.json`` and ``<out>/gtc.json``. Re-running skips
models that already exist.
"""
import argparse
from pathlib import Path

from iaplan.cli import main

GAC_SIZES = (5, 9, 17, 33, 65, 129)
GAC_COUPLING = (0.0, 0.5, 1.0)


def fit(domain, out, params, lr, epochs, seed):
    model = out / (f"{domain}.json" if not params else
                   f"{domain}_n{params['n_agents']}_p{params.get('p', 0.0)}.json")
    if model.exists():
        return
    data = out / (model.stem + ".jsonl")
    args = ["collect", "--domain", domain, "--episodes", "1000", "--out", str(data), "--seed", str(seed)]
    for key, value in params.items():
        args += ["--param", f"{key}={value}"]
    if main(args) != 0:
        raise SystemExit(f"collect failed for {model}")
    if main(["train", "--dataset", str(data), "--optimizer", "adam", "--lr", str(lr), "--epochs", str(epochs),
             "--weight-decay", "1e-5", "--out", str(model), "--curve", str(out / (model.stem + "_curve.csv")),
             "--seed", str(seed)]) != 0:
        raise SystemExit(f"training failed for {model}")


def run():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="models")
    parser.add_argument("--epochs", type=int, default=4000)
    parser.add_argument("--seed", type=int, default=11)
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for n in GAC_SIZES:
        fit("gac", out, {"n_agents": n}, 0.0005, args.epochs, args.seed)
    for p in GAC_COUPLING[1:]:
        fit("gac", out, {"n_agents": 5, "p": p}, 0.0005, args.epochs, args.seed)
    fit("gtc", out, {}, 0.001, args.epochs // 2, args.seed)


if __name__ == "__main__":
    run()
