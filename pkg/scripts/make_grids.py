"""Write the experiment grid files read by ``iaplan bench``.

* ``gac_size.json``: simulation-count budget, scenario size on the x-axis
  (returns and simulation time per step).
* ``gac_coupling.json``: five agents, contested-chair probability on the x-axis.
* ``gtc_wallclock.json``: traffic grid, seconds per planning step on the x-axis.
"""
import argparse
import json
from pathlib import Path

GAC_PLANNER = {"ucb_c": 100.0, "gamma": 1.0, "budget_kind": "simulation_count", "budget_amount": 1000,
               "n_initial_particles": 1000}
GTC_PLANNER = {"ucb_c": 10.0, "gamma": 0.95, "effective_horizon": 18, "budget_kind": "wall_clock_seconds",
               "n_initial_particles": 1000}
SIMULATORS = ("global", "ials_learned", "ials_uniform")


def gac_entry(simulator, params, models):
    entry = {"simulator": simulator, "domain_params": params}
    if simulator == "ials_learned":
        entry["model_path"] = str(Path(models) / f"gac_n{params['n_agents']}_p{params.get('p', 0.0)}.json")
    return entry


def run():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--models", default="models", help="directory written by train_models.py")
    parser.add_argument("--out", default="grids")
    parser.add_argument("--episodes", type=int, default=500)
    parser.add_argument("--gtc-episodes", type=int, default=100)
    parser.add_argument("--budgets", default="1,2,4,8,16,32,48,64", help="seconds per step for the traffic grid")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    models = Path(args.models).resolve()

    size = {"defaults": {"domain": "gac", "n_episodes": args.episodes, "grid_var": "n_agents", "planner": GAC_PLANNER},
            "configs": [gac_entry(s, {"n_agents": n}, models) for n in (5, 9, 17, 33, 65, 129) for s in SIMULATORS]}
    coupling = {"defaults": {"domain": "gac", "n_episodes": args.episodes, "grid_var": "p", "planner": GAC_PLANNER},
                "configs": [gac_entry(s, {"n_agents": 5, "p": p}, models) for p in (0.0, 0.5, 1.0)
                            for s in SIMULATORS]}
    traffic = {"defaults": {"domain": "gtc", "n_episodes": args.gtc_episodes, "grid_var": "budget_amount"},
               "configs": []}
    for seconds in (float(b) for b in args.budgets.split(",")):
        for s in SIMULATORS:
            entry = {"simulator": s, "planner": dict(GTC_PLANNER, budget_amount=seconds)}
            if s == "ials_learned":
                entry["model_path"] = str(models / "gtc.json")
            traffic["configs"].append(entry)
    for name, doc in (("gac_size", size), ("gac_coupling", coupling), ("gtc_wallclock", traffic)):
        (out / f"{name}.json").write_text(json.dumps(doc, indent=2) + "\n")
        print(f"wrote {out / name}.json with {len(doc['configs'])} configs")


if __name__ == "__main__":
    run()
