"""Loop MDP: BC vs SQIL vs IQ greedy-rollout returns over five seeds."""
import json

from iqtab.experiments import LoopSetup, run_loop

if __name__ == "__main__":
    res = run_loop(LoopSetup())
    for name in ("bc", "sqil", "iq"):
        print(f"{name:5s} {res[name]['mean']:7.2f} +- {res[name]['std']:.2f}")
    print(f"total {res['seconds']:.2f}s")
    print(json.dumps(res["per_seed"]))
