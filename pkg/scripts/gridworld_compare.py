"""5x5 GridWorld: IQ vs MaxEnt IRL (occupancy fit, wall clock, reward agreement)."""
import sys

import numpy as np

from iqtab.envs import grid_state_table
from iqtab.experiments import grid_data, run_grid_comparison, run_reward_correlation

if __name__ == "__main__":
    per_episode = "--per-episode" in sys.argv
    data = grid_data()
    res = run_grid_comparison(data=data)
    for m in ("iq", "maxent_irl"):
        r = res[m]
        print(f"{m:10s} state TV {r['state_tv']:.4f}  state-action TV {r['state_action_tv']:.4f}"
              f"  {r['seconds']:.3f}s  iters {r['iterations']}")
    print(f"speedup {res['speedup']:.1f}x, state-reward pearson {res['state_reward_pearson']:.3f}")
    np.set_printoptions(precision=3, suppress=True)
    print("IQ state reward:\n", grid_state_table(data.mdp, np.array(res["iq_state_reward"])))
    print("MaxEnt state reward:\n", grid_state_table(data.mdp, np.array(res["maxent_state_reward"])))
    corr = run_reward_correlation(data=data, per_episode=per_episode)
    print(f"recovered vs true reward pearson ({'per-episode' if per_episode else 'per-step'}): "
          f"{corr['pearson']}")
