"""5x5 GridWorld: IQ occupancy fit under different divergences."""
from iqtab.experiments import run_divergence_ablation

if __name__ == "__main__":
    for name, r in run_divergence_ablation().items():
        print(f"{name:10s} state TV {r['state_tv']:.4f}  state-action TV {r['state_action_tv']:.4f}"
              f"  converged={r['converged']}")
