"""5x5 GridWorld: IQ from expert state visitation only (no actions)."""
from iqtab.experiments import run_state_only

if __name__ == "__main__":
    r = run_state_only()
    print(f"goal reached from {100 * r['reach_fraction']:.0f}% of start cells within 20 steps")
    print(f"state TV {r['state_tv']:.4f}, converged={r['converged']}, {r['seconds']:.2f}s")
