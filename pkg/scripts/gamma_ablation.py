"""Loop MDP: IQ with the configured discount vs IQ trained with gamma = 0."""
from iqtab.experiments import LoopSetup, run_loop

if __name__ == "__main__":
    setup = LoopSetup()
    res = run_loop(setup)
    hi, lo = res["iq"]["mean"], res["iq_gamma0"]["mean"]
    print(f"iq gamma={setup.gamma}: {hi:.2f}")
    print(f"iq gamma=0:    {lo:.2f}")
    print(f"gap {hi - lo:.2f}")
