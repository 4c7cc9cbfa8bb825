"""Tabular inverse soft-Q imitation learning with exact soft Bellman machinery."""
__version__ = "0.1.0"

from .mdp import (DemoDataset, MdpError, TabularMdp, compute_occupancy, empirical_occupancy,
                  sample_trajectories, total_variation)
from .soft import ConvergenceError, soft_policy, soft_q_iteration, soft_value_star
from .divergences import DivergenceSpec
from .iq import IqConfig, IqResult, iq_learn, state_only_learn
from .baselines import MaxEntIrlConfig, bc_tabular, maxent_irl, sqil_tabular
from .envs import build_env, make_gridworld, make_loop_mdp, make_random_mdp
from .evaluation import MetricsReport, rollout

__all__ = [
    "__version__", "DemoDataset", "MdpError", "TabularMdp", "compute_occupancy",
    "empirical_occupancy", "sample_trajectories", "total_variation", "ConvergenceError",
    "soft_policy", "soft_q_iteration", "soft_value_star", "DivergenceSpec", "IqConfig",
    "IqResult", "iq_learn", "state_only_learn", "MaxEntIrlConfig", "bc_tabular", "maxent_irl",
    "sqil_tabular", "build_env", "make_gridworld", "make_loop_mdp", "make_random_mdp",
    "MetricsReport", "rollout",
]
