"""Desk-scale experiments shared by ``scripts/`` and the acceptance tests.

Each ``run_*`` function is deterministic for its setup and returns a plain
dict of numbers so callers can print, gate or serialize it.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .baselines import MaxEntIrlConfig, bc_tabular, maxent_irl, sqil_tabular
from .envs import grid_goal_state, make_gridworld, make_loop_mdp
from .evaluation import (greedy_policy, modal_action, parallel_map, pearson, rollout,
                         transition_reward_correlation)
from .iq import IqConfig, iq_learn, state_only_learn, state_reward, transition_rewards
from .mdp import (compute_occupancy, empirical_occupancy, sample_trajectories,
                  total_variation)
from .soft import soft_optimal_policy, soft_policy

LOOP_IQ = IqConfig(divergence="chi2", estimator_mode="mixed_telescoped", optimizer="lbfgs")
GRID_IQ = IqConfig(divergence="chi2", alpha=1.0, estimator_mode="expert_telescoped",
                   optimizer="lbfgs")


# -- Loop MDP -----------------------------------------------------------------------

@dataclass(frozen=True)
class LoopSetup:
    p: float = 0.5
    gamma: float = 0.99
    expert_temperature: float = 0.05
    demo_horizon: int = 100
    eval_horizon: int = 100
    n_rollouts: int = 300
    seeds: Sequence[int] = (0, 1, 2, 3, 4)
    bc_smoothing: float = 1e-3
    iq: IqConfig = LOOP_IQ


def loop_demos(setup: LoopSetup, seed: int):
    """One expert episode that never visits s2 (rejection-filtered)."""
    mdp = make_loop_mdp(setup.p, setup.gamma)
    _, pi = soft_optimal_policy(mdp, mdp.true_reward, setup.expert_temperature)
    demos = sample_trajectories(mdp, pi, 1, setup.demo_horizon, seed=seed, accept={0, 1},
                                check_horizon=False)
    return mdp, pi, demos


def _loop_one(setup: LoopSetup, seed: int) -> dict:
    mdp, _, demos = loop_demos(setup, seed)
    occ = empirical_occupancy(demos, mdp)
    pref = modal_action(demos, mdp.n_actions)
    policies = {
        "bc": bc_tabular(demos, mdp, setup.bc_smoothing),
        "sqil": soft_policy(sqil_tabular(mdp, demos), 1.0),
        "iq": iq_learn(mdp, occ, replace(setup.iq, seed=seed)).policy,
        "iq_gamma0": iq_learn(mdp, occ, replace(setup.iq, seed=seed, gamma_override=0.0)).policy,
    }
    return {name: float(rollout(mdp, greedy_policy(pol, pref), setup.n_rollouts,
                                setup.eval_horizon, seed=seed).returns.mean())
            for name, pol in policies.items()}


def run_loop(setup: LoopSetup = LoopSetup()) -> dict:
    """Greedy-rollout returns per method, mean and std over training seeds."""
    t0 = time.perf_counter()
    per_seed = parallel_map(lambda s: _loop_one(setup, s), list(setup.seeds))
    out = {"per_seed": per_seed, "seconds": time.perf_counter() - t0}
    for name in per_seed[0]:
        vals = np.array([r[name] for r in per_seed])
        out[name] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out


# -- GridWorld ------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSetup:
    width: int = 5
    height: int = 5
    gamma: float = 0.9
    expert_temperature: float = 0.05
    n_demos: int = 30
    demo_horizon: int = 100
    seed: int = 0
    n_rollouts: int = 300
    eval_horizon: int = 100
    iq: IqConfig = GRID_IQ
    maxent: MaxEntIrlConfig = field(default_factory=lambda: MaxEntIrlConfig(learning_rate=1.0))


@dataclass
class GridData:
    mdp: object
    expert_policy: np.ndarray
    expert_occ: np.ndarray
    demos: object
    demo_occ: np.ndarray


def grid_data(setup: GridSetup = GridSetup()) -> GridData:
    mdp = make_gridworld(setup.width, setup.height, goal=(setup.width - 1, setup.height - 1),
                         gamma=setup.gamma)
    _, pi = soft_optimal_policy(mdp, mdp.true_reward, setup.expert_temperature)
    demos = sample_trajectories(mdp, pi, setup.n_demos, setup.demo_horizon, seed=setup.seed)
    return GridData(mdp, pi, compute_occupancy(mdp, pi), demos, empirical_occupancy(demos, mdp))


def occupancy_report(mdp, policy: np.ndarray, expert_occ: np.ndarray) -> dict:
    occ = compute_occupancy(mdp, policy)
    return {"state_tv": total_variation(occ.sum(axis=1), expert_occ.sum(axis=1)),
            "state_action_tv": total_variation(occ, expert_occ)}


def run_grid_comparison(setup: GridSetup = GridSetup(), data: Optional[GridData] = None) -> dict:
    """IQ and MaxEnt IRL fitted to the same demos: fit, speed and reward agreement."""
    data = data or grid_data(setup)
    mdp = data.mdp
    iq = iq_learn(mdp, data.demo_occ, setup.iq)
    me = maxent_irl(mdp, data.demo_occ, setup.maxent)
    iq_state_r = state_reward(mdp, iq.q, setup.iq.temperature)
    return {
        "iq": {**occupancy_report(mdp, iq.policy, data.expert_occ),
               "seconds": iq.wall_clock_seconds, "iterations": iq.iterations,
               "converged": iq.converged},
        "maxent_irl": {**occupancy_report(mdp, me.policy, data.expert_occ),
                       "seconds": me.wall_clock_seconds, "iterations": me.iterations,
                       "converged": me.converged},
        "speedup": me.wall_clock_seconds / max(iq.wall_clock_seconds, 1e-12),
        "state_reward_pearson": pearson(iq_state_r, me.reward_s),
        "iq_state_reward": iq_state_r.tolist(),
        "maxent_state_reward": me.reward_s.tolist(),
    }


def run_reward_correlation(setup: GridSetup = GridSetup(), data: Optional[GridData] = None,
                           per_episode: bool = False) -> dict:
    """Recovered vs true per-transition rewards along greedy rollouts of the learned policy."""
    data = data or grid_data(setup)
    res = iq_learn(data.mdp, data.demo_occ, setup.iq)
    pol = greedy_policy(res.policy, modal_action(data.demos, data.mdp.n_actions))
    ro = rollout(data.mdp, pol, setup.n_rollouts, setup.eval_horizon, seed=setup.seed)
    fn = lambda s, a, sn: transition_rewards(res, s, a, sn)  # noqa: E731
    return {"pearson": transition_reward_correlation(ro, fn, per_episode),
            "mean_return": float(ro.returns.mean())}


def run_divergence_ablation(setup: GridSetup = GridSetup(),
                            divergences: Sequence[str] = ("chi2", "js", "hellinger", "fkl"),
                            data: Optional[GridData] = None) -> dict:
    data = data or grid_data(setup)
    out = {}
    for name in divergences:
        cfg = replace(setup.iq, divergence=name, alpha=setup.iq.alpha if name == "chi2" else None,
                      init="auto")
        res = iq_learn(data.mdp, data.demo_occ, cfg)
        out[name] = {**occupancy_report(data.mdp, res.policy, data.expert_occ),
                     "converged": res.converged, "n_clamped": res.n_clamped}
    return out


STATE_ONLY_IQ = IqConfig(divergence="chi2", alpha=5.0, optimizer="lbfgs", actor_critic=True)


def run_state_only(setup: GridSetup = GridSetup(), data: Optional[GridData] = None,
                   cfg: IqConfig = STATE_ONLY_IQ, smoothing: float = 1e-3,
                   reach_horizon: int = 20) -> dict:
    """Learn from the expert state marginal only; greedy rollout from every start cell."""
    data = data or grid_data(setup)
    mdp = data.mdp
    res = state_only_learn(mdp, data.demo_occ.sum(axis=1), cfg, smoothing=smoothing)
    goal = grid_goal_state(mdp)
    ro = rollout(mdp, greedy_policy(res.policy), horizon=reach_horizon,
                 start_states=np.arange(mdp.n_states), seed=setup.seed)
    reached = (ro.states == goal).any(axis=1) | (ro.next_states == goal).any(axis=1)
    return {"reach_fraction": float(reached.mean()),
            **occupancy_report(mdp, res.policy, data.expert_occ),
            "converged": res.converged, "seconds": res.wall_clock_seconds}
