"""Comparison methods: behavioral cloning, SQIL and classical MaxEnt IRL."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .mdp import DemoDataset, TabularMdp, compute_occupancy, total_variation
from .soft import ConvergenceError, soft_bellman_optimal, soft_policy, soft_q_iteration

METHODS = ("iq", "bc", "sqil", "maxent_irl")


def bc_tabular(demos: DemoDataset, mdp: TabularMdp, smoothing: float = 0.0) -> np.ndarray:
    """pi(a|s) = (n(s,a) + k) / (n(s) + k |A|); unvisited states are uniform."""
    if len(demos) == 0:
        raise ValueError("empty demonstration dataset")
    demos.validate(mdp)
    counts = np.zeros((mdp.n_states, mdp.n_actions))
    np.add.at(counts, (demos.s, demos.a), 1.0)
    counts += smoothing
    totals = counts.sum(axis=1, keepdims=True)
    uniform = np.full_like(counts, 1.0 / mdp.n_actions)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), uniform)


def sqil_reward(demos: DemoDataset, mdp: TabularMdp) -> np.ndarray:
    demos.validate(mdp)
    r = np.zeros((mdp.n_states, mdp.n_actions))
    r[demos.s, demos.a] = 1.0
    return r


def sqil_tabular(mdp: TabularMdp, demos: DemoDataset, temperature: float = 1.0,
                 tol: float = 1e-10, max_iters: int = 100_000) -> np.ndarray:
    """Soft Q-iteration on the 1/0 indicator of demonstrated (s, a) pairs.

    Exact-dynamics idealization: no replay buffer, true transition expectations.
    """
    return soft_q_iteration(mdp, sqil_reward(demos, mdp), temperature, tol, max_iters)


@dataclass(frozen=True)
class MaxEntIrlConfig:
    learning_rate: float = 1.0
    max_outer_iters: int = 5_000
    inner_tol: float = 1e-8
    tv_tol: float = 1e-3
    # stop once the best visitation TV improved by less than stall_tol
    # over the last stall_window outer steps (0 disables)
    stall_window: int = 50
    stall_tol: float = 1e-4
    smoothing: float = 0.0
    temperature: float = 1.0
    state_action_features: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "inner_tol", "tv_tol", "temperature"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.smoothing < 0:
            raise ValueError("smoothing must be nonnegative")


@dataclass
class MaxEntIrlResult:
    reward_s: np.ndarray
    reward_sa: np.ndarray
    q: np.ndarray
    policy: np.ndarray
    converged: bool
    iterations: int
    backward_passes: int
    forward_passes: int
    backward_sweeps: int
    wall_clock_seconds: float
    tv_trace: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "reward_s": self.reward_s.tolist(), "reward_sa": self.reward_sa.tolist(),
            "q": self.q.tolist(), "policy": self.policy.tolist(), "converged": self.converged,
            "iterations": self.iterations, "backward_passes": self.backward_passes,
            "forward_passes": self.forward_passes, "backward_sweeps": self.backward_sweeps,
            "wall_clock_seconds": self.wall_clock_seconds,
            "tv_trace": [float(x) for x in self.tv_trace],
        }


def maxent_irl(mdp: TabularMdp, expert_occ: np.ndarray,
               cfg: MaxEntIrlConfig = MaxEntIrlConfig()) -> MaxEntIrlResult:
    """MaxEnt IRL with one-hot state (or state-action) reward features.

    Every outer step runs a backward pass (soft value iteration under the
    current reward, from scratch) and a forward pass (exact visitation of the
    induced policy); the reward gradient is expert minus learner visitation.
    Stops when that visitation TV distance drops below ``cfg.tv_tol``
    (converged) or stalls (not converged); the best iterate is returned.
    """
    t0 = time.perf_counter()
    expert_occ = np.asarray(expert_occ, dtype=float)
    if cfg.smoothing:
        expert_occ = expert_occ + cfg.smoothing
        expert_occ = expert_occ / expert_occ.sum()
    sa = cfg.state_action_features
    target = expert_occ if sa else expert_occ.sum(axis=1)
    theta = np.zeros_like(target)
    tau = cfg.temperature
    sweeps = [0]

    def backward(theta):
        r = theta if sa else np.repeat(theta[:, None], mdp.n_actions, axis=1)
        q = _soft_vi_counted(mdp, r, tau, cfg.inner_tol, sweeps)
        return r, q, soft_policy(q, tau)

    best = None
    lr = cfg.learning_rate
    tv_trace = []
    converged = False
    it = 0
    for it in range(1, cfg.max_outer_iters + 1):
        r, q, pi = backward(theta)
        occ = compute_occupancy(mdp, pi)
        visit = occ if sa else occ.sum(axis=1)
        grad = target - visit
        tv = 0.5 * float(np.abs(grad).sum())
        tv_trace.append(tv)
        if best is None or tv < best[0]:
            best = (tv, theta.copy(), r, q, pi, grad)
        elif tv > tv_trace[-2]:
            # overshoot: restart from the best iterate with half the step
            lr *= 0.5
            grad = best[5]
            theta = best[1]
        if tv <= cfg.tv_tol:
            converged = True
            break
        w = cfg.stall_window
        if w and it > w and min(tv_trace[:-w]) - best[0] < cfg.stall_tol:
            break
        # unnormalized visitation gradient
        theta = theta + lr * grad / (1.0 - mdp.gamma)
    _, theta, r, q, pi, _ = best
    reward_s = theta if not sa else (pi * theta).sum(axis=1)
    return MaxEntIrlResult(reward_s, r, q, pi, converged, it, it, it, sweeps[0],
                           time.perf_counter() - t0, tv_trace)


def _soft_vi_counted(mdp, reward, tau, tol, counter):
    q = np.zeros_like(reward)
    for _ in range(1_000_000):
        q_new = soft_bellman_optimal(mdp, q, reward, tau)
        counter[0] += 1
        if np.abs(q_new - q).max() <= tol:
            return q_new
        q = q_new
    raise ConvergenceError("soft value iteration did not converge")


def occupancy_tv(mdp: TabularMdp, policy: np.ndarray, expert_occ: np.ndarray) -> float:
    return total_variation(compute_occupancy(mdp, policy), expert_occ)
