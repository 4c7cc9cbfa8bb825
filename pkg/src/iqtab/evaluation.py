"""Seeded policy rollouts, returns, and reward-correlation metrics."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .mdp import DemoDataset, TabularMdp


def worker_count(n_items: int) -> int:
    """Pool size: ``IQTAB_THREADS`` if set, else the CPU count, capped by the work."""
    env = os.environ.get("IQTAB_THREADS")
    n = int(env) if env else (os.cpu_count() or 1)
    if n < 1:
        raise ValueError("IQTAB_THREADS must be >= 1")
    return max(1, min(n, n_items))


def parallel_map(fn: Callable, items: Sequence) -> list:
    """``[fn(x) for x in items]`` on a thread pool; results keep input order.

    Every task carries its own seed, so the output does not depend on the
    number of workers.
    """
    items = list(items)
    n = worker_count(len(items))
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def modal_action(demos: DemoDataset, n_actions: int) -> int:
    """Most frequently demonstrated action (lowest id on ties)."""
    return int(np.argmax(np.bincount(demos.a, minlength=n_actions)))


def greedy_actions(policy: np.ndarray, preferred: Optional[Union[int, np.ndarray]] = None,
                   tie_rtol: float = 1e-9) -> np.ndarray:
    """argmax pi(.|s) per state.

    Ties (within ``tie_rtol`` of the row maximum) go to ``preferred`` when it is
    among the maximizers, otherwise to the lowest action id.
    """
    policy = np.asarray(policy, dtype=float)
    top = policy.max(axis=1, keepdims=True)
    ties = policy >= top * (1.0 - tie_rtol)
    choice = np.argmax(ties, axis=1)
    if preferred is not None:
        pref = np.broadcast_to(np.asarray(preferred, dtype=int), choice.shape)
        ok = ties[np.arange(len(choice)), pref]
        choice = np.where(ok, pref, choice)
    return choice


def greedy_policy(policy: np.ndarray, preferred=None, tie_rtol: float = 1e-9) -> np.ndarray:
    acts = greedy_actions(policy, preferred, tie_rtol)
    out = np.zeros_like(np.asarray(policy, dtype=float))
    out[np.arange(len(acts)), acts] = 1.0
    return out


@dataclass
class Rollouts:
    states: np.ndarray      # (n, H)
    actions: np.ndarray     # (n, H)
    next_states: np.ndarray  # (n, H)
    rewards: np.ndarray     # (n, H) true rewards, NaN when unknown

    @property
    def returns(self) -> np.ndarray:
        return self.rewards.sum(axis=1)


def rollout(mdp: TabularMdp, policy: np.ndarray, n_rollouts: int = 300, horizon: int = 100,
            seed: int = 0, start_states: Optional[np.ndarray] = None) -> Rollouts:
    """Vectorized rollouts of a (possibly stochastic) policy; deterministic per seed."""
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    rng = np.random.default_rng(np.uint64(seed))
    S = mdp.n_states
    pi_cdf = np.cumsum(policy, axis=1)
    P_cdf = np.cumsum(mdp.transition, axis=2)
    if start_states is None:
        s = np.minimum(np.searchsorted(np.cumsum(mdp.p0), rng.random(n_rollouts), side="right"), S - 1)
    else:
        s = np.asarray(start_states, dtype=np.int64).copy()
        n_rollouts = len(s)
    states = np.empty((n_rollouts, horizon), dtype=np.int64)
    actions = np.empty_like(states)
    nxt = np.empty_like(states)
    A = mdp.n_actions
    for t in range(horizon):
        u = rng.random((2, n_rollouts))
        a = np.minimum((pi_cdf[s] < u[0][:, None]).sum(axis=1), A - 1)
        sn = np.minimum((P_cdf[s, a] < u[1][:, None]).sum(axis=1), S - 1)
        states[:, t], actions[:, t], nxt[:, t] = s, a, sn
        s = sn
    if mdp.true_reward is not None:
        rewards = mdp.true_reward[states, actions]
    else:
        rewards = np.full(states.shape, np.nan)
    return Rollouts(states, actions, nxt, rewards)


def pearson(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    """Pearson correlation, or None when either side is constant."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size < 2 or np.std(x) == 0 or np.std(y) == 0:
        return None
    return float(np.clip(np.corrcoef(x, y)[0, 1], -1.0, 1.0))


def transition_reward_correlation(ro: Rollouts, reward_fn: Callable, per_episode: bool = False
                                  ) -> Optional[float]:
    """Correlation of recovered r(s, a, s') with true rewards along rollouts."""
    rec = reward_fn(ro.states, ro.actions, ro.next_states)
    if np.isnan(ro.rewards).any():
        return None
    if per_episode:
        return pearson(rec.sum(axis=1), ro.rewards.sum(axis=1))
    return pearson(rec, ro.rewards)


@dataclass
class MetricsReport:
    mean_return: float
    std_return: float
    pearson_reward_correlation: Optional[float] = None
    occupancy_tv_to_expert: Optional[float] = None
    wall_clock_seconds: float = 0.0
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        p = self.pearson_reward_correlation
        if p is not None and not -1.0 <= p <= 1.0:
            raise ValueError("pearson correlation outside [-1, 1]")
        tv = self.occupancy_tv_to_expert
        if tv is not None and not -1e-12 <= tv <= 1.0 + 1e-12:
            raise ValueError("total variation outside [0, 1]")

    def to_json(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None
        return d

    @classmethod
    def from_json(cls, d: dict) -> "MetricsReport":
        return cls(**d)
