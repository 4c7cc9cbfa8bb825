"""Max-entropy RL on tabular MDPs: soft values, energy-based policies and the
forward / inverse soft Bellman operators.

All tables are numpy arrays: Q and rewards are ``(S, A)``, values ``(S,)``.
``temperature`` scales every entropy / log-policy term uniformly.
"""
from __future__ import annotations

import numpy as np

from .mdp import TabularMdp

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 100_000


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual=None, result=None):
        super().__init__(msg)
        self.residual = residual
        self.result = result


def soft_value_star(q: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """V*(s) = tau * logsumexp(Q(s, .) / tau), max-shifted."""
    q = np.asarray(q, dtype=float)
    m = q.max(axis=-1)
    return m + temperature * np.log(np.exp((q - m[..., None]) / temperature).sum(axis=-1))


def soft_policy(q: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    z = np.exp((q - q.max(axis=-1, keepdims=True)) / temperature)
    pi = z / z.sum(axis=-1, keepdims=True)
    # keep strictly positive so log pi stays finite
    return np.maximum(pi, np.finfo(float).tiny)


def _xlogx_safe(policy: np.ndarray) -> np.ndarray:
    """log pi where pi > 0, 0 elsewhere (used as pi * log pi = 0)."""
    with np.errstate(divide="ignore"):
        return np.where(policy > 0, np.log(np.where(policy > 0, policy, 1.0)), 0.0)


def policy_value(q: np.ndarray, policy: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """V^pi(s) = E_{a~pi}[Q(s,a) - tau log pi(a|s)]; zero-probability actions drop out."""
    policy = np.asarray(policy, dtype=float)
    q = np.asarray(q, dtype=float)
    terms = np.where(policy > 0, policy * (q - temperature * _xlogx_safe(policy)), 0.0)
    return terms.sum(axis=-1)


def soft_bellman_optimal(mdp: TabularMdp, q: np.ndarray, reward: np.ndarray,
                         temperature: float = 1.0) -> np.ndarray:
    return reward + mdp.gamma * mdp.expect_next(soft_value_star(q, temperature))


def soft_bellman_policy(mdp: TabularMdp, q: np.ndarray, reward: np.ndarray,
                        policy: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    return reward + mdp.gamma * mdp.expect_next(policy_value(q, policy, temperature))


def _fixed_point(step, q0, tol, max_iters, what):
    q = q0
    resid = np.inf
    for _ in range(max_iters):
        q_new = step(q)
        resid = np.abs(q_new - q).max()
        q = q_new
        if resid <= tol:
            # residual of the returned table under the map
            final = np.abs(step(q) - q).max()
            if final <= tol:
                return q
            resid = final
    raise ConvergenceError(f"{what}: residual {resid:.3g} after {max_iters} iterations",
                           residual=resid, result=q)


def soft_q_iteration(mdp: TabularMdp, reward: np.ndarray, temperature: float = 1.0,
                     tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
                     q0: np.ndarray | None = None) -> np.ndarray:
    """Fixed point of Q <- r + gamma E_{s'}[V*(s')] (soft value iteration)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    reward = np.asarray(reward, dtype=float)
    q0 = np.zeros_like(reward) if q0 is None else np.asarray(q0, dtype=float)
    return _fixed_point(lambda q: soft_bellman_optimal(mdp, q, reward, temperature),
                        q0, tol, max_iters, "soft_q_iteration")


def soft_bellman_policy_eval(mdp: TabularMdp, reward: np.ndarray, policy: np.ndarray,
                             temperature: float = 1.0, tol: float = DEFAULT_TOL,
                             max_iters: int = DEFAULT_MAX_ITERS) -> np.ndarray:
    """Unique fixed point of B^pi_r, i.e. (T^pi)^{-1} r."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    reward = np.asarray(reward, dtype=float)
    policy = np.asarray(policy, dtype=float)
    return _fixed_point(lambda q: soft_bellman_policy(mdp, q, reward, policy, temperature),
                        np.zeros_like(reward), tol, max_iters, "soft_bellman_policy_eval")


def inverse_soft_bellman(mdp: TabularMdp, q: np.ndarray, policy: np.ndarray,
                         temperature: float = 1.0) -> np.ndarray:
    """(T^pi Q)(s,a) = Q(s,a) - gamma E_{s'}[V^pi(s')]."""
    q = np.asarray(q, dtype=float)
    return q - mdp.gamma * mdp.expect_next(policy_value(q, policy, temperature))


def inverse_soft_bellman_optimal(mdp: TabularMdp, q: np.ndarray,
                                 temperature: float = 1.0) -> np.ndarray:
    """(T* Q)(s,a) = Q(s,a) - gamma E_{s'}[V*(s')]."""
    q = np.asarray(q, dtype=float)
    return q - mdp.gamma * mdp.expect_next(soft_value_star(q, temperature))


def soft_optimal_policy(mdp: TabularMdp, reward: np.ndarray, temperature: float = 1.0,
                        tol: float = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Soft-optimal (Q, pi) for ``reward``."""
    q = soft_q_iteration(mdp, reward, temperature, tol=tol)
    return q, soft_policy(q, temperature)
