"""Inverse soft-Q learning on tabular MDPs with exact expectations.

The learner maximizes the concave objective

    J(Q) = E_{mu_E}[phi(Q(s,a) - gamma E_{s'} V(s'))] - <c, V>

over Q tables, where V is the soft value (``V*`` for the Q-only learner,
``V^pi`` for the actor-critic learner) and ``c`` is the state weighting of
the value term chosen by ``estimator_mode``:

* ``initial_state``: c = (1 - gamma) p0
* ``expert_telescoped``: c = telescoped weights of the expert occupancy
* ``mixed_telescoped``: a ``mix_fraction`` blend with the current policy's
  occupancy (held fixed within a gradient step).

All occupancies are normalized to sum to 1.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from . import divergences as dv
from .mdp import TabularMdp, compute_occupancy
from .soft import (inverse_soft_bellman, inverse_soft_bellman_optimal, policy_value,
                   soft_policy, soft_value_star)

log = logging.getLogger(__name__)

ESTIMATOR_MODES = ("initial_state", "expert_telescoped", "mixed_telescoped")
REGULARIZER_SUPPORTS = ("auto", "expert", "mixture")
INITS = ("auto", "zeros", "uniform", "feasible")


class NumericalFailure(RuntimeError):
    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


@dataclass(frozen=True)
class IqConfig:
    divergence: str = "chi2"
    alpha: Optional[float] = None
    r_max: Optional[float] = None
    estimator_mode: str = "initial_state"
    mix_fraction: float = 0.5
    # Occupancy the phi-regularizer is averaged over.  "mixture" also charges
    # g(r) = r - phi(r) on policy-visited pairs (online setting).
    regularizer_support: str = "auto"
    learning_rate: float = 0.5
    max_iters: int = 50_000
    grad_tol: float = 1e-8
    temperature: float = 1.0
    gamma_override: Optional[float] = None
    seed: int = 0
    actor_critic: bool = False
    init: str = "auto"
    backtracking: bool = True
    optimizer: str = "gd"

    def __post_init__(self):
        if self.estimator_mode not in ESTIMATOR_MODES:
            raise ValueError(f"estimator_mode must be one of {ESTIMATOR_MODES}")
        if self.regularizer_support not in REGULARIZER_SUPPORTS:
            raise ValueError(f"regularizer_support must be one of {REGULARIZER_SUPPORTS}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        if self.optimizer not in ("gd", "lbfgs"):
            raise ValueError("optimizer must be 'gd' or 'lbfgs'")
        if not 0.0 <= self.mix_fraction <= 1.0:
            raise ValueError("mix_fraction must be in [0, 1]")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.gamma_override is not None and not 0.0 <= self.gamma_override < 1.0:
            raise ValueError("gamma_override must be in [0, 1)")

    def spec(self) -> dv.DivergenceSpec:
        return dv.get(self.divergence, alpha=self.alpha, r_max=self.r_max) \
            if self.divergence in ("chi2", "tv") else dv.get(self.divergence)

    @property
    def support(self) -> str:
        if self.regularizer_support != "auto":
            return self.regularizer_support
        return "mixture" if self.estimator_mode == "mixed_telescoped" else "expert"

    def effective_mdp(self, mdp: TabularMdp) -> TabularMdp:
        return mdp if self.gamma_override is None else mdp.with_gamma(self.gamma_override)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "IqConfig":
        return cls(**d)


@dataclass
class IqResult:
    q: np.ndarray
    policy: np.ndarray
    reward_sa: np.ndarray
    objective_trace: list
    grad_norm_trace: list
    iterations: int
    converged: bool
    wall_clock_seconds: float = 0.0
    n_clamped: int = 0
    gamma: float = 0.0
    temperature: float = 1.0

    def to_json(self) -> dict:
        return {
            "q": self.q.tolist(),
            "policy": self.policy.tolist(),
            "reward_sa": self.reward_sa.tolist(),
            "objective_trace": [float(x) for x in self.objective_trace],
            "grad_norm_trace": [float(x) for x in self.grad_norm_trace],
            "iterations": self.iterations,
            "converged": self.converged,
            "wall_clock_seconds": self.wall_clock_seconds,
            "gamma": self.gamma,
            "temperature": self.temperature,
        }

    @classmethod
    def from_json(cls, d: dict) -> "IqResult":
        return cls(np.asarray(d["q"]), np.asarray(d["policy"]), np.asarray(d["reward_sa"]),
                   list(d["objective_trace"]), list(d.get("grad_norm_trace", [])),
                   int(d.get("iterations", 0)), bool(d["converged"]),
                   float(d.get("wall_clock_seconds", 0.0)), 0,
                   float(d.get("gamma", 0.0)), float(d.get("temperature", 1.0)))


# -- objective and gradient -------------------------------------------------------

def telescoped_weights(mdp: TabularMdp, occ: np.ndarray) -> np.ndarray:
    """State weights c with E_occ[V(s) - gamma E_{s'} V(s')] = <c, V>."""
    return occ.sum(axis=1) - mdp.gamma * mdp.pushforward(occ)


def value_weights(mdp: TabularMdp, expert_occ: np.ndarray, cfg: IqConfig,
                  policy_occ: Optional[np.ndarray]) -> np.ndarray:
    mode = cfg.estimator_mode
    if mode == "initial_state":
        return (1.0 - mdp.gamma) * mdp.p0
    c_expert = telescoped_weights(mdp, expert_occ)
    if mode == "expert_telescoped":
        return c_expert
    m = cfg.mix_fraction
    return (1.0 - m) * c_expert + m * telescoped_weights(mdp, policy_occ)


def _needs_policy_occ(cfg: IqConfig) -> bool:
    return cfg.estimator_mode == "mixed_telescoped" or cfg.support == "mixture"


def _evaluate(mdp: TabularMdp, q: np.ndarray, expert_occ: np.ndarray, cfg: IqConfig,
              spec: dv.DivergenceSpec, policy: Optional[np.ndarray] = None,
              policy_occ: Optional[np.ndarray] = None, check_domain: bool = False):
    """Objective, gradient w.r.t. Q and bookkeeping for one Q table.

    ``mdp`` must already carry the effective discount.
    """
    tau, g = cfg.temperature, mdp.gamma
    q = np.asarray(q, dtype=float)
    if policy is None:
        pi = soft_policy(q, tau)
        v = soft_value_star(q, tau)
    else:
        pi = np.asarray(policy, dtype=float)
        v = policy_value(q, pi, tau)
    r = q - g * mdp.expect_next(v)

    if check_domain and spec.name == "tv":
        support = expert_occ > 0
        if np.any(np.abs(r[support]) > spec.upper + 1e-12):
            raise dv.DomainViolation(
                f"tv reward argument {np.abs(r[support]).max():.4g} exceeds {spec.upper}")

    if _needs_policy_occ(cfg) and policy_occ is None:
        policy_occ = compute_occupancy(mdp, pi)
    phi_r, dphi, n_clamped = spec.clamped(r)
    if cfg.support == "expert":
        term1 = float((expert_occ * phi_r).sum())
        w = expert_occ * dphi
    else:
        m = cfg.mix_fraction
        reg_occ = (1.0 - m) * expert_occ + m * policy_occ
        term1 = float((expert_occ * r).sum() - (reg_occ * (r - phi_r)).sum())
        w = expert_occ - reg_occ * (1.0 - dphi)
    c = value_weights(mdp, expert_occ, cfg, policy_occ)
    J = term1 - float(c @ v)
    grad = w - pi * (g * mdp.pushforward(w) + c)[:, None]
    return J, grad, {"reward": r, "policy": pi, "policy_occ": policy_occ, "n_clamped": n_clamped}


def _prepare(mdp, expert_occ, cfg):
    expert_occ = np.asarray(expert_occ, dtype=float)
    if expert_occ.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError("expert occupancy shape does not match MDP")
    if np.any(expert_occ < 0) or not math.isclose(expert_occ.sum(), 1.0, abs_tol=1e-8):
        raise ValueError("expert occupancy must be a distribution")
    return cfg.effective_mdp(mdp), expert_occ


def iq_objective(mdp: TabularMdp, q: np.ndarray, expert_occ: np.ndarray, cfg: IqConfig,
                 policy: Optional[np.ndarray] = None, *,
                 policy_occ: Optional[np.ndarray] = None, check_domain: bool = True) -> float:
    """J*(Q) (``policy=None``) or J(pi, Q) with exact transition expectations."""
    mdp, expert_occ = _prepare(mdp, expert_occ, cfg)
    return _evaluate(mdp, q, expert_occ, cfg, cfg.spec(), policy, policy_occ, check_domain)[0]


def iq_gradient(mdp: TabularMdp, q: np.ndarray, expert_occ: np.ndarray, cfg: IqConfig,
                policy: Optional[np.ndarray] = None, *,
                policy_occ: Optional[np.ndarray] = None, check_domain: bool = True) -> np.ndarray:
    """Exact gradient of :func:`iq_objective` w.r.t. every Q(s, a).

    The policy occupancy used by ``mixed_telescoped`` / mixture regularization
    is a constant here (evaluated at ``q`` unless given).
    """
    mdp, expert_occ = _prepare(mdp, expert_occ, cfg)
    return _evaluate(mdp, q, expert_occ, cfg, cfg.spec(), policy, policy_occ, check_domain)[1]


def chi2_offline_objective(mdp: TabularMdp, q: np.ndarray, expert_occ: np.ndarray,
                           alpha: float = 1.0, temperature: float = 1.0) -> float:
    """Offline chi^2 loss (to be minimized):

        -E_E[Q(s,a) - V*(s)] + E_E[(Q(s,a) - gamma E_{s'} V*(s'))^2] / (4 alpha)
    """
    q = np.asarray(q, dtype=float)
    v = soft_value_star(q, temperature)
    r = q - mdp.gamma * mdp.expect_next(v)
    first = float((expert_occ * (q - v[:, None])).sum())
    return -first + float((expert_occ * r * r).sum()) / (4.0 * alpha)


# -- initialization ---------------------------------------------------------------

def initial_q(mdp: TabularMdp, cfg: IqConfig, spec: Optional[dv.DivergenceSpec] = None) -> np.ndarray:
    spec = spec or cfg.spec()
    shape = (mdp.n_states, mdp.n_actions)
    init = cfg.init
    if init == "auto":
        init = "feasible" if math.isfinite(spec.lower) and spec.name != "tv" else "zeros"
    if init == "zeros":
        return np.zeros(shape)
    if init == "uniform":
        return np.random.default_rng(cfg.seed).uniform(-0.1, 0.1, size=shape)
    # constant Q whose soft-optimal reward equals the estimator at rho = rho_E
    r0 = float(dv.reward_estimator_eval(spec, 1.0)) if spec.reward_estimator else 0.0
    g = mdp.gamma
    c = (r0 + g * cfg.temperature * math.log(mdp.n_actions)) / (1.0 - g)
    return np.full(shape, c)


# -- optimization -----------------------------------------------------------------

def _ascend(f: Callable, x0: np.ndarray, cfg: IqConfig, after_step: Optional[Callable] = None,
            refresh: Optional[Callable] = None):
    """Backtracking gradient ascent.

    ``f(x, ctx) -> (J, grad)``; ``refresh(x) -> ctx`` recomputes quantities
    held fixed within a step.  Returns (x, traces, converged, iterations).
    """
    x = x0.copy()
    step = cfg.learning_rate
    obj_trace, grad_trace = [], []
    converged = False
    ctx = refresh(x) if refresh else None
    J, G = f(x, ctx)
    it = 0
    for it in range(1, cfg.max_iters + 1):
        gnorm = float(np.abs(G).max())
        obj_trace.append(J)
        grad_trace.append(gnorm)
        if not (math.isfinite(J) and math.isfinite(gnorm)):
            raise NumericalFailure(f"non-finite objective at iteration {it}",
                                   result=(x, obj_trace, grad_trace))
        if gnorm <= cfg.grad_tol:
            converged = True
            break
        while True:
            x_new = x + step * G
            J_new, G_new = f(x_new, ctx)
            if not cfg.backtracking or (math.isfinite(J_new) and J_new >= J - 1e-15 * abs(J)):
                break
            step *= 0.5
            if step < 1e-30:
                raise NumericalFailure("line search failed", result=(x, obj_trace, grad_trace))
        x = x_new
        if after_step is not None:
            after_step(x)
        if refresh is not None:
            ctx = refresh(x)
            J_new, G_new = f(x, ctx)
        J, G = J_new, G_new
        if cfg.backtracking:
            step = min(2.0 * step, cfg.learning_rate)
    return x, obj_trace, grad_trace, converged, it


def iq_learn(mdp: TabularMdp, expert_occ: np.ndarray, cfg: IqConfig = IqConfig(),
             q0: Optional[np.ndarray] = None) -> IqResult:
    """Gradient ascent on the inverse soft-Q objective.

    Q-only learner: the policy is always softmax(Q / tau).  Actor-critic
    learner: alternate a Q step on J(pi, Q) with the exact tabular SAC update
    pi <- softmax(Q / tau).
    """
    t0 = time.perf_counter()
    mdp_eff, expert_occ = _prepare(mdp, expert_occ, cfg)
    spec = cfg.spec()
    q_init = initial_q(mdp_eff, cfg, spec) if q0 is None else np.asarray(q0, dtype=float)
    tau = cfg.temperature
    needs_occ = _needs_policy_occ(cfg)
    clamp_count = [0]

    is_tv = spec.name == "tv"
    bound = dv.tv_q_bound(mdp_eff, tau, spec.upper) if is_tv else None

    def to_q(x):
        return bound * np.tanh(x) if is_tv else x

    state = {"policy": soft_policy(q_init, tau) if cfg.actor_critic else None}

    def refresh(x):
        pol = state["policy"] if cfg.actor_critic else soft_policy(to_q(x), tau)
        return compute_occupancy(mdp_eff, pol) if needs_occ else None

    def f(x, occ):
        q = to_q(x)
        J, G, info = _evaluate(mdp_eff, q, expert_occ, cfg, spec, state["policy"], occ)
        clamp_count[0] += info["n_clamped"]
        if is_tv:
            G = G * bound * (1.0 - np.tanh(x) ** 2)
        return J, G

    def after_step(x):
        if cfg.actor_critic:
            state["policy"] = soft_policy(to_q(x), tau)

    if is_tv:
        x0 = np.arctanh(np.clip(q_init / bound, -1 + 1e-12, 1 - 1e-12))
    else:
        x0 = q_init

    if cfg.optimizer == "lbfgs" and not cfg.actor_critic:
        x, obj_trace, grad_trace, converged, iters = _lbfgs(f, x0, cfg, refresh if needs_occ else None)
    else:
        x, obj_trace, grad_trace, converged, iters = _ascend(
            f, x0, cfg, after_step, refresh if (needs_occ or cfg.actor_critic) else None)

    q = to_q(x)
    policy = state["policy"] if cfg.actor_critic else soft_policy(q, tau)
    reward = inverse_soft_bellman(mdp_eff, q, policy, tau)
    if clamp_count[0]:
        log.info("%s: %d phi arguments clamped to the domain boundary", spec.name, clamp_count[0])
    return IqResult(q, policy, reward, obj_trace, grad_trace, iters, converged,
                    time.perf_counter() - t0, clamp_count[0], mdp_eff.gamma, tau)


def _lbfgs(f, x0, cfg, refresh):
    """Quasi-Newton variant; with a policy-occupancy term, re-solve after each refresh."""

    shape = x0.shape
    obj_trace, grad_trace = [], []
    x = x0.copy()
    converged = False
    iters = 0
    for _ in range(100 if refresh else 1):
        ctx = refresh(x) if refresh else None

        def neg(z):
            J, G = f(z.reshape(shape), ctx)
            return -J, -G.ravel()

        def record(z):
            J, G = f(z.reshape(shape), ctx)
            obj_trace.append(J)
            grad_trace.append(float(np.abs(G).max()))

        res = minimize(neg, x.ravel(), jac=True, method="L-BFGS-B", callback=record,
                       options={"maxiter": max(cfg.max_iters - iters, 1), "gtol": cfg.grad_tol,
                                "ftol": 0.0, "maxcor": 20})
        iters += int(res.nit)
        x_new = res.x.reshape(shape)
        step = float(np.abs(x_new - x).max())
        x = x_new
        ctx = refresh(x) if refresh else None
        J, G = f(x, ctx)
        gnorm = float(np.abs(G).max())
        if not obj_trace or obj_trace[-1] != J:
            obj_trace.append(J)
            grad_trace.append(gnorm)
        if not np.isfinite(J):
            raise NumericalFailure("non-finite objective", result=(x, obj_trace, grad_trace))
        if gnorm <= cfg.grad_tol:
            converged = True
            break
        if refresh is None or iters >= cfg.max_iters or step == 0.0:
            break
    return x, obj_trace, grad_trace, converged, iters


# -- reward recovery and diagnostics ------------------------------------------------

def recover_reward_transition(q: np.ndarray, v_next: np.ndarray, gamma: float):
    """r(s, a, s') = Q(s, a) - gamma V(s'); vectorized over index arrays."""
    q = np.asarray(q, dtype=float)
    v_next = np.asarray(v_next, dtype=float)

    def reward(s, a, s_next):
        return q[s, a] - gamma * v_next[s_next]

    return reward


def transition_rewards(result: IqResult, s, a, s_next) -> np.ndarray:
    v = policy_value(result.q, result.policy, result.temperature)
    return recover_reward_transition(result.q, v, result.gamma)(s, a, s_next)


def state_reward(mdp: TabularMdp, q: np.ndarray, temperature: float = 1.0,
                 policy: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-state reward E_{a~pi}[(T^pi Q)(s, a)] with pi = softmax(Q/tau) by default."""
    pi = soft_policy(q, temperature) if policy is None else policy
    return (pi * inverse_soft_bellman(mdp, q, pi, temperature)).sum(axis=1)


@dataclass
class SaddleDiagnostic:
    residual: np.ndarray
    max_abs: float
    policy_occ: np.ndarray = field(repr=False)


def saddle_diagnostic(mdp: TabularMdp, q: np.ndarray, expert_occ: np.ndarray,
                      divergence: dv.DivergenceSpec, temperature: float = 1.0) -> SaddleDiagnostic:
    """phi'((T^{pi_Q} Q)(s,a)) mu_E(s,a) - mu_{pi_Q}(s,a); zero at the saddle point."""
    if not divergence.differentiable:
        raise ValueError(f"{divergence.name} is not differentiable")
    r = inverse_soft_bellman_optimal(mdp, q, temperature)
    occ = compute_occupancy(mdp, soft_policy(q, temperature))
    resid = divergence.phi_prime(r) * np.asarray(expert_occ) - occ
    return SaddleDiagnostic(resid, float(np.abs(resid).max()), occ)


# -- state-only variant --------------------------------------------------------------

def _state_only(mdp, q, d_expert, cfg, spec):
    tau, g = cfg.temperature, mdp.gamma
    pi = soft_policy(q, tau)
    v = soft_value_star(q, tau)
    r = q - g * mdp.expect_next(v)
    phi_r, dphi, n_clamped = spec.clamped(r)
    per_state = (pi * phi_r).sum(axis=1)
    c = (1.0 - g) * mdp.p0
    J = float(d_expert @ per_state) - float(c @ v)
    # d/dQ through the softmax weights
    g_pi = d_expert[:, None] * pi * (phi_r - per_state[:, None]) / tau
    w = d_expert[:, None] * pi * dphi
    grad = g_pi + w - pi * (g * mdp.pushforward(w) + c)[:, None]
    return J, grad, n_clamped


def state_only_objective(mdp: TabularMdp, q: np.ndarray, expert_state_marginal: np.ndarray,
                         cfg: IqConfig) -> float:
    """E_{s~d_E} E_{a~pi_Q}[phi(T*Q(s,a))] - (1 - gamma) E_{p0}[V*]; no expert actions used."""
    d = _check_marginal(mdp, expert_state_marginal)
    return _state_only(cfg.effective_mdp(mdp), np.asarray(q, float), d, cfg, cfg.spec())[0]


def state_only_gradient(mdp: TabularMdp, q: np.ndarray, expert_state_marginal: np.ndarray,
                        cfg: IqConfig) -> np.ndarray:
    d = _check_marginal(mdp, expert_state_marginal)
    return _state_only(cfg.effective_mdp(mdp), np.asarray(q, float), d, cfg, cfg.spec())[1]


def _check_marginal(mdp, d):
    d = np.asarray(d, dtype=float)
    if d.shape != (mdp.n_states,) or np.any(d < 0) or not math.isclose(d.sum(), 1.0, abs_tol=1e-8):
        raise ValueError("expert state marginal must be a distribution over states")
    return d


def state_only_learn(mdp: TabularMdp, expert_state_marginal: np.ndarray,
                     cfg: IqConfig = IqConfig(), smoothing: float = 0.0,
                     max_rounds: int = 200, policy_tol: float = 1e-6) -> IqResult:
    """Learn Q from expert state visitation only (learning from observations).

    ``cfg.actor_critic=False`` ascends the coupled objective directly (policy
    differentiated through the softmax).  ``cfg.actor_critic=True`` alternates
    an exact Q solve with the policy frozen, which is the ordinary objective
    for the pseudo-occupancy d_E(s) pi(a|s), and the update pi <- softmax(Q/tau),
    until the policy moves less than ``policy_tol``.

    ``smoothing`` adds a pseudo-count to every state before normalizing; an
    unvisited state with p0 > 0 otherwise leaves the objective unbounded.
    """
    t0 = time.perf_counter()
    d = _check_marginal(mdp, expert_state_marginal)
    if smoothing < 0:
        raise ValueError("smoothing must be nonnegative")
    if smoothing:
        d = (d + smoothing) / (d + smoothing).sum()
    mdp_eff = cfg.effective_mdp(mdp)
    spec = cfg.spec()
    tau = cfg.temperature
    if cfg.actor_critic:
        inner = IqConfig(**{**cfg.to_dict(), "actor_critic": False,
                            "estimator_mode": "initial_state", "regularizer_support": "expert",
                            "gamma_override": None})
        pi = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
        q, obj, gtr, it, conv, n_clamped = None, [], [], 0, False, 0
        for _ in range(max_rounds):
            res = iq_learn(mdp_eff, d[:, None] * pi, inner, q0=q)
            q, it, n_clamped = res.q, it + res.iterations, n_clamped + res.n_clamped
            obj.append(state_only_objective(mdp_eff, q, d, inner))
            gtr.append(res.grad_norm_trace[-1] if res.grad_norm_trace else 0.0)
            moved = float(np.abs(res.policy - pi).max())
            pi = res.policy
            if moved <= policy_tol:
                conv = res.converged
                break
    else:
        clamp_count = [0]

        def f(x, _):
            J, G, n = _state_only(mdp_eff, x, d, cfg, spec)
            clamp_count[0] += n
            return J, G

        x0 = initial_q(mdp_eff, cfg, spec)
        if cfg.optimizer == "lbfgs":
            q, obj, gtr, conv, it = _lbfgs(f, x0, cfg, None)
        else:
            q, obj, gtr, conv, it = _ascend(f, x0, cfg)
        pi = soft_policy(q, tau)
        n_clamped = clamp_count[0]
    reward = inverse_soft_bellman(mdp_eff, q, pi, tau)
    return IqResult(q, pi, reward, obj, gtr, it, conv, time.perf_counter() - t0,
                    n_clamped, mdp_eff.gamma, tau)
