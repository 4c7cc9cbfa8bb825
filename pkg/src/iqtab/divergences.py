"""Registry of concave reward transforms ``phi`` selecting the statistical
distance minimized by the inverse soft-Q objective.

Each entry carries phi, its derivative, the admissible reward interval and,
where one exists, the closed-form optimal reward as a function of the
occupancy ratio ``u = rho / rho_E`` (the solution of ``phi'(r) = u``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Array = np.ndarray
Fn = Callable[[Array], Array]


class EstimatorUndefined(ValueError):
    pass


class DomainViolation(ValueError):
    pass


@dataclass(frozen=True)
class DivergenceSpec:
    name: str
    phi: Fn
    phi_prime: Fn
    reward_domain: tuple[float, float] = (-math.inf, math.inf)
    reward_estimator: Optional[Fn] = None
    alpha: Optional[float] = None
    f: Optional[Fn] = None
    f_star: Optional[Fn] = None
    # Largest r with phi'(r) >= 0; phi is non-decreasing to the left of it.
    monotone_upper: float = math.inf
    # Distance-to-boundary used when clamping arguments of open domains.
    clamp_eps: float = 1e-12
    differentiable: bool = True
    notes: str = field(default="", compare=False)

    @property
    def lower(self) -> float:
        return self.reward_domain[0]

    @property
    def upper(self) -> float:
        return self.reward_domain[1]

    def in_domain(self, x: Array, strict_open_lower: bool = True) -> Array:
        x = np.asarray(x, dtype=float)
        lo, hi = self.reward_domain
        low_ok = x > lo if strict_open_lower else x >= lo
        return low_ok & (x <= hi)

    def clamped(self, x: Array) -> tuple[Array, Array, int]:
        """phi and phi' with arguments below an open lower bound clamped.

        Returns ``(phi(xc), dphi, n_clamped)`` where ``dphi`` is the
        derivative of the clamped map (zero where clamping is active).
        """
        x = np.asarray(x, dtype=float)
        lo = self.lower
        if not math.isfinite(lo) or self.name == "tv":
            return self.phi(x), self.phi_prime(x), 0
        floor = lo + self.clamp_eps
        low = x < floor
        xc = np.where(low, floor, x)
        return self.phi(xc), np.where(low, 0.0, self.phi_prime(xc)), int(low.sum())


# -- individual entries --------------------------------------------------------

def _fkl() -> DivergenceSpec:
    return DivergenceSpec(
        "fkl",
        phi=lambda x: 1.0 + np.log(x),
        phi_prime=lambda x: 1.0 / x,
        reward_domain=(0.0, math.inf),
        reward_estimator=lambda u: 1.0 / u,
        f=lambda t: -np.log(t),
        f_star=lambda u: -1.0 - np.log(-u),
    )


def _rkl() -> DivergenceSpec:
    return DivergenceSpec(
        "rkl",
        phi=lambda x: -np.exp(-(x + 1.0)),
        phi_prime=lambda x: np.exp(-(x + 1.0)),
        reward_estimator=lambda u: -(1.0 + np.log(u)),
        f=lambda t: t * np.log(t),
        f_star=lambda u: np.exp(u - 1.0),
    )


def _rkl_fix() -> DivergenceSpec:
    return DivergenceSpec(
        "rkl_fix",
        phi=lambda x: -np.exp(-x),
        phi_prime=lambda x: np.exp(-x),
        reward_estimator=lambda u: -np.log(u),
        f=lambda t: t * np.log(t) - t + 1.0,
        f_star=lambda u: np.exp(u) - 1.0,
    )


def _hellinger() -> DivergenceSpec:
    return DivergenceSpec(
        "hellinger",
        phi=lambda x: x / (1.0 + x),
        phi_prime=lambda x: 1.0 / (1.0 + x) ** 2,
        reward_domain=(-1.0, math.inf),
        reward_estimator=lambda u: 1.0 / np.sqrt(u) - 1.0,
        f=lambda t: (np.sqrt(t) - 1.0) ** 2,
        f_star=lambda u: u / (1.0 - u),
    )


def _js() -> DivergenceSpec:
    return DivergenceSpec(
        "js",
        phi=lambda x: np.log(2.0 - np.exp(-x)),
        phi_prime=lambda x: np.exp(-x) / (2.0 - np.exp(-x)),
        reward_domain=(-math.log(2.0), math.inf),
        reward_estimator=lambda u: np.log(0.5 * (1.0 + 1.0 / u)),
        f=lambda t: -(t + 1.0) * np.log((t + 1.0) / 2.0) + t * np.log(t),
        f_star=lambda u: -np.log(2.0 - np.exp(u)),
    )


def make_chi2(alpha: float = 1.0) -> DivergenceSpec:
    """Pearson chi^2 scaled by ``alpha``: phi(x) = x - x^2 / (4 alpha)."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    a = float(alpha)
    return DivergenceSpec(
        "chi2",
        phi=lambda x: x - x * x / (4.0 * a),
        phi_prime=lambda x: 1.0 - x / (2.0 * a),
        reward_estimator=lambda u: 2.0 * a * (1.0 - u),
        alpha=a,
        f=lambda t: a * (t - 1.0) ** 2,
        f_star=lambda u: u + u * u / (4.0 * a),
        monotone_upper=2.0 * a,
    )


def make_tv(r_max: float = 0.5) -> DivergenceSpec:
    """Total variation: identity phi with rewards bounded by ``r_max``."""
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    r = float(r_max)
    return DivergenceSpec(
        "tv",
        phi=lambda x: np.asarray(x, dtype=float) * 1.0,
        phi_prime=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        reward_domain=(-r, r),
        reward_estimator=lambda u: r * np.sign(1.0 - np.asarray(u, dtype=float)),
        f=lambda t: 0.5 * np.abs(t - 1.0),
        f_star=lambda u: u,
        differentiable=False,
    )


_BUILDERS = {
    "fkl": _fkl,
    "rkl": _rkl,
    "rkl_fix": _rkl_fix,
    "hellinger": _hellinger,
    "chi2": make_chi2,
    "tv": make_tv,
    "js": _js,
}

NAMES = tuple(_BUILDERS)


def get(name: str, **kwargs) -> DivergenceSpec:
    """Look up a divergence by name; ``chi2`` accepts ``alpha``, ``tv`` accepts ``r_max``."""
    try:
        build = _BUILDERS[name]
    except KeyError:
        raise KeyError(f"unknown divergence {name!r}; choose from {NAMES}") from None
    kwargs = {k: v for k, v in kwargs.items() if v is not None}
    return build(**kwargs)


def catalog() -> list[DivergenceSpec]:
    return [build() for build in _BUILDERS.values()]


def tv_q_bound(mdp, temperature: float = 1.0, r_max: float = 0.5) -> float:
    """|Q| <= (r_max + tau log|A|) / (1 - gamma) for rewards bounded by r_max."""
    return (r_max + temperature * math.log(mdp.n_actions)) / (1.0 - mdp.gamma)


def reward_estimator_eval(spec: DivergenceSpec, u):
    """Optimal reward for occupancy ratio u = rho / rho_E (solves phi'(r) = u)."""
    if spec.reward_estimator is None:
        raise EstimatorUndefined(f"{spec.name} has no closed-form reward estimator")
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("ratio must be nonnegative")
    out = spec.reward_estimator(u)
    return float(out) if out.ndim == 0 else out


def divergence_value(spec: DivergenceSpec, rho: Array, rho_expert: Array) -> float:
    """Variational distance max_r E_{rho_E}[phi(r)] - E_rho[r], solved pointwise.

    Uses the closed-form maximizer r = estimator(rho / rho_E); pairs the
    expert never visits contribute their supremum over the reward domain
    (``-inf`` is impossible here, so they must carry no policy mass either).
    """
    rho = np.asarray(rho, dtype=float)
    rho_e = np.asarray(rho_expert, dtype=float)
    if spec.reward_estimator is None:
        raise EstimatorUndefined(f"{spec.name} has no closed-form reward estimator")
    on = rho_e > 0
    if np.any(rho[~on] > 0):
        raise ValueError("policy mass outside the expert support")
    r = spec.reward_estimator(rho[on] / rho_e[on])
    return float((rho_e[on] * spec.phi(r)).sum() - (rho[on] * r).sum())
