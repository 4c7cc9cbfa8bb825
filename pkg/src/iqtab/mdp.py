"""Finite MDPs, exact occupancy measures, trajectory sampling and demo datasets.

Occupancies are stored normalized: ``mu.sum() == 1``.  This is the discounted
visitation ``rho`` multiplied by ``(1 - gamma)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

import numpy as np

PROB_ATOL = 1e-12


class MdpError(ValueError):
    """Invalid MDP, policy or dataset."""


class RejectionCapExceeded(RuntimeError):
    pass


def _check_distribution(x: np.ndarray, axis: int, what: str, atol: float = PROB_ATOL) -> None:
    if np.any(x < 0):
        raise MdpError(f"{what} has negative entries")
    if not np.allclose(x.sum(axis=axis), 1.0, rtol=0.0, atol=atol):
        raise MdpError(f"{what} does not sum to 1")


@dataclass(frozen=True)
class TabularMdp:
    """Finite discounted MDP.

    ``transition[s, a, s']`` is P(s' | s, a); ``p0`` the initial state
    distribution.  ``true_reward`` (shape ``(S, A)``) is only used for
    evaluation.
    """

    transition: np.ndarray
    p0: np.ndarray
    gamma: float
    true_reward: Optional[np.ndarray] = None
    name: str = "mdp"
    info: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        p0 = np.asarray(self.p0, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise MdpError(f"transition must have shape (S, A, S), got {P.shape}")
        if p0.shape != (P.shape[0],):
            raise MdpError("p0 must have shape (S,)")
        _check_distribution(P, 2, "transition row")
        _check_distribution(p0, 0, "p0")
        if not 0.0 <= self.gamma < 1.0:
            raise MdpError(f"gamma must be in [0, 1), got {self.gamma}")
        P.setflags(write=False)
        p0.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "gamma", float(self.gamma))
        if self.true_reward is not None:
            r = np.asarray(self.true_reward, dtype=float)
            if r.shape != P.shape[:2]:
                raise MdpError("true_reward must have shape (S, A)")
            if not np.all(np.isfinite(r)):
                raise MdpError("true_reward must be finite")
            r.setflags(write=False)
            object.__setattr__(self, "true_reward", r)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def with_gamma(self, gamma: float) -> "TabularMdp":
        return TabularMdp(self.transition, self.p0, gamma, self.true_reward, self.name, self.info)

    def expect_next(self, v: np.ndarray) -> np.ndarray:
        """E_{s' ~ P(.|s,a)} v(s') as an (S, A) table."""
        return self.transition @ v

    def pushforward(self, x: np.ndarray) -> np.ndarray:
        """sum_{s,a} x(s,a) P(s'|s,a), an (S,) vector over next states."""
        return np.einsum("sa,sat->t", x, self.transition)

    def policy_transition(self, policy: np.ndarray) -> np.ndarray:
        """State-to-state matrix P_pi[s, s']."""
        return np.einsum("sa,sat->st", policy, self.transition)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        d = {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "p0": self.p0.tolist(),
            "transition": self.transition.tolist(),
        }
        if self.true_reward is not None:
            d["true_reward"] = self.true_reward.tolist()
        if self.info:
            d["info"] = self.info
        return d

    @classmethod
    def from_json(cls, d: dict, name: str = "mdp") -> "TabularMdp":
        P = np.asarray(d["transition"], dtype=float)
        if P.shape[:2] != (d["n_states"], d["n_actions"]):
            raise MdpError("n_states/n_actions disagree with transition shape")
        return cls(P, np.asarray(d["p0"], dtype=float), float(d["gamma"]),
                   d.get("true_reward"), name, dict(d.get("info", {})))

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TabularMdp":
        path = Path(path)
        return cls.from_json(json.loads(path.read_text(encoding="utf-8")), name=path.stem)


def check_policy(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    policy = np.asarray(policy, dtype=float)
    if policy.shape != (mdp.n_states, mdp.n_actions):
        raise MdpError(f"policy shape {policy.shape} does not match MDP")
    _check_distribution(policy, 1, "policy row", atol=1e-10)
    return policy


def compute_occupancy(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    """Exact normalized discounted state-action occupancy of ``policy``.

    Solves d = (1-g) p0 + g P_pi^T d for the state marginal and returns
    mu(s,a) = d(s) pi(a|s).
    """
    policy = check_policy(mdp, policy)
    g = mdp.gamma
    A = np.eye(mdp.n_states) - g * mdp.policy_transition(policy).T
    d = np.linalg.solve(A, (1.0 - g) * mdp.p0)
    resid = np.abs(A @ d - (1.0 - g) * mdp.p0).max()
    assert resid <= 1e-10, f"occupancy solve residual {resid:.3g}"
    d = np.clip(d, 0.0, None)
    mu = d[:, None] * policy
    return mu / mu.sum()


def state_marginal(occ: np.ndarray) -> np.ndarray:
    return np.asarray(occ).sum(axis=1)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def policy_entropy(mdp: TabularMdp, policy: np.ndarray) -> float:
    """Discounted causal entropy E_pi[sum_t g^t (-log pi(a_t|s_t))]."""
    mu = compute_occupancy(mdp, policy)
    with np.errstate(divide="ignore"):
        neglog = np.where(mu > 0, -np.log(np.where(mu > 0, policy, 1.0)), 0.0)
    return float((mu * neglog).sum() / (1.0 - mdp.gamma))


# -- demonstrations ------------------------------------------------------------

_DEMO_FIELDS = ("episode", "t", "s", "a", "s_next", "terminal")


@dataclass(frozen=True)
class DemoDataset:
    """Expert transitions (s, a, s') grouped by episode, one row per step."""

    episode: np.ndarray
    t: np.ndarray
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    terminal: np.ndarray = field(default=None)

    def __post_init__(self):
        cols = {}
        for name in _DEMO_FIELDS[:5]:
            cols[name] = np.asarray(getattr(self, name), dtype=np.int64).reshape(-1)
        n = len(cols["s"])
        if any(len(c) != n for c in cols.values()):
            raise MdpError("demo columns have different lengths")
        term = self.terminal
        if term is None:
            term = np.zeros(n, dtype=bool)
            if n:
                term[np.r_[cols["episode"][1:] != cols["episode"][:-1], True]] = True
        cols["terminal"] = np.asarray(term, dtype=bool).reshape(-1)
        for name, col in cols.items():
            col.setflags(write=False)
            object.__setattr__(self, name, col)
        ep, s, sn = cols["episode"], cols["s"], cols["s_next"]
        same = ep[1:] == ep[:-1]
        if np.any(sn[:-1][same] != s[1:][same]):
            raise MdpError("s_next of step t must equal s of step t+1 within an episode")

    def __len__(self) -> int:
        return len(self.s)

    @property
    def n_episodes(self) -> int:
        return len(np.unique(self.episode))

    def validate(self, mdp: TabularMdp) -> "DemoDataset":
        for name, hi in (("s", mdp.n_states), ("a", mdp.n_actions), ("s_next", mdp.n_states)):
            col = getattr(self, name)
            if len(col) and (col.min() < 0 or col.max() >= hi):
                raise MdpError(f"demo column {name!r} out of bounds for MDP")
        return self

    def rows(self) -> Iterable[dict]:
        for i in range(len(self)):
            yield {
                "episode": int(self.episode[i]), "t": int(self.t[i]), "s": int(self.s[i]),
                "a": int(self.a[i]), "s_next": int(self.s_next[i]),
                "terminal": bool(self.terminal[i]),
            }

    def save_jsonl(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for row in self.rows():
                fh.write(json.dumps(row) + "\n")

    @classmethod
    def load_jsonl(cls, path: Union[str, Path]) -> "DemoDataset":
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rows.append(json.loads(line))
        return cls.from_rows(rows)

    @classmethod
    def from_rows(cls, rows: list) -> "DemoDataset":
        cols = {k: [r[k] for r in rows] for k in _DEMO_FIELDS}
        return cls(**cols)


def sample_trajectories(
    mdp: TabularMdp,
    policy: np.ndarray,
    n_episodes: int,
    horizon: int,
    seed: int = 0,
    accept: Optional[Union[Callable[[int], bool], Iterable[int]]] = None,
    max_attempts: int = 10_000,
    check_horizon: bool = True,
    horizon_tail: float = 1e-4,
) -> DemoDataset:
    """Roll out ``policy`` for ``n_episodes`` episodes of length ``horizon``.

    With ``accept`` (a state predicate or a set of allowed states) each
    episode is rejection-sampled until every visited state is accepted.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if check_horizon and mdp.gamma ** horizon >= horizon_tail:
        raise ValueError(
            f"gamma**horizon = {mdp.gamma ** horizon:.3g} >= {horizon_tail}; "
            "increase horizon or pass check_horizon=False")
    policy = check_policy(mdp, policy)
    if accept is not None and not callable(accept):
        allowed = frozenset(int(x) for x in accept)
        accept = allowed.__contains__

    rng = np.random.default_rng(np.uint64(seed))
    S, A = mdp.n_states, mdp.n_actions
    P_cdf = np.cumsum(mdp.transition, axis=2)
    pi_cdf = np.cumsum(policy, axis=1)
    p0_cdf = np.cumsum(mdp.p0)

    def draw(cdf, u):
        return min(int(np.searchsorted(cdf, u, side="right")), len(cdf) - 1)

    states = np.empty((n_episodes, horizon + 1), dtype=np.int64)
    actions = np.empty((n_episodes, horizon), dtype=np.int64)
    for ep in range(n_episodes):
        for _ in range(max_attempts):
            u = rng.random(2 * horizon + 1)
            s = draw(p0_cdf, u[0])
            ok = accept is None or accept(s)
            states[ep, 0] = s
            for t in range(horizon):
                if not ok:
                    break
                a = draw(pi_cdf[s], u[2 * t + 1])
                s = draw(P_cdf[s, a], u[2 * t + 2])
                actions[ep, t] = a
                states[ep, t + 1] = s
                ok = accept is None or accept(s)
            if ok:
                break
        else:
            raise RejectionCapExceeded(
                f"episode {ep}: no accepted trajectory in {max_attempts} attempts")

    t = np.tile(np.arange(horizon), n_episodes)
    episode = np.repeat(np.arange(n_episodes), horizon)
    terminal = np.tile(np.arange(horizon) == horizon - 1, n_episodes)
    return DemoDataset(episode, t, states[:, :-1].reshape(-1), actions.reshape(-1),
                       states[:, 1:].reshape(-1), terminal)


def empirical_occupancy(demos: DemoDataset, mdp: TabularMdp, discounted: bool = True,
                        gamma: Optional[float] = None) -> np.ndarray:
    """Discount-weighted empirical state-action occupancy, normalized."""
    if len(demos) == 0:
        raise MdpError("empty demonstration dataset")
    demos.validate(mdp)
    g = mdp.gamma if gamma is None else gamma
    w = g ** demos.t.astype(float) if discounted else np.ones(len(demos))
    mu = np.zeros((mdp.n_states, mdp.n_actions))
    np.add.at(mu, (demos.s, demos.a), w)
    total = mu.sum()
    if total <= 0:
        raise MdpError("demonstrations carry no weight")
    return mu / total


def empirical_state_marginal(demos: DemoDataset, mdp: TabularMdp, discounted: bool = True,
                             gamma: Optional[float] = None) -> np.ndarray:
    return state_marginal(empirical_occupancy(demos, mdp, discounted, gamma))
