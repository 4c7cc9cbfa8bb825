"""Benchmark MDPs: GridWorld, the Loop MDP, and random MDPs for property tests."""
from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from .mdp import MdpError, TabularMdp

GRID_ACTIONS = ("up", "down", "left", "right", "stay")
_MOVES = {"up": (0, -1), "down": (0, 1), "left": (-1, 0), "right": (1, 0), "stay": (0, 0)}

LOOP_A1, LOOP_A2 = 0, 1


def make_gridworld(width: int = 5, height: int = 5, goal: tuple[int, int] = (4, 4),
                   obstacles: Iterable[tuple[int, int]] = (), step_reward: float = 0.0,
                   goal_reward: float = 1.0, gamma: float = 0.9) -> TabularMdp:
    """Deterministic grid with actions up/down/left/right/stay.

    Cells are ``(x, y)`` with ``y`` growing downwards.  Obstacles are removed
    from the state space; bumping into them or the border keeps the agent in
    place.  The agent starts uniformly at random among free cells.
    """
    if width < 1 or height < 1:
        raise MdpError("grid must be nonempty")
    obstacles = {tuple(map(int, c)) for c in obstacles}
    goal = tuple(map(int, goal))
    if goal in obstacles:
        raise MdpError("goal cannot be an obstacle")
    if not (0 <= goal[0] < width and 0 <= goal[1] < height):
        raise MdpError("goal outside the grid")
    cells = [(x, y) for y in range(height) for x in range(width) if (x, y) not in obstacles]
    index = {c: i for i, c in enumerate(cells)}
    S, A = len(cells), len(GRID_ACTIONS)
    P = np.zeros((S, A, S))
    for i, (x, y) in enumerate(cells):
        for a, name in enumerate(GRID_ACTIONS):
            dx, dy = _MOVES[name]
            nxt = (x + dx, y + dy)
            P[i, a, index.get(nxt, i)] = 1.0
    reward = np.full((S, A), float(step_reward))
    reward[index[goal]] = goal_reward
    info = {
        "kind": "gridworld", "width": width, "height": height,
        "cells": [list(c) for c in cells], "goal": list(goal),
        "obstacles": sorted(list(c) for c in obstacles), "actions": list(GRID_ACTIONS),
    }
    return TabularMdp(P, np.full(S, 1.0 / S), gamma, reward, name=f"gridworld{width}x{height}",
                      info=info)


def grid_goal_state(mdp: TabularMdp) -> int:
    return mdp.info["cells"].index(list(mdp.info["goal"]))


def grid_state_table(mdp: TabularMdp, values: np.ndarray, fill: float = np.nan) -> np.ndarray:
    """Lay a per-state vector out as a ``(height, width)`` array (NaN for obstacles)."""
    grid = np.full((mdp.info["height"], mdp.info["width"]), fill)
    for (x, y), v in zip(mdp.info["cells"], values):
        grid[y, x] = v
    return grid


def make_loop_mdp(p: float = 0.5, gamma: float = 0.99) -> TabularMdp:
    """Three-state Loop MDP with actions (a1, a2) = (0, 1).

    Rewarded ("green") actions: a1 in s0, a2 in s1, a1 in s2.  Taking a1 in
    s0 lands in s2 with probability ``p``.
    """
    if not 0.0 <= p <= 1.0:
        raise MdpError("p must be in [0, 1]")
    P = np.zeros((3, 2, 3))
    P[0, LOOP_A1, 1], P[0, LOOP_A1, 2] = 1.0 - p, p
    P[0, LOOP_A2, 2] = 1.0
    P[1, LOOP_A2, 1] = 1.0
    P[1, LOOP_A1, 2] = 1.0
    P[2, LOOP_A2, 2] = 1.0
    P[2, LOOP_A1, 1] = 1.0
    reward = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    info = {"kind": "loop", "p": p, "states": ["s0", "s1", "s2"], "actions": ["a1", "a2"]}
    return TabularMdp(P, np.array([1.0, 0.0, 0.0]), gamma, reward, name="loop", info=info)


def make_random_mdp(n_states: int, n_actions: int, gamma: float = 0.9, seed: int = 0,
                    reward_scale: float = 1.0, concentration: float = 1.0) -> TabularMdp:
    """Dirichlet transition rows and uniform(-scale, scale) rewards; deterministic per seed."""
    if n_states < 1 or n_actions < 1:
        raise MdpError("need at least one state and one action")
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_actions))
    P /= P.sum(axis=2, keepdims=True)
    p0 = rng.dirichlet(np.full(n_states, concentration))
    p0 /= p0.sum()
    reward = rng.uniform(-reward_scale, reward_scale, size=(n_states, n_actions))
    return TabularMdp(P, p0, gamma, reward, name=f"random{n_states}x{n_actions}-{seed}",
                      info={"kind": "random", "seed": seed})


def build_env(spec: dict) -> TabularMdp:
    """Construct an environment from a config mapping ``{kind: {...}}`` or ``{"path": ...}``."""
    spec = dict(spec)
    if "path" in spec:
        mdp = TabularMdp.load(spec["path"])
        if "gamma" in spec:
            mdp = mdp.with_gamma(spec["gamma"])
        return mdp
    kind = spec.pop("kind", None)
    if kind is None:
        if len(spec) != 1:
            raise MdpError(f"cannot infer environment kind from {spec}")
        kind, spec = next(iter(spec.items()))
        spec = dict(spec or {})
    if kind == "gridworld":
        return make_gridworld(**spec)
    if kind == "loop":
        return make_loop_mdp(**spec)
    if kind == "random":
        return make_random_mdp(**spec)
    raise MdpError(f"unknown environment kind {kind!r}")


def describe(mdp: TabularMdp) -> Optional[str]:
    return mdp.info.get("kind")
