import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from iqtab.envs import make_random_mdp
from iqtab.soft import soft_q_iteration

settings.register_profile(
    "iqtab", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much])
settings.load_profile("iqtab")

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def random_policy(rng, n_states, n_actions, floor=0.0):
    pi = rng.dirichlet(np.ones(n_actions), size=n_states) + floor
    return pi / pi.sum(axis=1, keepdims=True)


def feasible_q(mdp, rng, low=0.0, high=1.0, temperature=1.0):
    """Q whose soft-optimal reward is uniform(low, high): keeps phi arguments in a chosen band."""
    r = rng.uniform(low, high, size=(mdp.n_states, mdp.n_actions))
    return soft_q_iteration(mdp, r, temperature)


@st.composite
def mdps(draw, max_states=5, max_actions=3, min_gamma=0.0, max_gamma=0.95):
    n = draw(st.integers(1, max_states))
    a = draw(st.integers(1, max_actions))
    gamma = draw(st.floats(min_gamma, max_gamma))
    seed = draw(st.integers(0, 2**31 - 1))
    return make_random_mdp(n, a, gamma=gamma, seed=seed)


seeds = st.integers(0, 2**31 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
