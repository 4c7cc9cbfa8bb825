import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iqtab.envs import (GRID_ACTIONS, LOOP_A1, LOOP_A2, build_env, grid_goal_state,
                        grid_state_table, make_gridworld, make_loop_mdp, make_random_mdp)
from iqtab.evaluation import greedy_policy, rollout
from iqtab.mdp import MdpError, TabularMdp
from iqtab.soft import soft_optimal_policy


def test_one_cell_grid_self_loops():
    mdp = make_gridworld(1, 1, goal=(0, 0))
    assert mdp.n_states == 1 and mdp.n_actions == 5
    assert np.all(mdp.transition[0, :, 0] == 1.0)


def test_grid_geometry():
    mdp = make_gridworld(5, 5, goal=(4, 4), obstacles=[(2, 2)])
    assert mdp.n_states == 24
    assert np.allclose(mdp.p0, 1 / 24)
    assert list(mdp.info["actions"]) == list(GRID_ACTIONS) == ["up", "down", "left", "right", "stay"]
    g = grid_goal_state(mdp)
    assert np.all(mdp.true_reward[g] == 1.0)
    assert np.isnan(grid_state_table(mdp, np.arange(24.0))[2, 2])


def test_grid_walls_keep_position():
    mdp = make_gridworld(3, 3, goal=(2, 2))
    corner = mdp.info["cells"].index([0, 0])
    left = GRID_ACTIONS.index("left")
    assert mdp.transition[corner, left, corner] == 1.0


@pytest.mark.parametrize("kw", [dict(goal=(9, 9)), dict(goal=(1, 1), obstacles=[(1, 1)]),
                                dict(width=0)])
def test_grid_invalid_geometry(kw):
    with pytest.raises(MdpError):
        make_gridworld(**{"width": 3, "height": 3, **kw})


def test_grid_far_corner_reaches_goal_in_8_steps():
    mdp = make_gridworld(5, 5, goal=(4, 4), gamma=0.9)
    _, pi = soft_optimal_policy(mdp, mdp.true_reward, 0.05)
    start = mdp.info["cells"].index([0, 0])
    ro = rollout(mdp, greedy_policy(pi), horizon=8, start_states=[start])
    assert ro.next_states[0, 7] == grid_goal_state(mdp)
    assert grid_goal_state(mdp) not in ro.next_states[0, :7]


def test_loop_structure():
    mdp = make_loop_mdp(0.5)
    assert mdp.transition[0, LOOP_A1, 1] == 0.5 and mdp.transition[0, LOOP_A1, 2] == 0.5
    assert mdp.transition[0, LOOP_A2, 2] == 1.0
    assert mdp.transition[1, LOOP_A2, 1] == 1.0 and mdp.transition[2, LOOP_A1, 1] == 1.0
    assert make_loop_mdp(0.0).transition[0, LOOP_A1, 1] == 1.0
    assert np.array_equal(mdp.p0, [1, 0, 0])


def test_loop_optimal_policy_takes_green_actions():
    mdp = make_loop_mdp(0.5, 0.99)
    _, pi = soft_optimal_policy(mdp, mdp.true_reward, 0.01)
    assert list(pi.argmax(1)) == [LOOP_A1, LOOP_A2, LOOP_A1]
    ro = rollout(mdp, greedy_policy(pi), 300, 100, seed=0)
    assert ro.returns.mean() == 100.0


def test_loop_rejects_bad_p():
    with pytest.raises(MdpError):
        make_loop_mdp(1.5)


@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_random_mdp_deterministic_and_valid(n, a, seed):
    m1, m2 = make_random_mdp(n, a, seed=seed), make_random_mdp(n, a, seed=seed)
    assert np.array_equal(m1.transition, m2.transition)
    assert np.allclose(m1.transition.sum(2), 1.0)
    assert isinstance(m1, TabularMdp)


def test_degenerate_random_mdp():
    m = make_random_mdp(1, 1)
    assert m.transition.shape == (1, 1, 1) and m.transition[0, 0, 0] == 1.0


def test_build_env_forms(tmp_path):
    assert build_env({"kind": "loop", "p": 0.3}).transition[0, LOOP_A1, 2] == pytest.approx(0.3)
    assert build_env({"gridworld": {"width": 2, "height": 2, "goal": [1, 1]}}).n_states == 4
    m = make_random_mdp(3, 2, seed=1)
    m.save(tmp_path / "m.json")
    assert build_env({"path": str(tmp_path / "m.json"), "gamma": 0.5}).gamma == 0.5
    with pytest.raises(MdpError):
        build_env({"kind": "atari"})
