import numpy as np
import pytest

from d2dmarl import baselines as bl
from d2dmarl.env import D2DEnv
from d2dmarl.marl import TrainerConfig


def tiny_cfg(**kw):
    base = dict(warmup_slots=30, train_slots=60, dqn_hidden=(8,), dqn_batch_size=8)
    base.update(kw)
    return bl.BaselineConfig(**base)


def test_q_update_hand_value():
    t = bl.QTable(3, 2)
    t.q[2] = [1.0, 0.5]
    t.update(0, 1, 2.0, 2, alpha=0.1, gamma=0.95)
    assert t.q[0, 1] == pytest.approx(0.29500000000000004, abs=1e-15)
    assert t.greedy(0) == 1


def test_state_index_bins():
    K = 4
    row = np.array([-1.0, 0.0, 0.99, 0, 0, 1, 0])
    # bins (0, 2, 3) -> code 0*16 + 2*4 + 3 = 11; k_prev = 2
    assert bl.state_index(row, K) == 11 * 5 + 2
    fresh = np.array([5.0, -5.0, 0.0, 0, 0, 0, 0])
    assert bl.state_index(fresh, K) == (3 * 16 + 0 * 4 + 2) * 5 + 4
    assert bl.num_states(K) == 64 * 5


def test_automaton_hand_update():
    st = bl.AutomatonState.uniform(1, 4, 0.05)
    r_hat = bl.automaton_update(st, 0, 1, 3.0)
    assert r_hat == 1.0
    assert st.probs[0] == pytest.approx([0.2375, 0.2875, 0.2375, 0.2375], abs=1e-15)
    # negative reward -> inaction
    before = st.probs.copy()
    assert bl.automaton_update(st, 0, 2, -1.0) == 0.0
    assert np.array_equal(before, st.probs)
    assert st.probs.sum() == pytest.approx(1.0)


def test_epsilon_schedule():
    c = tiny_cfg(train_slots=11)
    assert c.epsilon(0) == 1.0 and c.epsilon(10) == pytest.approx(0.05)
    assert c.epsilon(100) == pytest.approx(0.05)


def test_dqn_targets_and_loss_drop():
    rng = np.random.default_rng(0)
    ag = bl.DQNAgent(5, 3, (16,), 1e-2, 0.01, 0.9, 0)
    s, s2 = rng.normal(size=(32, 5)), rng.normal(size=(32, 5))
    a, r = rng.integers(0, 3, size=32), rng.normal(size=32)
    y = ag.bellman_targets(r, s2)
    assert np.allclose(y, r + 0.9 * ag.target(s2).max(axis=1))
    l0 = ag.loss(s, a, r, s2)
    for _ in range(100):
        ag.update(s, a, r, s2)
    assert ag.loss(s, a, r, s2) < 0.5 * l0


@pytest.mark.parametrize("maker", [bl.q_learning_agent, bl.dqn_agent, bl.sla_agent])
def test_baselines_run_and_are_deterministic(small_cell, maker):
    res = []
    for _ in range(2):
        env = D2DEnv(small_cell)
        env.reset(4)
        policy, log = maker(env, tiny_cfg(), 4)
        env.reset(4, 1)
        res.append((bl.evaluate_baseline(env, policy, 40, 4), [r["total_reward"] for r in log]))
    assert res[0] == res[1]
    metrics, log = res[0]
    assert metrics["slots"] == 40 and len(log) == 90
    assert 0.0 <= metrics["cue_outage_prob"] <= 1.0


def test_random_allocator_and_independent_ac(small_cell):
    env = D2DEnv(small_cell)
    env.reset(0)
    m = bl.random_allocator(env, 50, 0)
    assert m["slots"] == 50
    env.reset(0)
    res = bl.independent_ac_agent(env, TrainerConfig(warmup_slots=10, train_slots=10,
                                                     batch_size=4, actor_hidden=(4,),
                                                     critic_hidden=(4, 4)), 0)
    assert all(len(nb) == 1 for nb in res.neighbors)


def test_sla_keeps_learning_in_evaluation(small_cell):
    env = D2DEnv(small_cell)
    env.reset(0)
    policy, _ = bl.sla_agent(env, tiny_cfg(), 0)
    before = policy.state.probs.copy()
    bl.evaluate_baseline(env, policy, 20, 0)
    assert not np.array_equal(before, policy.state.probs)


def test_config_validation():
    with pytest.raises(ValueError):
        bl.BaselineConfig(sla_step=1.5)
    with pytest.raises(ValueError):
        bl.BaselineConfig(ql_bins=0)
