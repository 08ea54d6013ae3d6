import dataclasses

import numpy as np
import pytest

from qsynth import agent as ag
from qsynth import flowsheet as fs
from qsynth import qnet
from qsynth.agent import Hyperparams, TrainConfig

R, H, REMOVE, NOOP = 0, 1, 2, 3  # scenario-1 action indices

EMPTY = [0] * 12
ONLY_H = [0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 1]
H_THEN_R = [0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 1, 0]


def heater_reactor_noop(t, state):
    return (H, R)[t] if t < 2 else NOOP


def test_select_action_greedy_and_ties():
    rng = np.random.default_rng(0)
    assert ag.select_action([1.0, 3.0, 2.0], 0.0, rng) == 1
    assert ag.select_action([2.0, 2.0, 1.0], 0.0, rng) == 0


def test_select_action_uniform_when_exploring():
    rng = np.random.default_rng(1)
    n = 10_000
    counts = np.bincount([ag.select_action([0, 5, 0, 0], 1.0, rng) for _ in range(n)], minlength=4)
    sigma = np.sqrt(n * 0.25 * 0.75)
    assert np.all(np.abs(counts - n / 4) < 3 * sigma)


def test_select_action_advances_stream_even_when_greedy():
    a, b = np.random.default_rng(2), np.random.default_rng(2)
    ag.select_action([0, 1], 0.0, a)
    b.random()
    assert a.random() == b.random()


def test_epsilon_schedule():
    hp = Hyperparams()
    assert ag.epsilon_at(0, hp) == 0.08
    assert ag.epsilon_at(1, hp) == pytest.approx(0.0792, abs=1e-15)
    assert ag.epsilon_at(10, hp) == pytest.approx(0.08 * 0.99**10)


def test_bellman_targets():
    target = qnet.make_classical(12, 4, np.random.default_rng(0))
    target.params[:] = 0
    target.params[-4:] = [1.0, 4.0, -2.0, 0.0]
    y = ag.bellman_targets([-10.0, 1350.0], np.zeros((2, 12)), target, 0.5)
    assert y.tolist() == [-8.0, 1352.0]


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        Hyperparams(gamma=1.0)
    with pytest.raises(ValueError):
        Hyperparams(batch_size=64, buffer_size=32)
    with pytest.raises(ValueError):
        Hyperparams(epsilon0=1.5)


def test_replay_buffer_eviction():
    buf = ag.ReplayBuffer(3, 2)
    for i in range(5):
        buf.push([i % 2, 1], i, float(i), [1, i % 2])
    assert len(buf) == 3
    assert [t.action for t in buf.transitions()] == [2, 3, 4]
    assert [t.reward for t in buf.transitions()] == [2.0, 3.0, 4.0]
    with pytest.raises(ValueError):
        buf.sample(np.random.default_rng(0), 4)


def test_replay_sample_without_replacement():
    buf = ag.ReplayBuffer(10, 1)
    for i in range(10):
        buf.push([0], i, 0.0, [0])
    _, actions, _, _ = buf.sample(np.random.default_rng(3), 10)
    assert sorted(actions.tolist()) == list(range(10))


def _agent(scenario=1, kind="classical", seed=0, **hp):
    cfg = TrainConfig(scenario=scenario, agent=kind, seed=seed, hp=Hyperparams(**hp))
    return ag.build_agent(cfg)


def test_scripted_episode_rewards_and_buffer():
    agent = _agent()
    log = agent.run_episode(0, policy=heater_reactor_noop)
    assert [r.reward for r in log] == [-10.0] + [1350.0] * 7
    assert [r.screen for r in log[:2]] == ["NO_REACTOR", "OK"]
    assert [r.signature for r in log] == ["H"] + ["H-R"] * 7
    stored = agent.buffer.transitions()
    assert len(stored) == 8
    expected = [(EMPTY, H, -10.0, ONLY_H), (ONLY_H, R, 1350.0, H_THEN_R)]
    expected += [(H_THEN_R, NOOP, 1350.0, H_THEN_R)] * 6
    for t, (s, a, r, s2) in zip(stored, expected):
        assert (t.state.tolist(), t.action, t.reward, t.next_state.tolist()) == (s, a, r, s2)


def test_invalid_manipulation_is_penalized_and_stored():
    agent = _agent()
    log = agent.run_episode(0, policy=lambda t, s: REMOVE)
    assert [r.screen for r in log] == ["INVALID_MANIPULATION"] * 8
    assert all(r.reward == -10 and not r.simulated for r in log)
    assert len(agent.buffer) == 8


def test_zero_horizon_and_zero_episodes():
    agent = _agent(horizon=0)
    assert agent.run_episode(0) == []
    m = ag.train(TrainConfig(hp=Hyperparams(episodes=0)))
    assert (m.opt_sf, m.uniq_sf, m.feas_sf, m.first_opt_episode) == (0, 0, 0, None)
    assert m.param_count == 2180


def test_learning_only_on_screened_steps():
    agent = _agent(batch_size=4)
    for ep in range(6):
        for rec in agent.run_episode(ep):
            if rec.screen != "OK":
                assert rec.loss is None
            elif ep > 0:
                assert rec.loss is not None


def test_target_constant_between_syncs():
    agent = _agent(batch_size=4, target_update=5)
    for a, r in [(H, -10.0), (R, 1350.0), (NOOP, 1350.0), (REMOVE, -10.0)]:
        agent.buffer.push(EMPTY, a, r, H_THEN_R)
    frozen = agent.target.params.copy()
    for step in range(1, 13):
        agent._learn()
        if step % 5 == 0:
            assert np.array_equal(agent.target.params, agent.model.params)
            frozen = agent.target.params.copy()
        else:
            assert np.array_equal(agent.target.params, frozen)
            assert not np.array_equal(agent.model.params, frozen)
    assert agent.sync_count == 2


def _collect(cfg):
    logs = []
    m = ag.train(cfg, lambda ep, eps, recs, opt: logs.append((ep, eps, [r.to_dict() for r in recs], opt)))
    return logs, dataclasses.replace(m, runtime_s=0.0)


@pytest.mark.parametrize("kind", ["classical", "v2"])
def test_training_is_deterministic(kind):
    cfg = TrainConfig(agent=kind, seed=7, hp=Hyperparams(episodes=12))
    assert _collect(cfg) == _collect(cfg)


@pytest.mark.parametrize("seed", range(4))
def test_metric_bounds(seed):
    cfg = TrainConfig(scenario=2, seed=seed, hp=Hyperparams(episodes=25, epsilon0=0.5))
    m = ag.train(cfg)
    assert 0 <= m.opt_sf <= 25
    assert m.feas_sf <= m.uniq_sf <= len(fs.enumerate_screened(fs.scenario(2)))
    assert (m.first_opt_episode is None) == (m.opt_sf == 0)


def test_full_exploration_finds_every_structure():
    m = ag.train(TrainConfig(seed=3, hp=Hyperparams(episodes=200, epsilon0=1.0, epsilon_decay=0.0)))
    assert m.uniq_sf == 3
    assert m.feas_sf == 1
    assert m.opt_sf >= 1


def test_best_reward_per_scenario():
    for n in (1, 2, 3):
        assert ag.best_reward(fs.scenario(n)) == 1350.0
