import math

import numpy as np
import pytest

from dtnull.agent import AgentConfig, BeamAgent, ReplayBuffer, Transition, compute_reward
from dtnull.beamforming import phase_set
from dtnull.environment import MeasurementReport, RealEnvironment
from dtnull.errors import InvalidConfigError, StateError

from conftest import toy_scenario


class StubEnv:
    """Reports a scripted SINR sequence; counts calls."""

    is_real = False

    def __init__(self, sinrs, num_antennas=4):
        self.sinrs = iter(sinrs)
        self.num_antennas = num_antennas
        self.calls = 0
        self.seen = []

    def measure(self, combiner):
        self.calls += 1
        s = next(self.sinrs)
        self.seen.append(s)
        return MeasurementReport(total_power=s + 1.0, in_power=1.0)


def small_agent(**kw):
    cfg = AgentConfig(num_antennas=4, phase_bits=2, batch_size=8, buffer_capacity=64, **kw)
    return BeamAgent(cfg, seed=0)


@pytest.mark.parametrize("now, before, expected", [(5, 3, 1.0), (4, 4, -1.0), (2, 3, -1.0)])
def test_reward_rule(now, before, expected):
    assert compute_reward(now, before) == expected


def test_greedy_action_is_deterministic():
    agent = small_agent()
    a1, q1 = agent.select_action(explore=False)
    a2, q2 = agent.select_action(explore=False)
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(q1, q2)


def test_actions_in_range_and_executed_on_codebook():
    agent = small_agent(noise_scale=50.0)
    cb = set(phase_set(2).values.tolist())
    for _ in range(50):
        a, q = agent.select_action(explore=True)
        assert np.all(np.abs(a) < math.pi)
        assert set(q.tolist()) <= cb


def test_increasing_sinr_gives_positive_rewards():
    agent = small_agent()
    env = StubEnv(range(1, 100))
    for _ in range(10):
        t, _, _ = agent.step(env, learn=False)
        assert t.reward == 1.0


def test_constant_sinr_gives_negative_rewards():
    agent = small_agent()
    env = StubEnv([3.0] * 100)
    for _ in range(10):
        t, _, _ = agent.step(env, learn=False)
        assert t.reward == -1.0


def test_one_real_measurement_per_step(toy):
    agent = BeamAgent(AgentConfig(num_antennas=2, phase_bits=1, batch_size=4, buffer_capacity=16), 0)
    env = RealEnvironment(toy)
    for k in range(1, 21):
        agent.step(env)
        assert env.count == k + 1


def test_transition_invariants_and_sinr_memory():
    agent = small_agent()
    rng = np.random.default_rng(0)
    env = StubEnv(rng.uniform(0, 10, size=200))
    for _ in range(100):
        t, sinr, _ = agent.step(env)
        np.testing.assert_array_equal(t.next_state, agent.quantize(t.action))
        assert t.reward in (1.0, -1.0)
        assert agent.last_sinr == pytest.approx(env.seen[-1], rel=1e-12)
        assert sinr == agent.last_sinr
    assert set(np.unique(agent.buffer.rewards[:len(agent.buffer)])) <= {1.0, -1.0}


def test_frozen_constant_actor_reaches_fixed_point():
    agent = small_agent()
    last = agent.config.actor_spec.num_layers - 1
    agent.actor.params[f"W{last}"][:] = 0.0
    agent.actor.params[f"b{last}"][:] = [0.1, 1.2, -1.4, 2.9]
    env = StubEnv([1.0] * 10)
    states = [agent.step(env, explore=False, learn=False)[0].next_state for _ in range(3)]
    np.testing.assert_array_equal(states[1], states[2])


def test_buffer_is_bounded_fifo():
    buf = ReplayBuffer(3, 2)
    for k in range(5):
        buf.add(Transition(np.full(2, k), np.full(2, k), 1.0, np.full(2, k)))
    assert len(buf) == 3
    assert [t.state[0] for t in buf.transitions()] == [2, 3, 4]
    with pytest.raises(StateError):
        buf.sample(4, np.random.default_rng(0))


def test_buffer_sampling_is_seeded():
    buf = ReplayBuffer(50, 1)
    for k in range(50):
        buf.add(Transition(np.array([k]), np.array([k]), 1.0, np.array([k])))
    a = buf.sample(10, np.random.default_rng(3))[0]
    b = buf.sample(10, np.random.default_rng(3))[0]
    np.testing.assert_array_equal(a, b)


def _batch(agent, n=16, reward=1.0, seed=0):
    rng = np.random.default_rng(seed)
    cb = phase_set(agent.config.phase_bits).values
    s = cb[rng.integers(0, len(cb), size=(n, 4))]
    a = rng.uniform(-3, 3, size=(n, 4))
    return s, a, np.full(n, reward), agent.quantize(a)


def test_zero_discount_target_is_the_reward(monkeypatch):
    agent = small_agent(gamma=0.0)
    captured = {}
    original = agent.critic.loss_and_grad

    def spy(x, targets, *args, **kw):
        captured["y"] = np.asarray(targets)
        return original(x, targets, *args, **kw)

    monkeypatch.setattr(agent.critic, "loss_and_grad", spy)
    agent.ddpg_update(_batch(agent))
    np.testing.assert_array_equal(captured["y"], 1.0)


def test_critic_loss_decreases_on_fixed_batch():
    agent = small_agent(gamma=0.0)
    batch = _batch(agent, n=32, seed=1)
    batch = (batch[0], batch[1], np.where(np.arange(32) % 2 == 0, 1.0, -1.0), batch[3])
    losses = [agent.ddpg_update(batch)[0] for _ in range(100)]
    assert losses[-1] < losses[0]


def test_unit_tau_copies_online_networks():
    agent = small_agent(tau=1.0)
    agent.ddpg_update(_batch(agent))
    for online, target in ((agent.actor, agent.actor_target), (agent.critic, agent.critic_target)):
        for k in online.params:
            np.testing.assert_array_equal(online.params[k], target.params[k])


def test_update_needs_two_samples():
    agent = small_agent()
    s, a, r, s2 = _batch(agent, n=1)
    with pytest.raises(StateError):
        agent.ddpg_update((s, a, r, s2))


def test_learning_starts_once_buffer_holds_a_batch():
    agent = small_agent()
    env = StubEnv(np.linspace(1, 2, 100))
    for _ in range(7):
        agent.step(env)
    assert agent.updates == 0
    agent.step(env)
    assert agent.updates == 1


def test_config_validation_and_round_trip():
    with pytest.raises(InvalidConfigError):
        AgentConfig(gamma=1.0)
    with pytest.raises(InvalidConfigError):
        AgentConfig.from_dict({"learning_rate": 1})
    cfg = AgentConfig(noise_scale=0.5)
    assert AgentConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.actor_spec.layer_sizes == [8, 128, 128, 8]
    assert cfg.critic_spec.layer_sizes == [16, 256, 16, 1]


def test_checkpoint_round_trip(tmp_path):
    agent = small_agent()
    env = StubEnv(np.linspace(1, 2, 100))
    for _ in range(12):
        agent.step(env)
    agent.save(tmp_path / "a.json")
    import json
    back = BeamAgent.from_dict(json.loads((tmp_path / "a.json").read_text()))
    np.testing.assert_array_equal(back.select_action(explore=False)[0], agent.select_action(explore=False)[0])
    assert back.steps == agent.steps
