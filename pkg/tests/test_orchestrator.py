import numpy as np
import pytest

import dtnull.environment as environment
from dtnull.agent import AgentConfig, BeamAgent
from dtnull.beamforming import gram_matrix, phase_set, signal_matrix
from dtnull.channel import ScenarioSpec, generate_scenario
from dtnull.environment import RealEnvironment, TwinEnvironment
from dtnull.errors import BudgetError, InvalidConfigError, StateError
from dtnull.orchestrator import (LearningTrace, SwitchPolicy, active_reacquisition, initial_acquisition,
                                 run_assisted, run_baseline_real, virtual_phase)
from dtnull.twin import DigitalTwin, QuadraticPredictor, TwinConfig, factorize

AGENT = AgentConfig(batch_size=32, buffer_capacity=1024)


@pytest.fixture
def scenario():
    return generate_scenario(ScenarioSpec(), 3)


@pytest.fixture
def measure_calls(monkeypatch):
    """Counts every call of the scenario-backed measurement function."""
    calls = {"n": 0}
    original = environment.measure_real

    def counted(*args, **kw):
        calls["n"] += 1
        return original(*args, **kw)

    monkeypatch.setattr(environment, "measure_real", counted)
    return calls


def exact_twin(sc):
    M = sc.num_antennas
    return DigitalTwin(QuadraticPredictor(M, M, "interference", Q=factorize(gram_matrix(sc))),
                       QuadraticPredictor(M, M, "signal", Q=factorize(signal_matrix(sc))))


def test_initial_acquisition_fills_datasets(scenario):
    agent = BeamAgent(AGENT, 0)
    env = RealEnvironment(scenario)
    d_in, d_s, trace = initial_acquisition(agent, env, 50)
    assert len(d_in) == len(d_s) == 50
    assert env.count == 51
    assert trace.rows[0][2] == "seed" and len(trace.rows) == 51
    assert set(np.unique(d_in.phases)) <= set(phase_set(scenario.phase_bits).values.tolist())


def test_initial_acquisition_of_zero(scenario):
    env = RealEnvironment(scenario)
    d_in, d_s, trace = initial_acquisition(BeamAgent(AGENT, 0), env, 0)
    assert len(d_in) == 0 and env.count == 1


def test_initial_acquisition_respects_budget(scenario):
    with pytest.raises(BudgetError):
        initial_acquisition(BeamAgent(AGENT, 0), RealEnvironment(scenario, budget=20), 50)


def test_virtual_phase_stops_after_window_on_constant_twin(scenario):
    z = np.zeros((8, 1))
    twin = DigitalTwin(QuadraticPredictor(8, 1, "interference", Q=z), QuadraticPredictor(8, 1, "signal", Q=z))
    real = RealEnvironment(scenario)
    _, _, steps = virtual_phase(BeamAgent(AGENT, 0), TwinEnvironment(twin, real_counter=real), 10, 10_000)
    assert steps == 10 and real.count == 0


def test_virtual_phase_needs_trained_twin(scenario):
    twin = DigitalTwin.build(TwinConfig(), 8, 2, 0)
    with pytest.raises(StateError):
        virtual_phase(BeamAgent(AGENT, 0), TwinEnvironment(twin), 10, 100)


def test_exact_twin_replays_real_trajectory(scenario):
    twin_agent, real_agent = BeamAgent(AGENT, 5), BeamAgent(AGENT, 5)
    real = RealEnvironment(scenario)
    trace, _, steps = virtual_phase(twin_agent, TwinEnvironment(exact_twin(scenario), real_counter=real),
                                    10 ** 6, 300)
    assert real.count == 0
    virtual = np.array(trace.column("sinr"))
    replay = [real_agent.seed_measurement(real)] + [real_agent.step(real)[1] for _ in range(steps)]
    np.testing.assert_allclose(virtual, replay, rtol=1e-6)


def test_reacquisition_appends(scenario):
    agent = BeamAgent(AGENT, 1)
    env = RealEnvironment(scenario, budget=200)
    d_in, d_s, trace = initial_acquisition(agent, env, 50)
    for k in range(1, 3):
        active_reacquisition(agent, env, 30, d_in, d_s, trace)
        assert len(d_in) == len(d_s) == 50 + 30 * k
        assert env.count == 50 + 30 * k + 1
    with pytest.raises(BudgetError):
        active_reacquisition(agent, env, 100, d_in, d_s, trace)


def test_policy_validation():
    with pytest.raises(InvalidConfigError):
        SwitchPolicy(initial_real_budget=900, reacquisition_size=100, max_rounds=2, total_budget=1000)
    with pytest.raises(InvalidConfigError):
        SwitchPolicy(plateau_window=0)
    with pytest.raises(InvalidConfigError):
        SwitchPolicy.from_dict({"window": 3})
    p = SwitchPolicy(max_rounds=1)
    assert SwitchPolicy.from_dict(p.to_dict()) == p


def test_zero_rounds_is_pure_acquisition(scenario, measure_calls):
    res = run_assisted(scenario, AGENT, TwinConfig(), SwitchPolicy(max_rounds=0, initial_real_budget=40), 0)
    assert "virtual" not in res.trace.column("env_tag")
    assert res.real_count == 41 == measure_calls["n"]


def test_assisted_run_accounting(scenario, measure_calls):
    policy = SwitchPolicy(initial_real_budget=60, reacquisition_size=40, max_rounds=3, total_budget=200,
                          plateau_window=100, virtual_cap=400)
    res = run_assisted(scenario, AGENT, TwinConfig(), policy, 2)
    real_col = res.trace.column("cumulative_real")
    assert real_col[-1] == res.real_count == measure_calls["n"]
    assert max(real_col) <= policy.total_budget
    assert all(b >= a for a, b in zip(real_col, real_col[1:]))
    assert "virtual" in res.trace.column("env_tag")
    sizes = [r["dataset_size"] for r in res.rounds]
    assert sizes == sorted(sizes)
    # virtual rows never move the counter
    tags, counts = res.trace.column("env_tag"), real_col
    for i in range(1, len(tags)):
        if tags[i] == "virtual":
            assert counts[i] == counts[i - 1]


def test_baseline_accounting(scenario, measure_calls):
    res = run_baseline_real(scenario, AGENT, 300, 0)
    assert res.real_count == 301 == measure_calls["n"]
    assert set(res.trace.column("env_tag")) == {"real"}
    assert res.best_sinr == max(res.trace.column("sinr"))


def test_trace_csv(tmp_path, scenario):
    res = run_baseline_real(scenario, AGENT, 20, 0)
    res.trace.write_csv(tmp_path / "t.csv", {"config_hash": "abc", "seed": 0, "version": "x"})
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[:3] == ["# config_hash: abc", "# seed: 0", "# version: x"]
    assert lines[3] == "iteration,env_tag,phase,sinr,sinr_db,reward,cumulative_real"
    assert len(lines) == 4 + 21


def test_runs_are_reproducible(scenario):
    a = run_baseline_real(scenario, AGENT, 100, 4)
    b = run_baseline_real(scenario, AGENT, 100, 4)
    assert a.trace.rows == b.trace.rows
