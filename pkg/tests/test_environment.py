import math

import numpy as np
import pytest

from dtnull.beamforming import Combiner, compute_powers, gram_matrix, signal_matrix
from dtnull.environment import (MeasurementLog, MeasurementReport, NoiseModel, RealEnvironment, TwinEnvironment,
                                derive_signal_power, measure_real, measure_twin, report_sinr)
from dtnull.errors import BudgetError, StateError
from dtnull.twin import DigitalTwin, QuadraticPredictor, factorize

from conftest import random_phases, toy_scenario


def test_matched_filter_report():
    rep = measure_real(toy_scenario(with_interferer=False), Combiner([0, 0]))
    assert rep.total_power == pytest.approx(2.1)
    assert rep.in_power == pytest.approx(0.1)


def test_exact_mode_is_deterministic_and_exact(default_scenario):
    rng = np.random.default_rng(0)
    for ph in random_phases(rng, 50, 8):
        c = Combiner(ph)
        a, b = measure_real(default_scenario, c), measure_real(default_scenario, c)
        assert a == b
        p = compute_powers(c, default_scenario)
        assert a.in_power == pytest.approx(p.in_power, rel=1e-12)
        assert a.total_power == pytest.approx(p.signal_power + p.in_power, rel=1e-12)
        assert derive_signal_power(a) == pytest.approx(p.signal_power, rel=1e-12, abs=1e-12 * p.in_power)


def test_noisy_measurements_reproducible(default_scenario):
    c = Combiner(np.zeros(8))
    env_a = RealEnvironment(default_scenario, NoiseModel(1.0, seed=3))
    env_b = RealEnvironment(default_scenario, NoiseModel(1.0, seed=3))
    ra = [env_a.measure(c) for _ in range(5)]
    rb = [env_b.measure(c) for _ in range(5)]
    assert ra == rb
    assert ra[0] != measure_real(default_scenario, c)
    assert len({r.in_power for r in ra}) == 5


@pytest.mark.parametrize("report, expected", [((2.1, 0.1), 2.0), ((0.05, 0.1), 0.0), ((0.7, 0.7), 0.0)])
def test_derive_signal_power(report, expected):
    assert derive_signal_power(MeasurementReport(*report)) == pytest.approx(expected)


def test_report_sinr():
    assert report_sinr(MeasurementReport(2.1, 0.1)) == pytest.approx(20.0)
    assert report_sinr(MeasurementReport(0.0, 0.0)) == 0.0


def test_real_counter_and_budget(toy):
    env = RealEnvironment(toy, budget=3)
    for _ in range(3):
        env.measure(Combiner([0, 0]))
    assert env.count == 3 and env.remaining == 0
    with pytest.raises(BudgetError):
        env.measure(Combiner([0, 0]))
    assert env.count == 3


def exact_twin(scenario):
    q_in = QuadraticPredictor(scenario.num_antennas, scenario.num_antennas, "interference",
                              Q=factorize(gram_matrix(scenario)))
    q_s = QuadraticPredictor(scenario.num_antennas, scenario.num_antennas, "signal",
                             Q=factorize(signal_matrix(scenario)))
    return DigitalTwin(q_in, q_s)


def test_exact_twin_reproduces_real_reports(default_scenario):
    twin = exact_twin(default_scenario)
    for ph in random_phases(np.random.default_rng(5), 100, 8):
        c = Combiner(ph)
        r, t = measure_real(default_scenario, c), measure_twin(twin, c)
        assert t.total_power == pytest.approx(r.total_power, rel=1e-6)
        assert t.in_power == pytest.approx(r.in_power, rel=1e-6)


def test_zero_twin_reports_zero():
    z = np.zeros((4, 2))
    twin = DigitalTwin(QuadraticPredictor(4, 2, "interference", Q=z), QuadraticPredictor(4, 2, "signal", Q=z))
    assert measure_twin(twin, Combiner(np.zeros(4))) == MeasurementReport(0.0, 0.0)


def test_untrained_twin_refuses():
    twin = DigitalTwin(QuadraticPredictor(4, 2, "interference", rng=0), QuadraticPredictor(4, 2, "signal", rng=0))
    with pytest.raises(StateError):
        measure_twin(twin, Combiner(np.zeros(4)))


def test_twin_calls_never_count(default_scenario):
    real = RealEnvironment(default_scenario)
    env = TwinEnvironment(exact_twin(default_scenario), real_counter=real)
    c = Combiner(np.zeros(8))
    for _ in range(10_000):
        env.measure(c)
    assert real.count == 0


def test_measurement_log(tmp_path, toy):
    log = MeasurementLog(tmp_path / "m.csv")
    env = RealEnvironment(toy, log=log)
    env.measure(Combiner([0, 0]))
    env.measure(Combiner([0, math.pi]))
    log.close()
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "iteration,env_tag,total_power,in_power,cumulative_real_count"
    assert lines[2].split(",")[1] == "real" and lines[2].endswith(",2")
