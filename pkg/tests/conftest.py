import math

import numpy as np
import pytest

from dtnull.channel import ArrayGeometry, PathComponent, Scenario, ScenarioSpec, generate_scenario


def toy_scenario(with_interferer: bool = True, phase_bits: int = 1) -> Scenario:
    """M=2, h=[1,1], optional h1=[1,-1], sigma^2=0.1, Px=1."""
    geo = ArrayGeometry(2)
    ue = [PathComponent(1.0, 0.0)]
    intf = [[PathComponent(1.0, math.pi / 2)]] if with_interferer else []
    spec = ScenarioSpec(num_antennas=2, phase_bits=phase_bits, noise_power=0.1, num_interferers=len(intf),
                        ue_paths=[{"gain": [1.0, 0.0], "azimuth": 0.0}],
                        interferer_paths=[[{"gain": [1.0, 0.0], "azimuth": math.pi / 2}]] if intf else [])
    return generate_scenario(spec, 0)


@pytest.fixture
def toy():
    return toy_scenario()


@pytest.fixture
def default_scenario():
    return generate_scenario(ScenarioSpec(), 7)


def random_phases(rng, n, M, bits=3):
    from dtnull.beamforming import phase_set
    cb = phase_set(bits)
    return cb.values[rng.integers(0, len(cb), size=(n, M))]


# criterion lines from test_acceptance.py, repeated after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
