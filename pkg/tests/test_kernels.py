import math
import os
import subprocess
import sys

import numpy as np
import pytest

from dtnull import _kernels_py, kernels
from dtnull.beamforming import phase_set
from dtnull.channel import ScenarioSpec, generate_scenario

compiled = pytest.importorskip("dtnull._kernels", reason="compiled extension not built")


def _case(seed, M=6, bits=2):
    sc = generate_scenario(ScenarioSpec(num_antennas=M, phase_bits=bits), seed)
    return sc, np.stack(sc.interferer_channels), phase_set(bits).values


@pytest.mark.parametrize("seed", range(5))
def test_sinr_scan_backends_agree(seed):
    sc, H, psi = _case(seed)
    a = compiled.sinr_scan(sc.ue_channel, H, sc.tx_power, sc.noise_power, psi, True)
    b = _kernels_py.sinr_scan(sc.ue_channel, H, sc.tx_power, sc.noise_power, psi, True)
    np.testing.assert_array_equal(np.asarray(a[0]), np.asarray(b[0]))
    assert a[1] == pytest.approx(b[1], rel=1e-12)


def test_sinr_scan_without_phase_shortcut_agrees():
    sc, H, psi = _case(9, M=4)
    a = compiled.sinr_scan(sc.ue_channel, H, sc.tx_power, sc.noise_power, psi, False)
    b = _kernels_py.sinr_scan(sc.ue_channel, H, sc.tx_power, sc.noise_power, psi, False)
    np.testing.assert_array_equal(np.asarray(a[0]), np.asarray(b[0]))
    # the full enumeration also has first digit 0 because that is the smallest member of the optimal class
    assert np.asarray(a[0])[0] == 0


def test_quantize_backends_agree():
    rng = np.random.default_rng(0)
    x = rng.uniform(-math.pi, math.pi, size=1000)
    x[:4] = [-3.0, math.pi / 4, 0.0, math.pi - 1e-12]
    for bits in (1, 2, 3, 5):
        psi = phase_set(bits).values
        np.testing.assert_array_equal(compiled.quantize_phases(x, psi), _kernels_py.quantize_phases(x, psi))


def test_fallback_selected_by_environment_variable():
    env = dict(os.environ, DTNULL_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from dtnull import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND in ("cython", "python")
