import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtnull.channel import (ArrayGeometry, PathComponent, Scenario, ScenarioSpec, array_response,
                            generate_scenario, load_scenario, save_scenario, synthesize_channel)
from dtnull.errors import InvalidConfigError, InvalidInputError


def test_broadside_response_is_all_ones():
    np.testing.assert_allclose(array_response(ArrayGeometry(4), 0.0), np.ones(4), atol=1e-15)


def test_thirty_degree_response_steps_by_quarter_turn():
    a = array_response(ArrayGeometry(4), math.pi / 6)
    np.testing.assert_allclose(a, [1, 1j, -1, -1j], atol=1e-12)


def test_impairment_multiplies_elementwise():
    imp = [1.0, 0.9 * np.exp(0.1j)]
    a = array_response(ArrayGeometry(2, impairment=imp), 0.0)
    np.testing.assert_allclose(a, imp, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(0, math.pi), st.integers(1, 16))
def test_unimpaired_response_has_unit_modulus(az, el, M):
    a = array_response(ArrayGeometry(M), az, el)
    np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)


def test_geometry_validation():
    with pytest.raises(InvalidInputError):
        ArrayGeometry(0)
    with pytest.raises(InvalidInputError):
        ArrayGeometry(4, element_spacing=0.0)
    with pytest.raises(InvalidInputError):
        ArrayGeometry(4, impairment=[1, 1])


def test_single_path_channel():
    np.testing.assert_allclose(synthesize_channel(ArrayGeometry(4), [PathComponent(1.0, 0.0)]), np.ones(4))


def test_two_half_paths_sum_to_one():
    h = synthesize_channel(ArrayGeometry(4), [PathComponent(0.5, 0.0), PathComponent(0.5, 0.0)])
    np.testing.assert_allclose(h, np.ones(4))


def test_endfire_path_cancels_second_element():
    h = synthesize_channel(ArrayGeometry(2), [PathComponent(1.0, 0.0), PathComponent(1.0, math.pi / 2)])
    np.testing.assert_allclose(h, [2, 0], atol=1e-15)


def test_empty_path_list_rejected():
    with pytest.raises(InvalidInputError):
        synthesize_channel(ArrayGeometry(2), [])


@settings(max_examples=30, deadline=None)
@given(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
       st.lists(st.tuples(st.floats(-3, 3), st.floats(-math.pi / 2, math.pi / 2)), min_size=1, max_size=4))
def test_channel_is_linear_in_gains(c, raw):
    geo = ArrayGeometry(6)
    paths = [PathComponent(complex(g, 0.5 * g), az) for g, az in raw]
    scaled = [PathComponent(c * p.gain, p.azimuth) for p in paths]
    h = synthesize_channel(geo, paths)
    np.testing.assert_allclose(synthesize_channel(geo, scaled), c * h, rtol=1e-12, atol=1e-12 * (1 + abs(c)))


def test_explicit_scenario_ignores_seed():
    spec = ScenarioSpec(num_antennas=2, num_interferers=1, ue_paths=[{"gain": [1, 0], "azimuth": 0.0}],
                        interferer_paths=[[{"gain": [1, 0], "azimuth": 0.4}]])
    a, b = generate_scenario(spec, 1), generate_scenario(spec, 2)
    np.testing.assert_array_equal(a.ue_channel, b.ue_channel)
    np.testing.assert_array_equal(a.interference_matrix, b.interference_matrix)


def test_generation_is_deterministic():
    a, b = generate_scenario(ScenarioSpec(), 5), generate_scenario(ScenarioSpec(), 5)
    np.testing.assert_array_equal(a.ue_channel, b.ue_channel)
    np.testing.assert_array_equal(a.interference_matrix, b.interference_matrix)
    assert a.digest() == b.digest()


def test_different_seeds_move_interferers():
    a, b = generate_scenario(ScenarioSpec(), 1), generate_scenario(ScenarioSpec(), 2)
    assert a.interferer_paths[0][0].azimuth != b.interferer_paths[0][0].azimuth


def test_inconsistent_spec_rejected():
    with pytest.raises(InvalidConfigError):
        generate_scenario(ScenarioSpec(num_interferers=2, interferer_paths=[[{"gain": [1, 0], "azimuth": 0}]]), 0)
    with pytest.raises(InvalidConfigError):
        ScenarioSpec.from_dict({"antennas": 4})
    with pytest.raises(InvalidConfigError):
        generate_scenario(ScenarioSpec(noise_power=0.0), 0)


def test_scenario_json_round_trip(tmp_path):
    spec = ScenarioSpec(impairment_gain_std=0.1, impairment_phase_std=0.1)
    sc = generate_scenario(spec, 3)
    path = tmp_path / "s.json"
    save_scenario(sc, path)
    back = load_scenario(path)
    np.testing.assert_array_equal(back.ue_channel, sc.ue_channel)
    np.testing.assert_array_equal(back.interference_matrix, sc.interference_matrix)
    assert back.geometry == sc.geometry
    assert back.digest() == sc.digest()
    raw = json.loads(path.read_text())
    assert isinstance(raw["ue_channel"][0], list) and len(raw["ue_channel"][0]) == 2


def test_scenario_invariants():
    geo = ArrayGeometry(2)
    with pytest.raises(InvalidInputError):
        Scenario(geo, np.ones(2), [np.ones(3)])
    with pytest.raises(InvalidInputError):
        Scenario(geo, np.ones(2), [], tx_power=0.0)
