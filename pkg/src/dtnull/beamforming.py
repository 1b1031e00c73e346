"""Quantized analog combiners and exact power / SINR oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .channel import ArrayGeometry, Scenario, array_responses
from .errors import BudgetError, InvalidInputError

DEFAULT_ENUMERATION_CAP = 2 ** 24


@dataclass(frozen=True)
class PhaseCodebook:
    bits: int
    values: np.ndarray

    def __len__(self):
        return len(self.values)

    def index_of(self, phases) -> np.ndarray:
        """Codebook indices of phases that are exact codebook members."""
        phases = np.asarray(phases, dtype=float)
        idx = np.searchsorted(self.values, phases)
        idx = np.clip(idx, 0, len(self.values) - 1)
        if not np.allclose(self.values[idx], phases, atol=1e-12, rtol=0):
            raise InvalidInputError("phases are not codebook members")
        return idx


def phase_set(bits: int) -> PhaseCodebook:
    """The ``2**bits`` uniformly spaced phases ``-pi + k*2pi/2**bits``, k = 1..2**bits."""
    if int(bits) != bits or not 1 <= bits <= 16:
        raise InvalidInputError(f"phase resolution must be an integer in [1, 16], got {bits}")
    n = 2 ** int(bits)
    k = np.arange(1, n + 1)
    values = -np.pi + k * (2 * np.pi / n)
    values[-1] = np.pi
    return PhaseCodebook(int(bits), values)


def quantize_phases(predicted, codebook: PhaseCodebook, circular: bool = False) -> np.ndarray:
    """Nearest codebook phase per element (linear distance unless ``circular``)."""
    x = np.asarray(predicted, dtype=float)
    if not circular:
        return kernels.quantize_phases(x, codebook.values).reshape(x.shape)
    d = np.abs(np.angle(np.exp(1j * (x.reshape(-1, 1) - codebook.values[None, :]))))
    return codebook.values[np.argmin(d, axis=1)].reshape(x.shape)


class Combiner:
    """Analog combining vector ``w = exp(j*theta) / sqrt(M)``."""

    __slots__ = ("phases", "weights")

    def __init__(self, phases):
        self.phases = np.array(phases, dtype=float).reshape(-1)
        if self.phases.size == 0:
            raise InvalidInputError("a combiner needs at least one phase")
        self.weights = np.exp(1j * self.phases) / math.sqrt(self.phases.size)

    @property
    def num_antennas(self) -> int:
        return self.phases.size

    def __repr__(self):
        return f"Combiner({np.array2string(self.phases, precision=4)})"

    def __eq__(self, other):
        return isinstance(other, Combiner) and np.array_equal(self.phases, other.phases)

    __hash__ = None


def combiner_weights(phases) -> np.ndarray:
    """Weights for a batch of phase vectors, shape ``(N, M)``."""
    phases = np.atleast_2d(np.asarray(phases, dtype=float))
    return np.exp(1j * phases) / math.sqrt(phases.shape[1])


@dataclass(frozen=True)
class PowerReport:
    signal_power: float
    in_power: float
    sinr: float
    rate: float

    @property
    def sinr_db(self) -> float:
        return 10 * math.log10(self.sinr) if self.sinr > 0 else -math.inf


def _check_dims(combiner: Combiner, scenario: Scenario):
    if combiner.num_antennas != scenario.num_antennas:
        raise InvalidInputError(
            f"combiner has {combiner.num_antennas} phases, scenario has {scenario.num_antennas} antennas")


def compute_powers(combiner: Combiner, scenario: Scenario) -> PowerReport:
    _check_dims(combiner, scenario)
    w = combiner.weights
    ps = abs(np.vdot(w, scenario.ue_channel)) ** 2 * scenario.tx_power
    pin = scenario.noise_power
    for hk in scenario.interferer_channels:
        pin += abs(np.vdot(w, hk)) ** 2 * scenario.tx_power
    sinr = ps / pin
    return PowerReport(float(ps), float(pin), float(sinr), math.log2(1 + sinr))


def batch_powers(phases, scenario: Scenario):
    """Vectorized ``(P_S, P_IN)`` for a batch of phase vectors."""
    W = combiner_weights(phases)
    ps = np.abs(W.conj() @ scenario.ue_channel) ** 2 * scenario.tx_power
    H = scenario.interference_matrix
    pin = np.sum(np.abs(W.conj() @ H) ** 2, axis=1) * scenario.tx_power + scenario.noise_power
    return ps, pin


def batch_sinr(phases, scenario: Scenario) -> np.ndarray:
    ps, pin = batch_powers(phases, scenario)
    return ps / pin


def gram_matrix(scenario: Scenario) -> np.ndarray:
    """``A = P_x H H^H + sigma^2 I`` so that ``P_IN = w^H A w``."""
    H = scenario.interference_matrix
    return scenario.tx_power * (H @ H.conj().T) + scenario.noise_power * np.eye(scenario.num_antennas)


def signal_matrix(scenario: Scenario) -> np.ndarray:
    h = scenario.ue_channel
    return scenario.tx_power * np.outer(h, h.conj())


def beam_gain_pattern(combiner: Combiner, geometry: ArrayGeometry, azimuth_grid: Sequence[float]) -> np.ndarray:
    """Linear gain ``|w^H a(phi, pi/2)|^2`` over an azimuth grid."""
    if len(azimuth_grid) == 0:
        raise InvalidInputError("azimuth grid is empty")
    A = array_responses(geometry, azimuth_grid)
    return np.abs(A @ combiner.weights.conj()) ** 2


def null_depth_db(combiner: Combiner, scenario: Scenario) -> np.ndarray:
    """Gain toward the UE's strongest path over gain toward each interferer's strongest path, in dB."""
    if not scenario.ue_paths or not scenario.interferer_paths:
        raise InvalidInputError("null depth needs the scenario's path geometry")

    def strongest(paths):
        return max(paths, key=lambda p: abs(p.gain)).azimuth

    az = [strongest(scenario.ue_paths)] + [strongest(ps) for ps in scenario.interferer_paths]
    g = beam_gain_pattern(combiner, scenario.geometry, az)
    with np.errstate(divide="ignore"):
        g_db = 10 * np.log10(g)
    return g_db[0] - g_db[1:]


def matched_beam(scenario: Scenario) -> Combiner:
    """Interference-blind beam: the quantized conjugate phases of the UE channel."""
    cb = phase_set(scenario.phase_bits)
    return Combiner(quantize_phases(np.angle(scenario.ue_channel), cb, circular=True))


def exhaustive_search(scenario: Scenario, cap: int = DEFAULT_ENUMERATION_CAP):
    """Global SINR optimum over every codebook phase assignment.

    Ties (within 1e-12 relative) resolve to the lexicographically smallest
    phase-index vector.  A common phase offset leaves SINR unchanged, so only
    beams with the first antenna at codebook index 0 are enumerated; that
    representative is also the lexicographically smallest of its class.
    """
    cb = phase_set(scenario.phase_bits)
    M = scenario.num_antennas
    if scenario.phase_bits * M > math.log2(cap):
        raise BudgetError(f"2^{scenario.phase_bits * M} candidate beams exceed the enumeration cap {cap}")
    H = np.stack(scenario.interferer_channels) if scenario.interferer_channels else np.zeros((0, M), complex)
    digits, _ = kernels.sinr_scan(scenario.ue_channel, H, scenario.tx_power, scenario.noise_power,
                                  cb.values, True)
    combiner = Combiner(cb.values[np.asarray(digits)])
    return combiner, compute_powers(combiner, scenario)
