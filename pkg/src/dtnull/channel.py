"""Uniform linear array responses, geometric multipath channels and scenarios.

A channel is represented as a complex ``numpy`` vector of length ``M``.  A
:class:`Scenario` bundles everything the simulated world knows and the learner
never sees: the user and interferer channels, transmit and noise powers and the
phase-shifter resolution.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .errors import InvalidConfigError, InvalidInputError

BROADSIDE = math.pi / 2


@dataclass(frozen=True)
class ArrayGeometry:
    """ULA along one axis with optional static per-element complex gain errors."""

    num_antennas: int
    element_spacing: float = 0.5
    impairment: Optional[np.ndarray] = None

    def __post_init__(self):
        if int(self.num_antennas) != self.num_antennas or self.num_antennas < 1:
            raise InvalidInputError(f"num_antennas must be a positive integer, got {self.num_antennas}")
        if not self.element_spacing > 0:
            raise InvalidInputError(f"element_spacing must be positive, got {self.element_spacing}")
        if self.impairment is not None:
            imp = np.asarray(self.impairment, dtype=complex).reshape(-1)
            if imp.shape[0] != self.num_antennas:
                raise InvalidInputError(
                    f"impairment has length {imp.shape[0]}, expected {self.num_antennas}")
            object.__setattr__(self, "impairment", imp)

    def __eq__(self, other):
        if not isinstance(other, ArrayGeometry):
            return NotImplemented
        if self.num_antennas != other.num_antennas or self.element_spacing != other.element_spacing:
            return False
        if self.impairment is None or other.impairment is None:
            return self.impairment is None and other.impairment is None
        return bool(np.array_equal(self.impairment, other.impairment))

    __hash__ = None


@dataclass(frozen=True)
class PathComponent:
    gain: complex
    azimuth: float
    elevation: float = BROADSIDE

    def __post_init__(self):
        g = complex(self.gain)
        if not (math.isfinite(g.real) and math.isfinite(g.imag)):
            raise InvalidInputError(f"path gain must be finite, got {self.gain}")
        if not -math.pi < self.azimuth <= math.pi:
            raise InvalidInputError(f"azimuth {self.azimuth} outside (-pi, pi]")
        if not 0.0 <= self.elevation <= math.pi:
            raise InvalidInputError(f"elevation {self.elevation} outside [0, pi]")
        object.__setattr__(self, "gain", g)


def array_response(geometry: ArrayGeometry, azimuth: float, elevation: float = BROADSIDE) -> np.ndarray:
    """Response of the array to a plane wave from (azimuth, elevation).

    Element ``m`` carries phase ``2*pi*d*m*sin(azimuth)*sin(elevation)``; the
    optional impairment multiplies element-wise.
    """
    m = np.arange(geometry.num_antennas)
    phase = 2 * np.pi * geometry.element_spacing * m * math.sin(azimuth) * math.sin(elevation)
    a = np.exp(1j * phase)
    if geometry.impairment is not None:
        a = a * geometry.impairment
    return a


def array_responses(geometry: ArrayGeometry, azimuths, elevation: float = BROADSIDE) -> np.ndarray:
    """Stacked responses, shape ``(len(azimuths), M)``."""
    az = np.asarray(azimuths, dtype=float).reshape(-1)
    m = np.arange(geometry.num_antennas)
    phase = 2 * np.pi * geometry.element_spacing * np.outer(np.sin(az) * math.sin(elevation), m)
    a = np.exp(1j * phase)
    if geometry.impairment is not None:
        a = a * geometry.impairment[None, :]
    return a


def synthesize_channel(geometry: ArrayGeometry, paths: Sequence[PathComponent]) -> np.ndarray:
    if len(paths) == 0:
        raise InvalidInputError("a channel needs at least one path")
    h = np.zeros(geometry.num_antennas, dtype=complex)
    for p in paths:
        h += p.gain * array_response(geometry, p.azimuth, p.elevation)
    return h


@dataclass
class Scenario:
    """Ground truth of one simulated radio environment.

    ``ue_paths`` and ``interferer_paths`` are kept when the channels were
    synthesized from paths so that beam patterns can be evaluated toward the
    actual directions; they may be empty for imported raw channels.
    """

    geometry: ArrayGeometry
    ue_channel: np.ndarray
    interferer_channels: list
    tx_power: float = 1.0
    noise_power: float = 0.01
    phase_bits: int = 3
    seed: int = 0
    ue_paths: list = field(default_factory=list)
    interferer_paths: list = field(default_factory=list)

    def __post_init__(self):
        M = self.geometry.num_antennas
        self.ue_channel = np.asarray(self.ue_channel, dtype=complex).reshape(-1)
        self.interferer_channels = [np.asarray(h, dtype=complex).reshape(-1) for h in self.interferer_channels]
        for h in [self.ue_channel, *self.interferer_channels]:
            if h.shape[0] != M:
                raise InvalidInputError(f"channel of length {h.shape[0]} does not match M={M}")
            if not np.all(np.isfinite(h)):
                raise InvalidInputError("channel coefficients must be finite")
        if not self.tx_power > 0:
            raise InvalidInputError("tx_power must be positive")
        if not self.noise_power > 0:
            raise InvalidInputError("noise_power must be positive")
        if int(self.phase_bits) != self.phase_bits or self.phase_bits < 1:
            raise InvalidInputError("phase_bits must be a positive integer")

    @property
    def num_antennas(self) -> int:
        return self.geometry.num_antennas

    @property
    def num_interferers(self) -> int:
        return len(self.interferer_channels)

    @property
    def interference_matrix(self) -> np.ndarray:
        """``H = [h_1, ..., h_K]`` with shape ``(M, K)``."""
        if not self.interferer_channels:
            return np.zeros((self.num_antennas, 0), dtype=complex)
        return np.stack(self.interferer_channels, axis=1)

    def to_dict(self) -> dict:
        g = self.geometry
        return {
            "num_antennas": g.num_antennas,
            "element_spacing": g.element_spacing,
            "impairment": None if g.impairment is None else _complex_to_pairs(g.impairment),
            "ue_channel": _complex_to_pairs(self.ue_channel),
            "interferer_channels": [_complex_to_pairs(h) for h in self.interferer_channels],
            "tx_power": self.tx_power,
            "noise_power": self.noise_power,
            "phase_bits": self.phase_bits,
            "seed": self.seed,
            "ue_paths": [_path_to_dict(p) for p in self.ue_paths],
            "interferer_paths": [[_path_to_dict(p) for p in paths] for paths in self.interferer_paths],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            imp = d.get("impairment")
            geometry = ArrayGeometry(
                int(d["num_antennas"]),
                float(d.get("element_spacing", 0.5)),
                None if imp is None else _pairs_to_complex(imp),
            )
            return cls(
                geometry=geometry,
                ue_channel=_pairs_to_complex(d["ue_channel"]),
                interferer_channels=[_pairs_to_complex(h) for h in d.get("interferer_channels", [])],
                tx_power=float(d["tx_power"]),
                noise_power=float(d["noise_power"]),
                phase_bits=int(d["phase_bits"]),
                seed=int(d.get("seed", 0)),
                ue_paths=[_path_from_dict(p) for p in d.get("ue_paths", [])],
                interferer_paths=[[_path_from_dict(p) for p in ps] for ps in d.get("interferer_paths", [])],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfigError(f"malformed scenario document: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        """Short content hash, used to tie datasets to the scenario they came from."""
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


def _complex_to_pairs(v) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex).reshape(-1)]


def _pairs_to_complex(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("complex vectors must be lists of [re, im] pairs")
    return arr[:, 0] + 1j * arr[:, 1]


def _path_to_dict(p: PathComponent) -> dict:
    return {"gain": [p.gain.real, p.gain.imag], "azimuth": p.azimuth, "elevation": p.elevation}


def _path_from_dict(d) -> PathComponent:
    g = d["gain"]
    gain = complex(g[0], g[1]) if isinstance(g, (list, tuple)) else complex(g)
    return PathComponent(gain, float(d["azimuth"]), float(d.get("elevation", BROADSIDE)))


@dataclass
class ScenarioSpec:
    """Declarative description of a scenario family.

    Explicit ``ue_paths`` / ``interferer_paths`` fix the geometry entirely;
    otherwise angles are drawn uniformly from ``azimuth_range`` and path gains
    from a circular complex normal with standard deviation ``*_gain_std``.
    """

    num_antennas: int = 8
    element_spacing: float = 0.5
    phase_bits: int = 3
    tx_power: float = 1.0
    noise_power: float = 0.01
    num_interferers: int = 2
    ue_num_paths: int = 3
    interferer_num_paths: int = 1
    azimuth_range: tuple = (-math.pi / 2, math.pi / 2)
    ue_gain_std: float = 1.0
    interferer_gain_std: float = 1.0
    impairment_gain_std: float = 0.0
    impairment_phase_std: float = 0.0
    impairment: Optional[list] = None
    ue_paths: Optional[list] = None
    interferer_paths: Optional[list] = None

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidConfigError(f"unknown scenario keys: {sorted(unknown)}")
        spec = cls(**d)
        spec.azimuth_range = tuple(float(x) for x in spec.azimuth_range)
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if isinstance(value, tuple):
                value = list(value)
            out[name] = value
        return out

    def validate(self):
        if int(self.num_antennas) != self.num_antennas or self.num_antennas < 1:
            raise InvalidConfigError("num_antennas must be a positive integer")
        if int(self.phase_bits) != self.phase_bits or not 1 <= self.phase_bits <= 16:
            raise InvalidConfigError("phase_bits must be an integer in [1, 16]")
        if self.tx_power <= 0 or self.noise_power <= 0:
            raise InvalidConfigError("tx_power and noise_power must be positive")
        if self.element_spacing <= 0:
            raise InvalidConfigError("element_spacing must be positive")
        lo, hi = self.azimuth_range
        if not -math.pi < lo < hi <= math.pi:
            raise InvalidConfigError(f"azimuth_range {self.azimuth_range} must lie in (-pi, pi]")
        if self.impairment is not None and len(self.impairment) != self.num_antennas:
            raise InvalidConfigError("impairment length must equal num_antennas")
        if self.interferer_paths is not None:
            if len(self.interferer_paths) != self.num_interferers:
                raise InvalidConfigError(
                    f"{len(self.interferer_paths)} interferer path lists given but num_interferers={self.num_interferers}")
            if any(len(ps) == 0 for ps in self.interferer_paths):
                raise InvalidConfigError("every interferer needs at least one path")
        if self.ue_paths is not None and len(self.ue_paths) == 0:
            raise InvalidConfigError("ue_paths must not be empty")
        if self.num_interferers < 0 or self.ue_num_paths < 1 or self.interferer_num_paths < 1:
            raise InvalidConfigError("path and interferer counts out of range")


def generate_scenario(spec: ScenarioSpec, seed: int) -> Scenario:
    """Build a scenario; a pure function of ``(spec, seed)``."""
    spec.validate()
    rng = np.random.default_rng(seed)

    if spec.impairment is not None:
        impairment = _pairs_to_complex(spec.impairment) if np.ndim(spec.impairment) == 2 else np.asarray(spec.impairment, complex)
    elif spec.impairment_gain_std > 0 or spec.impairment_phase_std > 0:
        amp = 1.0 + spec.impairment_gain_std * rng.standard_normal(spec.num_antennas)
        ph = spec.impairment_phase_std * rng.standard_normal(spec.num_antennas)
        impairment = amp * np.exp(1j * ph)
    else:
        impairment = None
    geometry = ArrayGeometry(spec.num_antennas, spec.element_spacing, impairment)

    def draw_paths(n, std):
        lo, hi = spec.azimuth_range
        az = rng.uniform(lo, hi, size=n)
        g = std * (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
        return [PathComponent(complex(gi), float(a)) for gi, a in zip(g, az)]

    if spec.ue_paths is not None:
        ue_paths = [_path_from_dict(p) for p in spec.ue_paths]
    else:
        ue_paths = draw_paths(spec.ue_num_paths, spec.ue_gain_std)
    if spec.interferer_paths is not None:
        int_paths = [[_path_from_dict(p) for p in ps] for ps in spec.interferer_paths]
    else:
        int_paths = [draw_paths(spec.interferer_num_paths, spec.interferer_gain_std)
                     for _ in range(spec.num_interferers)]

    return Scenario(
        geometry=geometry,
        ue_channel=synthesize_channel(geometry, ue_paths),
        interferer_channels=[synthesize_channel(geometry, ps) for ps in int_paths],
        tx_power=float(spec.tx_power),
        noise_power=float(spec.noise_power),
        phase_bits=int(spec.phase_bits),
        seed=int(seed),
        ue_paths=ue_paths,
        interferer_paths=int_paths,
    )


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as f:
        return Scenario.from_json(f.read())


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(scenario.to_json())
