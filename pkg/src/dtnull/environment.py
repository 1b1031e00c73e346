"""Measurement-only view of the radio world.

The learner interacts with a :class:`MeasurementChannel`: it submits a combiner
and receives two power observables.  :class:`RealEnvironment` answers from the
hidden scenario and counts every call; :class:`TwinEnvironment` answers from a
trained digital twin and costs nothing.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from .beamforming import Combiner, compute_powers
from .channel import Scenario
from .errors import BudgetError, InvalidInputError


@dataclass(frozen=True)
class MeasurementReport:
    total_power: float
    in_power: float


@dataclass(frozen=True)
class NoiseModel:
    """Multiplicative log-normal estimation error, ``std_db`` per observable."""

    std_db: float
    seed: int = 0


class MeasurementChannel(Protocol):
    is_real: bool

    def measure(self, combiner: Combiner) -> MeasurementReport: ...


def measure_real(scenario: Scenario, combiner: Combiner, noise_model: Optional[NoiseModel] = None,
                 rng: Optional[np.random.Generator] = None) -> MeasurementReport:
    p = compute_powers(combiner, scenario)
    total, pin = p.signal_power + p.in_power, p.in_power
    if noise_model is not None and noise_model.std_db > 0:
        if rng is None:
            rng = np.random.default_rng(noise_model.seed)
        e = rng.normal(0.0, noise_model.std_db, size=2)
        total *= 10 ** (e[0] / 10)
        pin *= 10 ** (e[1] / 10)
    return MeasurementReport(float(total), float(pin))


def derive_signal_power(report: MeasurementReport) -> float:
    return max(0.0, report.total_power - report.in_power)


def report_sinr(report: MeasurementReport) -> float:
    """SINR from the two observables alone."""
    if report.in_power <= 0:
        return math.inf if derive_signal_power(report) > 0 else 0.0
    return derive_signal_power(report) / report.in_power


class RealEnvironment:
    """Scenario-backed environment with a real-measurement counter.

    ``budget`` (optional) bounds the counter; a call that would exceed it raises
    :class:`BudgetError` without measuring.
    """

    is_real = True

    def __init__(self, scenario: Scenario, noise_model: Optional[NoiseModel] = None,
                 budget: Optional[int] = None, log=None):
        self.scenario = scenario
        self.noise_model = noise_model
        self.budget = budget
        self.count = 0
        self.log = log
        self._rng = np.random.default_rng(noise_model.seed) if noise_model is not None else None

    @property
    def num_antennas(self) -> int:
        return self.scenario.num_antennas

    @property
    def remaining(self) -> Optional[int]:
        return None if self.budget is None else self.budget - self.count

    def measure(self, combiner: Combiner) -> MeasurementReport:
        if self.budget is not None and self.count >= self.budget:
            raise BudgetError(f"real-measurement budget of {self.budget} exhausted")
        report = measure_real(self.scenario, combiner, self.noise_model, self._rng)
        self.count += 1
        if self.log is not None:
            self.log.record("real", report, self.count)
        return report


def measure_twin(twin, combiner: Combiner) -> MeasurementReport:
    """Report synthesized by a twin: ``(f_s + f_in, f_in)``."""
    pin = twin.interference.predict(combiner)
    ps = twin.signal.predict(combiner)
    return MeasurementReport(float(ps + pin), float(pin))


class TwinEnvironment:
    is_real = False

    def __init__(self, twin, log=None, real_counter: Optional[RealEnvironment] = None):
        self.twin = twin
        self.log = log
        self._real = real_counter

    @property
    def num_antennas(self) -> int:
        return self.twin.num_antennas

    def measure(self, combiner: Combiner) -> MeasurementReport:
        if combiner.num_antennas != self.twin.num_antennas:
            raise InvalidInputError("combiner size does not match the twin")
        report = measure_twin(self.twin, combiner)
        if self.log is not None:
            self.log.record("virtual", report, self._real.count if self._real is not None else 0)
        return report


class MeasurementLog:
    """Streams ``(iteration, env_tag, total_power, in_power, cumulative_real_count)`` rows to CSV."""

    columns = ("iteration", "env_tag", "total_power", "in_power", "cumulative_real_count")

    def __init__(self, path=None):
        self.rows = []
        self._fh = None
        self._writer = None
        if path is not None:
            self._fh = open(path, "w", newline="", encoding="utf-8")
            self._writer = csv.writer(self._fh)
            self._writer.writerow(self.columns)

    def record(self, tag: str, report: MeasurementReport, real_count: int):
        row = (len(self.rows), tag, report.total_power, report.in_power, real_count)
        self.rows.append(row)
        if self._writer is not None:
            self._writer.writerow([row[0], row[1], repr(row[2]), repr(row[3]), row[4]])

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None
