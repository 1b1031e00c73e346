"""Twin-assisted learning loop and the pure-real baseline.

A run alternates between the real environment (every call is counted against
the budget) and a digital twin trained on the real samples gathered so far.
Both modes write to a :class:`LearningTrace`, whose ``cumulative_real`` column
is read straight from the real environment's counter.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .agent import AgentConfig, BeamAgent
from .beamforming import Combiner
from .channel import Scenario
from .environment import (MeasurementReport, NoiseModel, RealEnvironment, TwinEnvironment,
                          derive_signal_power, report_sinr)
from .errors import BudgetError, InvalidConfigError, StateError
from .twin import DigitalTwin, PowerDataset, TwinConfig

TRACE_COLUMNS = ("iteration", "env_tag", "phase", "sinr", "sinr_db", "reward", "cumulative_real")


def to_db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


@dataclass
class SwitchPolicy:
    """When to leave, and when to return to, the real environment.

    A round trains the twin on all data so far, runs the agent on the twin
    until its best virtual SINR plateaus, and re-evaluates the ``top_k`` best
    virtual beams for real.  Re-acquisition of ``reacquisition_size`` real
    steps happens between rounds.
    """

    initial_real_budget: int = 50
    nmse_gate: float = 0.05
    plateau_window: int = 500
    reacquisition_size: int = 50
    max_rounds: int = 3
    total_budget: int = 1000
    virtual_cap: int = 20000
    top_k: int = 5
    holdout_fraction: float = 0.2

    def __post_init__(self):
        ints = ("initial_real_budget", "plateau_window", "reacquisition_size", "max_rounds",
                "total_budget", "virtual_cap", "top_k")
        for name in ints:
            if getattr(self, name) < 0:
                raise InvalidConfigError(f"{name} must be non-negative")
        if self.plateau_window < 1 or self.total_budget < 1 or self.virtual_cap < 1:
            raise InvalidConfigError("plateau_window, total_budget and virtual_cap must be positive")
        if not self.nmse_gate > 0:
            raise InvalidConfigError("nmse_gate must be positive")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise InvalidConfigError("holdout_fraction must lie in (0, 1)")
        if self.initial_real_budget + self.max_rounds * self.reacquisition_size > self.total_budget:
            raise InvalidConfigError("initial_real_budget + max_rounds * reacquisition_size exceeds total_budget")

    @classmethod
    def from_dict(cls, d: dict) -> "SwitchPolicy":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidConfigError(f"unknown policy keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LearningTrace:
    """Per-measurement rows plus per-round twin records.

    ``phase`` is one of ``seed`` (the measurement that initializes the SINR
    memory), ``init``, ``virtual``, ``reacquire``, ``eval`` (best-beam
    re-evaluation) or ``baseline``.  ``reward`` is 0 on rows that are not agent
    steps.
    """

    rows: list = field(default_factory=list)
    rounds: list = field(default_factory=list)

    def add(self, env_tag: str, phase: str, sinr: float, reward: float, cumulative_real: int):
        self.rows.append((len(self.rows), env_tag, phase, float(sinr), to_db(sinr), float(reward),
                          int(cumulative_real)))

    @property
    def real_count(self) -> int:
        return self.rows[-1][6] if self.rows else 0

    def column(self, name: str) -> list:
        i = TRACE_COLUMNS.index(name)
        return [r[i] for r in self.rows]

    def write_csv(self, path, header: Optional[dict] = None):
        with open(path, "w", newline="", encoding="utf-8") as f:
            write_header(f, header)
            w = csv.writer(f, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                w.writerow([r[0], r[1], r[2], repr(r[3]), repr(r[4]), repr(r[5]), r[6]])


def write_header(f, header: Optional[dict]):
    """Comment lines ``# key: value`` ahead of a CSV table."""
    for k, v in (header or {}).items():
        f.write(f"# {k}: {v}\n")


@dataclass
class RunResult:
    trace: LearningTrace
    best_combiner: Combiner
    best_sinr: float
    real_count: int
    rounds: list = field(default_factory=list)

    def summary(self, oracle_sinr: Optional[float] = None) -> dict:
        d = {
            "final_sinr": self.best_sinr,
            "final_sinr_db": to_db(self.best_sinr),
            "real_measurements": self.real_count,
            "best_phases": self.best_combiner.phases.tolist(),
            "rounds": self.rounds,
        }
        if oracle_sinr is not None:
            d["oracle_sinr"] = oracle_sinr
            d["oracle_gap_db"] = to_db(self.best_sinr) - to_db(oracle_sinr)
        return d


class _BestBeams:
    """Distinct beams ranked by the SINR they were seen with."""

    def __init__(self):
        self.seen = {}

    def offer(self, phases, sinr: float):
        key = tuple(np.round(phases, 12))
        if sinr > self.seen.get(key, -math.inf):
            self.seen[key] = sinr

    def top(self, k: int):
        ranked = sorted(self.seen.items(), key=lambda kv: (-kv[1], kv[0]))
        return [np.array(key) for key, _ in ranked[:k]]

    def best(self):
        if not self.seen:
            return None, -math.inf
        key, s = max(self.seen.items(), key=lambda kv: (kv[1], tuple(-x for x in kv[0])))
        return np.array(key), s


def _seed(agent: BeamAgent, env, trace: LearningTrace, real_env: RealEnvironment, best: Optional[_BestBeams]):
    sinr = agent.seed_measurement(env)
    trace.add("real" if env.is_real else "virtual", "seed", sinr, 0.0, real_env.count)
    if best is not None:
        best.offer(agent.state, sinr)
    return sinr


def _real_steps(agent: BeamAgent, real_env: RealEnvironment, n: int, phase: str, trace: LearningTrace,
                best: _BestBeams, d_in: Optional[PowerDataset] = None, d_s: Optional[PowerDataset] = None):
    if real_env.remaining is not None and real_env.remaining < n:
        raise BudgetError(f"{n} real steps requested, {real_env.remaining} measurements left")
    for _ in range(n):
        t, sinr, report = agent.step(real_env)
        trace.add("real", phase, sinr, t.reward, real_env.count)
        best.offer(t.next_state, sinr)
        if d_in is not None:
            d_in.append(t.next_state, report.in_power)
            d_s.append(t.next_state, derive_signal_power(report))


def initial_acquisition(agent: BeamAgent, real_env: RealEnvironment, n_init: int,
                        trace: Optional[LearningTrace] = None, best: Optional[_BestBeams] = None,
                        scenario_hash: str = ""):
    """Seed the agent, then take ``n_init`` learning steps on the real environment.

    Returns ``(D_in, D_s, trace)``; the seeding measurement appears in the trace
    but not in the datasets.
    """
    trace = LearningTrace() if trace is None else trace
    best = _BestBeams() if best is None else best
    M = real_env.num_antennas
    d_in = PowerDataset(M, "interference", scenario_hash=scenario_hash)
    d_s = PowerDataset(M, "signal", scenario_hash=scenario_hash)
    if agent.last_sinr is None:
        _seed(agent, real_env, trace, real_env, best)
    _real_steps(agent, real_env, n_init, "init", trace, best, d_in, d_s)
    return d_in, d_s, trace


def virtual_phase(agent: BeamAgent, twin_env: TwinEnvironment, plateau_window: int, cap: int,
                  trace: Optional[LearningTrace] = None, best: Optional[_BestBeams] = None,
                  real_count: int = 0):
    """Step against the twin until the best virtual SINR has not improved for
    ``plateau_window`` consecutive steps (or ``cap`` steps).  Returns ``(trace, best, steps)``."""
    if not twin_env.twin.trained:
        raise StateError("the twin has not been trained")
    trace = LearningTrace() if trace is None else trace
    best = _BestBeams() if best is None else best
    # the SINR memory restarts on the twin so rewards compare like with like
    best_so_far = agent.seed_measurement(twin_env)
    trace.add("virtual", "seed", best_so_far, 0.0, real_count)
    best.offer(agent.state, best_so_far)
    stale = 0
    steps = 0
    while stale < plateau_window and steps < cap:
        t, sinr, _ = agent.step(twin_env)
        steps += 1
        trace.add("virtual", "virtual", sinr, t.reward, real_count)
        best.offer(t.next_state, sinr)
        if sinr > best_so_far:
            best_so_far = sinr
            stale = 0
        else:
            stale += 1
    return trace, best, steps


def active_reacquisition(agent: BeamAgent, real_env: RealEnvironment, n_re: int, d_in: PowerDataset,
                         d_s: PowerDataset, trace: Optional[LearningTrace] = None,
                         best: Optional[_BestBeams] = None):
    """``n_re`` real steps with the current policy; samples are appended to the datasets."""
    trace = LearningTrace() if trace is None else trace
    best = _BestBeams() if best is None else best
    _real_steps(agent, real_env, n_re, "reacquire", trace, best, d_in, d_s)
    return d_in, d_s, trace


def _evaluate(real_env: RealEnvironment, candidates, trace: LearningTrace, best_real: _BestBeams) -> int:
    """Measure candidate beams for real while budget allows; returns how many were measured."""
    n = 0
    for phases in candidates:
        if real_env.remaining is not None and real_env.remaining < 1:
            break
        sinr = report_sinr(real_env.measure(Combiner(phases)))
        trace.add("real", "eval", sinr, 0.0, real_env.count)
        best_real.offer(phases, sinr)
        n += 1
    return n


def _split(d: PowerDataset, fraction: float, rng: np.random.Generator):
    n = len(d)
    perm = rng.permutation(n)
    k = max(1, int(round(fraction * n)))
    return perm[k:], perm[:k]


def run_assisted(scenario: Scenario, agent_config: AgentConfig, twin_config: TwinConfig,
                 policy: SwitchPolicy, seed: int = 0, noise_model: Optional[NoiseModel] = None,
                 real_env: Optional[RealEnvironment] = None) -> RunResult:
    """Acquire, train the twin, learn virtually, re-acquire; repeat for up to ``max_rounds`` rounds.

    The twin is used only if its held-out NMSE on both predictors passes the
    gate; a failed gate spends the round's re-acquisition on real learning
    instead.  Rounds also stop when a round does not improve the best
    real-evaluated SINR, or when the budget cannot cover another round.
    """
    rng = np.random.default_rng(seed)
    if real_env is None:
        real_env = RealEnvironment(scenario, noise_model, budget=policy.total_budget)
    agent = BeamAgent(agent_config, seed)
    trace = LearningTrace()
    best_real = _BestBeams()
    h = scenario.digest()
    d_in, d_s, _ = initial_acquisition(agent, real_env, policy.initial_real_budget, trace, best_real, h)
    twin = DigitalTwin.build(twin_config, scenario.num_antennas, scenario.num_interferers, rng)
    previous_best = best_real.best()[1]
    for r in range(policy.max_rounds):
        if r > 0:
            if real_env.remaining is not None and real_env.remaining < policy.reacquisition_size:
                break
            active_reacquisition(agent, real_env, policy.reacquisition_size, d_in, d_s, trace, best_real)
        record = {"round": r, "dataset_size": len(d_in), "real_count": real_env.count}
        if len(d_in) < 2:
            record["skipped"] = "too few samples"
            trace.rounds.append(record)
            continue
        tr, ho = _split(d_in, policy.holdout_fraction, rng)
        gate = DigitalTwin.build(twin_config, scenario.num_antennas, scenario.num_interferers, rng)
        gate.train(d_in.subset(tr), d_s.subset(tr), twin_config, seed + 10 * r)
        try:
            nmse_in, nmse_s = gate.nmse(d_in.subset(ho), d_s.subset(ho))
        except Exception as exc:  # constant held-out targets leave NMSE undefined
            nmse_in = nmse_s = math.nan
            record["nmse_error"] = str(exc)
        record.update(nmse_in=nmse_in, nmse_s=nmse_s)
        twin.train(d_in, d_s, twin_config, seed + 10 * r + 5)
        passed = nmse_in <= policy.nmse_gate and nmse_s <= policy.nmse_gate
        record["switched"] = bool(passed)
        if passed:
            twin_env = TwinEnvironment(twin, real_counter=real_env)
            before = real_env.count
            _, virtual_best, steps = virtual_phase(agent, twin_env, policy.plateau_window, policy.virtual_cap,
                                                   trace, None, real_env.count)
            assert real_env.count == before
            record["virtual_steps"] = steps
            record["evaluated"] = _evaluate(real_env, virtual_best.top(policy.top_k), trace, best_real)
        trace.rounds.append(record)
        current = best_real.best()[1]
        record["best_real_sinr"] = current
        if r > 0 and not current > previous_best:
            break
        previous_best = current
    phases, s = best_real.best()
    return RunResult(trace, Combiner(phases), s, real_env.count, trace.rounds)


def run_baseline_real(scenario: Scenario, agent_config: AgentConfig, iterations: int, seed: int = 0,
                      noise_model: Optional[NoiseModel] = None,
                      real_env: Optional[RealEnvironment] = None) -> RunResult:
    """Plain reinforcement learning on the real environment: ``iterations + 1`` measurements."""
    if iterations < 0:
        raise InvalidConfigError("iterations must be non-negative")
    if real_env is None:
        real_env = RealEnvironment(scenario, noise_model)
    agent = BeamAgent(agent_config, seed)
    trace = LearningTrace()
    best = _BestBeams()
    _seed(agent, real_env, trace, real_env, best)
    _real_steps(agent, real_env, iterations, "baseline", trace, best)
    phases, s = best.best()
    return RunResult(trace, Combiner(phases), s, real_env.count)


def best_so_far(values) -> np.ndarray:
    return np.maximum.accumulate(np.asarray(values, dtype=float))


def write_summary(path, result: RunResult, header: Optional[dict] = None, oracle_sinr: Optional[float] = None):
    d = dict(header or {})
    d.update(result.summary(oracle_sinr))
    with open(path, "w", encoding="utf-8") as f:
        json.dump(d, f, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")
