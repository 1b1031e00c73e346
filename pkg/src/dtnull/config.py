"""One YAML file drives every pipeline stage.

Top-level sections are ``scenario``, ``agent``, ``twin``, ``policy`` and
``experiment``; each maps onto a dataclass that rejects unknown keys.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import yaml

from . import __version__
from .agent import AgentConfig
from .channel import ScenarioSpec
from .errors import InvalidConfigError
from .orchestrator import SwitchPolicy
from .twin import TwinConfig

OUT_ENV_VAR = "DTNULL_OUT"
SECTIONS = ("scenario", "agent", "twin", "policy", "experiment")


@dataclass
class ExperimentSettings:
    """Run-level knobs.

    ``scenario_seed=None`` draws a fresh scenario per run seed; an integer pins
    one scenario for every seed.  ``scenario_path`` loads a saved scenario
    instead of drawing one.
    """

    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "runs"
    scenario_seed: Optional[int] = None
    scenario_path: Optional[str] = None
    iterations: int = 5000
    collect_size: int = 1000
    test_size: int = 1000
    sweep_sizes: list = field(default_factory=lambda: [50, 200, 1000, 10000])
    sweep_architectures: list = field(default_factory=lambda: ["quadratic", "dense"])
    measurement_noise_db: float = 0.0
    pattern_points: int = 721

    def __post_init__(self):
        if not self.seeds or any(int(s) != s or s < 0 for s in self.seeds):
            raise InvalidConfigError("seeds must be a non-empty list of non-negative integers")
        if self.iterations < 0 or self.collect_size < 0 or self.test_size < 2:
            raise InvalidConfigError("iterations and collect_size must be >= 0, test_size >= 2")
        if any(n < 1 for n in self.sweep_sizes):
            raise InvalidConfigError("sweep sizes must be positive")
        for a in self.sweep_architectures:
            if a not in ("quadratic", "dense"):
                raise InvalidConfigError(f"unknown twin architecture {a!r} in sweep")
        if self.measurement_noise_db < 0:
            raise InvalidConfigError("measurement_noise_db must be non-negative")
        if self.pattern_points < 2:
            raise InvalidConfigError("pattern_points must be at least 2")


def _build(cls, d, section):
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise InvalidConfigError(f"section {section!r} must be a mapping")
    unknown = set(d) - set(cls.__dataclass_fields__)
    if unknown:
        raise InvalidConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    try:
        return cls.from_dict(d) if hasattr(cls, "from_dict") else cls(**d)
    except InvalidConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise InvalidConfigError(f"invalid {section!r} section: {exc}") from exc


@dataclass
class ExperimentConfig:
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    agent: AgentConfig = field(default_factory=AgentConfig)
    twin: TwinConfig = field(default_factory=TwinConfig)
    policy: SwitchPolicy = field(default_factory=SwitchPolicy)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)

    def __post_init__(self):
        if self.agent.num_antennas != self.scenario.num_antennas:
            raise InvalidConfigError("agent.num_antennas must equal scenario.num_antennas")
        if self.agent.phase_bits != self.scenario.phase_bits:
            raise InvalidConfigError("agent.phase_bits must equal scenario.phase_bits")

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "ExperimentConfig":
        d = d or {}
        if not isinstance(d, dict):
            raise InvalidConfigError("configuration root must be a mapping")
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise InvalidConfigError(f"unknown top-level keys: {sorted(unknown)}")
        scenario = _build(ScenarioSpec, d.get("scenario"), "scenario")
        agent_d = dict(d.get("agent") or {})
        # the agent inherits array size and resolution unless it says otherwise
        agent_d.setdefault("num_antennas", scenario.num_antennas)
        agent_d.setdefault("phase_bits", scenario.phase_bits)
        return cls(
            scenario=scenario,
            agent=_build(AgentConfig, agent_d, "agent"),
            twin=_build(TwinConfig, d.get("twin"), "twin"),
            policy=_build(SwitchPolicy, d.get("policy"), "policy"),
            experiment=_build(ExperimentSettings, d.get("experiment"), "experiment"),
        )

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "agent": self.agent.to_dict(),
            "twin": self.twin.to_dict(),
            "policy": self.policy.to_dict(),
            "experiment": asdict(self.experiment),
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def provenance(self, seed: int) -> dict:
        return {"config_hash": self.digest(), "seed": int(seed), "version": __version__}

    def output_dir(self, override: Optional[str] = None) -> str:
        """``--out`` beats the environment variable, which beats the config file."""
        return override or os.environ.get(OUT_ENV_VAR) or self.experiment.output_dir


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidConfigError(f"malformed YAML: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
