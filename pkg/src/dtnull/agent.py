"""Actor-critic beam learning agent.

State is the current phase vector, the action is the next phase vector
(continuous actor output, quantized to the codebook only when executed), and
the reward is +1 when the measured SINR beats the previous one, -1 otherwise.
The learning machinery is DDPG: replay buffer, target networks with soft
updates and Gaussian exploration noise.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .beamforming import Combiner, phase_set, quantize_phases
from .environment import report_sinr
from .errors import InvalidConfigError, StateError
from .nn import PI_OPEN, Adam, DenseNetwork, DenseNetworkSpec


@dataclass
class AgentConfig:
    num_antennas: int = 8
    phase_bits: int = 3
    gamma: float = 0.5
    tau: float = 0.005
    buffer_capacity: int = 8192
    batch_size: int = 128
    noise_scale: float = 2.0
    noise_decay: float = 0.9995
    noise_floor: float = 0.5
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    updates_per_step: int = 1
    circular_quantization: bool = False

    def __post_init__(self):
        if self.num_antennas < 1 or self.phase_bits < 1:
            raise InvalidConfigError("num_antennas and phase_bits must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidConfigError("gamma must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise InvalidConfigError("tau must lie in (0, 1]")
        if self.batch_size < 2 or self.buffer_capacity < self.batch_size:
            raise InvalidConfigError("need 2 <= batch_size <= buffer_capacity")

    @property
    def actor_spec(self) -> DenseNetworkSpec:
        M = self.num_antennas
        return DenseNetworkSpec([M, 16 * M, 16 * M, M], True, output_activation="scaled_tanh")

    @property
    def critic_spec(self) -> DenseNetworkSpec:
        M = self.num_antennas
        # hidden widths: 16x the input (2M) and 16x the output (1)
        return DenseNetworkSpec([2 * M, 32 * M, 16, 1], True, output_activation="linear")

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidConfigError(f"unknown agent keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray


def compute_reward(sinr_t: float, sinr_prev: float) -> float:
    return 1.0 if sinr_t > sinr_prev else -1.0


class ReplayBuffer:
    """Fixed-capacity FIFO of transitions stored as parallel arrays."""

    def __init__(self, capacity: int, dim: int):
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, dim))
        self.actions = np.zeros((capacity, dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, dim))
        self._next = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, t: Transition):
        i = self._next
        self.states[i] = t.state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator):
        if n > self.size:
            raise StateError(f"buffer holds {self.size} transitions, {n} requested")
        idx = rng.choice(self.size, size=n, replace=False)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx]

    def transitions(self):
        """Stored transitions, oldest first."""
        start = self._next if self.size == self.capacity else 0
        for k in range(self.size):
            i = (start + k) % self.capacity
            yield Transition(self.states[i].copy(), self.actions[i].copy(), float(self.rewards[i]),
                             self.next_states[i].copy())


class BeamAgent:
    def __init__(self, config: AgentConfig, seed: int = 0, initial_phases=None):
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.codebook = phase_set(config.phase_bits)
        M = config.num_antennas
        self.actor = DenseNetwork(config.actor_spec, self.rng)
        self.critic = DenseNetwork(config.critic_spec, self.rng)
        self.actor_target = self.actor.clone()
        self.critic_target = self.critic.clone()
        self.actor_opt = Adam(self.actor.params, config.actor_lr)
        self.critic_opt = Adam(self.critic.params, config.critic_lr)
        self.buffer = ReplayBuffer(config.buffer_capacity, M)
        if initial_phases is None:
            initial_phases = self.codebook.values[self.rng.integers(0, len(self.codebook), size=M)]
        self.state = np.asarray(initial_phases, dtype=float).copy()
        self.last_sinr: Optional[float] = None
        self.noise = config.noise_scale
        self.steps = 0
        self.updates = 0
        self.last_losses = (np.nan, np.nan)

    # -- acting -----------------------------------------------------------------

    def quantize(self, action) -> np.ndarray:
        return quantize_phases(action, self.codebook, circular=self.config.circular_quantization)

    def select_action(self, state=None, explore: bool = True):
        """Return ``(continuous action, executed codebook phases)``."""
        s = self.state if state is None else np.asarray(state, dtype=float)
        a = self.actor.forward(s[None, :], "eval")[0]
        if explore and self.noise > 0:
            a = a + self.noise * self.rng.standard_normal(a.shape)
            a = np.clip(a, -PI_OPEN, PI_OPEN)
        return a, self.quantize(a)

    def seed_measurement(self, env) -> float:
        """Measure the current state once to initialize the SINR memory."""
        self.last_sinr = report_sinr(env.measure(Combiner(self.state)))
        return self.last_sinr

    def step(self, env, explore: bool = True, learn: bool = True):
        """One interaction; returns ``(transition, sinr, report)``."""
        if self.last_sinr is None:
            self.seed_measurement(env)
        action, executed = self.select_action(explore=explore)
        report = env.measure(Combiner(executed))
        sinr = report_sinr(report)
        reward = compute_reward(sinr, self.last_sinr)
        t = Transition(self.state.copy(), action, reward, executed.copy())
        self.buffer.add(t)
        self.state = executed
        self.last_sinr = sinr
        self.steps += 1
        if explore:
            self.noise = max(self.config.noise_floor, self.noise * self.config.noise_decay)
        if learn and len(self.buffer) >= self.config.batch_size:
            for _ in range(self.config.updates_per_step):
                self.last_losses = self.update()
        return t, sinr, report

    # -- learning ---------------------------------------------------------------

    def update(self):
        batch = self.buffer.sample(self.config.batch_size, self.rng)
        return self.ddpg_update(batch)

    def ddpg_update(self, batch):
        """One critic and one actor step on a batch ``(s, a, r, s')``.

        Returns ``(critic_loss, actor_objective)`` where the objective is the
        mean critic value of the actor's own actions.
        """
        s, a, r, s2 = (np.asarray(x, dtype=float) for x in batch)
        cfg = self.config
        if s.shape[0] < 2:
            raise StateError("an update batch needs at least two transitions")
        M = cfg.num_antennas

        if cfg.gamma > 0:
            a2 = self.actor_target.forward(s2, "eval")
            q2 = self.critic_target.forward(np.hstack([s2, a2]), "eval")[:, 0]
            y = r + cfg.gamma * q2
        else:
            y = r.copy()
        critic_loss, cgrads = self.critic.loss_and_grad(np.hstack([s, a]), y[:, None])
        self.critic_opt.step(cgrads)

        a_pred, acache = self.actor.forward_with_cache(s, "train")
        q, ccache = self.critic.forward_with_cache(np.hstack([s, a_pred]), "train", update_stats=False)
        n = s.shape[0]
        _, dx = self.critic.backward(ccache, np.full((n, 1), -1.0 / n))
        agrads, _ = self.actor.backward(acache, dx[:, M:])
        self.actor_opt.step(agrads)

        self.actor_target.copy_from(self.actor, cfg.tau)
        self.critic_target.copy_from(self.critic, cfg.tau)
        self.updates += 1
        return float(critic_loss), float(np.mean(q))

    # -- persistence ------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "dtnull.agent/1",
            "config": self.config.to_dict(),
            "actor": self.actor.to_dict(),
            "critic": self.critic.to_dict(),
            "actor_target": self.actor_target.to_dict(),
            "critic_target": self.critic_target.to_dict(),
            "state": self.state.tolist(),
            "last_sinr": self.last_sinr,
            "noise": self.noise,
            "steps": self.steps,
            "buffer": {"size": len(self.buffer), "capacity": self.buffer.capacity,
                       "mean_reward": float(self.buffer.rewards[:len(self.buffer)].mean()) if len(self.buffer) else None},
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def from_dict(cls, d: dict, seed: int = 0) -> "BeamAgent":
        agent = cls(AgentConfig.from_dict(d["config"]), seed, d["state"])
        for name in ("actor", "critic", "actor_target", "critic_target"):
            setattr(agent, name, DenseNetwork.from_dict(d[name]))
        agent.actor_opt = Adam(agent.actor.params, agent.config.actor_lr)
        agent.critic_opt = Adam(agent.critic.params, agent.config.critic_lr)
        agent.last_sinr = d["last_sinr"]
        agent.noise = d["noise"]
        agent.steps = d["steps"]
        return agent
