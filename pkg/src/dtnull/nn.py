"""Minimal fully connected network engine (float64).

Hidden layers are ``Linear -> BatchNorm (optional) -> ReLU``; the output layer is
linear or ``pi * tanh``.  Parameters live in a flat ``dict`` keyed ``W0, b0,
gamma0, beta0, W1, ...`` so that optimizers and checkpoints can treat every
network alike.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidInputError

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
# largest float below pi: keeps pi*tanh strictly inside (-pi, pi) even when tanh saturates
PI_OPEN = float(np.nextafter(np.pi, 0.0))

OUTPUT_ACTIVATIONS = ("linear", "scaled_tanh")


@dataclass
class DenseNetworkSpec:
    layer_sizes: list
    hidden_batch_norm: bool = True
    hidden_activation: str = "relu"
    output_activation: str = "linear"

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        if len(self.layer_sizes) < 2 or any(n < 1 for n in self.layer_sizes):
            raise InvalidInputError(f"invalid layer sizes {self.layer_sizes}")
        if self.hidden_activation != "relu":
            raise InvalidInputError("only relu hidden activations are supported")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise InvalidInputError(f"output activation must be one of {OUTPUT_ACTIVATIONS}")

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes) - 1


class DenseNetwork:
    def __init__(self, spec: DenseNetworkSpec, rng=None):
        self.spec = spec
        rng = np.random.default_rng(rng)
        self.params = {}
        self.buffers = {}
        sizes = spec.layer_sizes
        for i in range(spec.num_layers):
            bound = 1.0 / np.sqrt(sizes[i])
            self.params[f"W{i}"] = rng.uniform(-bound, bound, size=(sizes[i], sizes[i + 1]))
            self.params[f"b{i}"] = rng.uniform(-bound, bound, size=sizes[i + 1])
            if self._has_bn(i):
                self.params[f"gamma{i}"] = np.ones(sizes[i + 1])
                self.params[f"beta{i}"] = np.zeros(sizes[i + 1])
                self.buffers[f"mean{i}"] = np.zeros(sizes[i + 1])
                self.buffers[f"var{i}"] = np.ones(sizes[i + 1])

    def _has_bn(self, i):
        return self.spec.hidden_batch_norm and i < self.spec.num_layers - 1

    @property
    def input_size(self) -> int:
        return self.spec.layer_sizes[0]

    # -- forward / backward -------------------------------------------------

    def _forward(self, x, train: bool, update_stats: bool):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_size:
            raise InvalidInputError(f"expected input with {self.input_size} features, got shape {x.shape}")
        p = self.params
        cache = []
        h = x
        last = self.spec.num_layers - 1
        for i in range(self.spec.num_layers):
            z = h @ p[f"W{i}"] + p[f"b{i}"]
            entry = {"h": h}
            if i < last:
                if self._has_bn(i):
                    if train:
                        mu = z.mean(axis=0)
                        var = z.var(axis=0)
                        if update_stats:
                            n = z.shape[0]
                            unbiased = var * n / (n - 1) if n > 1 else var
                            self.buffers[f"mean{i}"] = BN_MOMENTUM * self.buffers[f"mean{i}"] + (1 - BN_MOMENTUM) * mu
                            self.buffers[f"var{i}"] = BN_MOMENTUM * self.buffers[f"var{i}"] + (1 - BN_MOMENTUM) * unbiased
                    else:
                        mu = self.buffers[f"mean{i}"]
                        var = self.buffers[f"var{i}"]
                    inv_std = 1.0 / np.sqrt(var + BN_EPS)
                    xhat = (z - mu) * inv_std
                    entry.update(xhat=xhat, inv_std=inv_std, train=train)
                    z = p[f"gamma{i}"] * xhat + p[f"beta{i}"]
                entry["pre_relu"] = z
                h = np.maximum(z, 0.0)
            else:
                if self.spec.output_activation == "scaled_tanh":
                    t = np.tanh(z)
                    entry["tanh"] = t
                    h = PI_OPEN * t
                else:
                    h = z
            cache.append(entry)
        return h, cache

    def forward(self, x, mode: str = "eval", update_stats: bool = True) -> np.ndarray:
        """Network output, shape ``(batch, out)``.  ``mode`` is ``"train"`` or ``"eval"``."""
        if mode not in ("train", "eval"):
            raise InvalidInputError(f"mode must be 'train' or 'eval', got {mode!r}")
        return self._forward(x, mode == "train", update_stats)[0]

    def forward_with_cache(self, x, mode: str = "train", update_stats: bool = True):
        return self._forward(x, mode == "train", update_stats)

    def backward(self, cache, dout):
        """Gradients of a scalar loss given ``dL/d(output)``; returns ``(grads, dL/dx)``."""
        p = self.params
        grads = {}
        g = np.asarray(dout, dtype=np.float64)
        last = self.spec.num_layers - 1
        for i in range(last, -1, -1):
            e = cache[i]
            if i == last:
                if self.spec.output_activation == "scaled_tanh":
                    g = g * PI_OPEN * (1.0 - e["tanh"] ** 2)
            else:
                g = g * (e["pre_relu"] > 0)
                if self._has_bn(i):
                    xhat = e["xhat"]
                    grads[f"gamma{i}"] = np.sum(g * xhat, axis=0)
                    grads[f"beta{i}"] = np.sum(g, axis=0)
                    gx = g * p[f"gamma{i}"]
                    if e["train"]:
                        n = gx.shape[0]
                        g = (e["inv_std"] / n) * (n * gx - gx.sum(axis=0) - xhat * np.sum(gx * xhat, axis=0))
                    else:
                        g = gx * e["inv_std"]
            grads[f"W{i}"] = e["h"].T @ g
            grads[f"b{i}"] = g.sum(axis=0)
            g = g @ p[f"W{i}"].T
        return grads, g

    def loss_and_grad(self, x, targets, mode: str = "train", update_stats: bool = True):
        """Mean squared error over all outputs of the batch and its parameter gradients."""
        out, cache = self._forward(x, mode == "train", update_stats)
        y = np.asarray(targets, dtype=np.float64)
        if y.size == out.size and y.ndim <= 2:
            y = y.reshape(out.shape)
        if y.shape != out.shape:
            raise InvalidInputError(f"targets of shape {y.shape} do not match outputs {out.shape}")
        diff = out - y
        loss = float(np.mean(diff ** 2))
        grads, _ = self.backward(cache, 2.0 * diff / diff.size)
        return loss, grads

    # -- state management ---------------------------------------------------

    def copy_from(self, other: "DenseNetwork", tau: float = 1.0):
        """Polyak update ``self <- tau * other + (1 - tau) * self`` (running stats included)."""
        for store, src in ((self.params, other.params), (self.buffers, other.buffers)):
            for k, v in src.items():
                if tau == 1.0:
                    store[k] = v.copy()
                else:
                    store[k] = tau * v + (1.0 - tau) * store[k]

    def clone(self) -> "DenseNetwork":
        net = DenseNetwork.__new__(DenseNetwork)
        net.spec = self.spec
        net.params = {k: v.copy() for k, v in self.params.items()}
        net.buffers = {k: v.copy() for k, v in self.buffers.items()}
        return net

    def to_dict(self) -> dict:
        return {
            "format": "dtnull.dense/1",
            "spec": asdict(self.spec),
            "params": {k: v.tolist() for k, v in self.params.items()},
            "buffers": {k: v.tolist() for k, v in self.buffers.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNetwork":
        net = cls.__new__(cls)
        net.spec = DenseNetworkSpec(**d["spec"])
        net.params = {k: np.asarray(v, dtype=np.float64) for k, v in d["params"].items()}
        net.buffers = {k: np.asarray(v, dtype=np.float64) for k, v in d["buffers"].items()}
        return net

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path) -> "DenseNetwork":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def mse(outputs, targets) -> float:
    return float(np.mean((np.asarray(outputs) - np.asarray(targets)) ** 2))


def scheduled_lr(initial: float, epoch: int, milestones=(), factor: float = 0.1) -> float:
    """Step decay: one factor per milestone already reached (``milestone <= epoch``)."""
    n = sum(1 for m in milestones if m <= epoch)
    return initial * factor ** n


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    milestones: tuple = ()
    factor: float = 0.1
    step: int = 0
    epoch: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @property
    def current_lr(self) -> float:
        return scheduled_lr(self.learning_rate, self.epoch, self.milestones, self.factor)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """In-place bias-corrected Adam update of every parameter that has a gradient.

    Works for real and complex arrays; for complex parameters the second moment
    uses ``|g|^2``.
    """
    state.step += 1
    t = state.step
    lr = state.current_lr
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for k, g in grads.items():
        if k not in state.m:
            state.m[k] = np.zeros_like(g)
            state.v[k] = np.zeros(np.shape(g), dtype=np.float64)
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (np.abs(g) ** 2 if np.iscomplexobj(g) else g * g)
        params[k] = params[k] - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Adam:
    """Convenience wrapper binding an :class:`AdamState` to a parameter dict."""

    def __init__(self, params: dict, lr: float, milestones=(), factor: float = 0.1, **kw):
        self.params = params
        self.state = AdamState(lr, milestones=tuple(milestones), factor=factor, **kw)

    def set_epoch(self, epoch: int):
        self.state.epoch = epoch

    def step(self, grads: dict):
        adam_step(self.params, grads, self.state)


def gradient_check(f, params: dict, h: float = 1e-6):
    """Central finite differences of scalar ``f()`` with respect to every entry of ``params``.

    ``f`` must read ``params`` at call time.  Complex entries are perturbed along
    the real and imaginary axes and reported as ``d/dRe + 1j*d/dIm``.
    """
    out = {}
    for k, v in params.items():
        g = np.zeros_like(v)
        it = np.nditer(v, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = v[idx]
            v[idx] = orig + h
            fp = f()
            v[idx] = orig - h
            fm = f()
            d = (fp - fm) / (2 * h)
            if np.iscomplexobj(v):
                v[idx] = orig + 1j * h
                fp = f()
                v[idx] = orig - 1j * h
                fm = f()
                d = d + 1j * (fp - fm) / (2 * h)
            v[idx] = orig
            g[idx] = d
        out[k] = g
    return out
