"""Digital twin: power predictors trained from measured (beam, power) pairs.

Two predictor families share one interface (``predict``, ``predict_batch``,
``trained``):

* :class:`QuadraticPredictor` -- ``f(w) = ||Q^H w||^2`` with ``Q`` complex
  ``M x r``.  This is the exact functional form of both received powers, so a
  handful of samples pins it down.
* :class:`DensePredictor` -- a generic ``M -> M' -> M' -> 1`` network on the
  phase vector.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .beamforming import Combiner, PhaseCodebook, combiner_weights
from .environment import derive_signal_power
from .errors import DegenerateInputError, InvalidInputError, StateError
from .nn import Adam, DenseNetwork, DenseNetworkSpec

ROLES = ("interference", "signal")


# -- datasets -----------------------------------------------------------------

class PowerDataset:
    """Growing set of ``(phase vector, measured power)`` samples for one role."""

    def __init__(self, num_antennas: int, role: str = "interference", phases=None, powers=None,
                 scenario_hash: str = ""):
        if role not in ROLES:
            raise InvalidInputError(f"role must be one of {ROLES}")
        self.num_antennas = int(num_antennas)
        self.role = role
        self.scenario_hash = scenario_hash
        self._phases = [] if phases is None else [np.asarray(p, float).reshape(-1) for p in phases]
        self._powers = [] if powers is None else [float(p) for p in powers]
        if len(self._phases) != len(self._powers):
            raise InvalidInputError("phases and powers differ in length")
        for p, v in zip(self._phases, self._powers):
            self._check(p, v)

    def _check(self, phases, power):
        if phases.shape[0] != self.num_antennas:
            raise InvalidInputError(f"sample has {phases.shape[0]} phases, expected {self.num_antennas}")
        if not power >= 0:
            raise InvalidInputError(f"powers must be non-negative, got {power}")

    def append(self, phases, power: float):
        phases = np.array(phases, dtype=float).reshape(-1)
        self._check(phases, float(power))
        self._phases.append(phases)
        self._powers.append(float(power))

    def extend(self, other: "PowerDataset"):
        for p, v in zip(other._phases, other._powers):
            self.append(p, v)

    def __len__(self):
        return len(self._powers)

    @property
    def phases(self) -> np.ndarray:
        if not self._phases:
            return np.zeros((0, self.num_antennas))
        return np.vstack(self._phases)

    @property
    def powers(self) -> np.ndarray:
        return np.asarray(self._powers, dtype=float)

    def subset(self, idx) -> "PowerDataset":
        ph, pw = self.phases[idx], self.powers[idx]
        return PowerDataset(self.num_antennas, self.role, ph, pw, self.scenario_hash)

    def save(self, csv_path, sidecar_path=None):
        with open(csv_path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow([f"theta_{m}" for m in range(self.num_antennas)] + ["power"])
            for p, v in zip(self._phases, self._powers):
                w.writerow([repr(float(x)) for x in p] + [repr(v)])
        if sidecar_path is None:
            sidecar_path = str(csv_path) + ".json"
        with open(sidecar_path, "w", encoding="utf-8") as f:
            json.dump({"role": self.role, "scenario_hash": self.scenario_hash, "size": len(self),
                       "num_antennas": self.num_antennas}, f, indent=2)

    @classmethod
    def load(cls, csv_path, sidecar_path=None) -> "PowerDataset":
        if sidecar_path is None:
            sidecar_path = str(csv_path) + ".json"
        with open(sidecar_path, encoding="utf-8") as f:
            meta = json.load(f)
        with open(csv_path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))[1:]
        arr = np.asarray(rows, dtype=float).reshape(-1, meta["num_antennas"] + 1)
        ds = cls(meta["num_antennas"], meta["role"], arr[:, :-1], arr[:, -1], meta.get("scenario_hash", ""))
        if len(ds) != meta["size"]:
            raise InvalidInputError(f"{csv_path}: sidecar declares {meta['size']} rows, found {len(ds)}")
        return ds


def sample_datasets(env, n: int, codebook: PhaseCodebook, rng, scenario_hash: str = ""):
    """Measure ``n`` uniformly random codebook beams; returns ``(D_in, D_s)``."""
    rng = np.random.default_rng(rng)
    M = env.num_antennas
    d_in = PowerDataset(M, "interference", scenario_hash=scenario_hash)
    d_s = PowerDataset(M, "signal", scenario_hash=scenario_hash)
    for _ in range(n):
        phases = codebook.values[rng.integers(0, len(codebook), size=M)]
        rep = env.measure(Combiner(phases))
        d_in.append(phases, rep.in_power)
        d_s.append(phases, derive_signal_power(rep))
    return d_in, d_s


def encode_input(combiner: Combiner) -> np.ndarray:
    """Dense-twin input features: the ``M`` phases themselves."""
    return combiner.phases.copy()


# -- predictors ---------------------------------------------------------------

class QuadraticPredictor:
    """``f(w) = ||Q^H w||^2``.

    ``init`` selects how an untrained predictor is seeded when training starts:
    ``"moment"`` solves the linear least-squares problem for the visible
    quadratic-form coefficients and factorizes the result, ``"random"`` keeps
    the small random ``Q`` drawn here.
    """

    def __init__(self, num_antennas: int, rank: int, role: str = "interference", Q=None, rng=None,
                 init: str = "moment"):
        if role not in ROLES:
            raise InvalidInputError(f"role must be one of {ROLES}")
        if init not in ("moment", "random"):
            raise InvalidInputError(f"unknown initialization {init!r}")
        self.role = role
        self.init = init
        if Q is None:
            rng = np.random.default_rng(rng)
            scale = 1.0 / math.sqrt(num_antennas * rank)
            Q = scale * (rng.standard_normal((num_antennas, rank))
                         + 1j * rng.standard_normal((num_antennas, rank))) / math.sqrt(2)
            self.trained = False
        else:
            self.trained = True
        self.Q = np.array(Q, dtype=complex).reshape(num_antennas, -1)

    architecture = "quadratic"

    @property
    def num_antennas(self) -> int:
        return self.Q.shape[0]

    @property
    def rank(self) -> int:
        return self.Q.shape[1]

    def _require(self, M):
        if not self.trained:
            raise StateError("predictor has not been trained")
        if M != self.num_antennas:
            raise InvalidInputError(f"combiner has {M} antennas, predictor expects {self.num_antennas}")

    def predict(self, combiner: Combiner) -> float:
        self._require(combiner.num_antennas)
        u = self.Q.conj().T @ combiner.weights
        return float(np.vdot(u, u).real)

    def predict_batch(self, phases) -> np.ndarray:
        phases = np.atleast_2d(phases)
        self._require(phases.shape[1])
        U = combiner_weights(phases) @ self.Q.conj()
        return np.sum(np.abs(U) ** 2, axis=1)

    def to_dict(self) -> dict:
        return {"architecture": "quadratic", "role": self.role, "trained": self.trained, "init": self.init,
                "Q": np.stack([self.Q.real, self.Q.imag], axis=-1).tolist()}

    @classmethod
    def from_dict(cls, d) -> "QuadraticPredictor":
        q = np.asarray(d["Q"], dtype=float)
        pred = cls(q.shape[0], q.shape[1], d["role"], q[..., 0] + 1j * q[..., 1], init=d.get("init", "moment"))
        pred.trained = bool(d.get("trained", True))
        return pred


def quadratic_gradient(Q, combiner: Combiner, target: float) -> np.ndarray:
    """Wirtinger gradient ``dL/dQ*`` of ``(target - ||Q^H w||^2)^2``.

    Equals ``-2 (target - f) w w^H Q``; the derivative along real and imaginary
    parts (``dL/dRe + 1j dL/dIm``) is twice this.
    """
    Q = np.asarray(Q, dtype=complex)
    w = combiner.weights
    u = Q.conj().T @ w
    f = float(np.vdot(u, u).real)
    return -2.0 * (target - f) * np.outer(w, u.conj())


def factorize(A, rank: Optional[int] = None) -> np.ndarray:
    """``Q`` with ``Q Q^H = A`` for Hermitian PSD ``A`` (best rank-``rank`` fit if given)."""
    A = np.asarray(A, dtype=complex)
    vals, vecs = np.linalg.eigh((A + A.conj().T) / 2)
    vals = np.clip(vals, 0.0, None)
    order = np.argsort(vals)[::-1]
    if rank is not None:
        order = order[:rank]
    return vecs[:, order] * np.sqrt(vals[order])[None, :]


def moment_init(phases, targets, rank: int, iterations: int = 500) -> np.ndarray:
    """Least-squares estimate of ``Q`` from ``(phases, power)`` samples.

    On constant-modulus beams ``w^H X w`` is linear in the off-diagonal entries
    of ``X`` and in ``trace(X)``; the individual diagonal entries are invisible.
    The diagonal is therefore free, and alternating projections look for a
    diagonal that makes the fitted ``X`` close to PSD of the requested rank.
    """
    phases = np.atleast_2d(np.asarray(phases, dtype=float))
    t = np.asarray(targets, dtype=float)
    N, M = phases.shape
    iu = np.triu_indices(M, 1)
    npairs = iu[0].size
    delta = phases[:, iu[1]] - phases[:, iu[0]]
    design = np.hstack([np.ones((N, 1)), (2.0 / M) * np.cos(delta), -(2.0 / M) * np.sin(delta)])
    coef = np.linalg.lstsq(design, t, rcond=None)[0]
    off = np.zeros((M, M), dtype=complex)
    off[iu] = coef[1:1 + npairs] + 1j * coef[1 + npairs:]
    off = off + off.conj().T
    trace = coef[0] * M
    X = off + coef[0] * np.eye(M)
    Q = factorize(X, rank)
    for _ in range(iterations):
        d = np.sum(np.abs(Q) ** 2, axis=1)
        d += (trace - d.sum()) / M
        X = off + np.diag(d)
        Q_next = factorize(X, rank)
        if np.allclose(Q_next @ Q_next.conj().T, Q @ Q.conj().T, rtol=0, atol=1e-15 * max(abs(trace), 1e-300)):
            Q = Q_next
            break
        Q = Q_next
    return Q


class DensePredictor:
    architecture = "dense"

    def __init__(self, num_antennas: int, hidden: Optional[int] = None, role: str = "interference", rng=None):
        if role not in ROLES:
            raise InvalidInputError(f"role must be one of {ROLES}")
        self.role = role
        hidden = 16 * num_antennas if hidden is None else int(hidden)
        spec = DenseNetworkSpec([num_antennas, hidden, hidden, 1], hidden_batch_norm=True)
        self.net = DenseNetwork(spec, rng)
        self.target_mean = 0.0
        self.target_std = 1.0
        self.trained = False

    @property
    def num_antennas(self) -> int:
        return self.net.input_size

    def _require(self, M):
        if not self.trained:
            raise StateError("predictor has not been trained")
        if M != self.num_antennas:
            raise InvalidInputError(f"combiner has {M} antennas, predictor expects {self.num_antennas}")

    def predict(self, combiner: Combiner) -> float:
        self._require(combiner.num_antennas)
        return float(self.predict_batch(encode_input(combiner)[None, :])[0])

    def predict_batch(self, phases) -> np.ndarray:
        phases = np.atleast_2d(phases)
        self._require(phases.shape[1])
        out = self.net.forward(phases, "eval")[:, 0]
        return np.maximum(self.target_mean + self.target_std * out, 0.0)

    def to_dict(self) -> dict:
        return {"architecture": "dense", "role": self.role, "trained": self.trained,
                "target_mean": self.target_mean, "target_std": self.target_std,
                "network": self.net.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "DensePredictor":
        pred = cls.__new__(cls)
        pred.role = d["role"]
        pred.net = DenseNetwork.from_dict(d["network"])
        pred.target_mean = float(d["target_mean"])
        pred.target_std = float(d["target_std"])
        pred.trained = bool(d["trained"])
        return pred


def predictor_from_dict(d):
    if d["architecture"] == "quadratic":
        return QuadraticPredictor.from_dict(d)
    if d["architecture"] == "dense":
        return DensePredictor.from_dict(d)
    raise InvalidInputError(f"unknown predictor architecture {d['architecture']!r}")


# -- training -----------------------------------------------------------------

@dataclass
class TrainHyper:
    batch_size: int = 512
    epochs: int = 500
    learning_rate: float = 0.1
    milestones: tuple = (50, 300, 400)
    factor: float = 0.1
    seed: int = 0
    tol: float = 1e-20

    @classmethod
    def quadratic(cls, **kw) -> "TrainHyper":
        return cls(**kw)

    @classmethod
    def dense(cls, **kw) -> "TrainHyper":
        kw.setdefault("learning_rate", 0.01)
        kw.setdefault("milestones", (100, 300, 400))
        return cls(**kw)


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        # a single-sample batch has no batch statistics; fold it into the epoch's skip
        if idx.size < 2 and n >= 2:
            continue
        yield idx


def train_twin(predictor, dataset: PowerDataset, hyper: Optional[TrainHyper] = None):
    """Mini-batch Adam on the MSE between predicted and measured power.

    Targets are rescaled internally (RMS for the quadratic model so its form is
    preserved, z-score for the network) and the result is mapped back to watts.
    Training warm-starts from the predictor's current parameters.  Returns the
    predictor and its per-epoch mean batch loss in watts^2.
    """
    if len(dataset) == 0:
        raise InvalidInputError("cannot train on an empty dataset")
    if dataset.num_antennas != predictor.num_antennas:
        raise InvalidInputError("dataset and predictor disagree on the antenna count")
    if hyper is None:
        hyper = TrainHyper.quadratic() if isinstance(predictor, QuadraticPredictor) else TrainHyper.dense()
    if isinstance(predictor, QuadraticPredictor):
        return predictor, _train_quadratic(predictor, dataset, hyper)
    return predictor, _train_dense(predictor, dataset, hyper)


def _train_quadratic(pred: QuadraticPredictor, ds: PowerDataset, hyper: TrainHyper):
    rng = np.random.default_rng(hyper.seed)
    W = combiner_weights(ds.phases)
    t = ds.powers
    scale = float(np.sqrt(np.mean(t ** 2)))
    if scale == 0.0:
        scale = 1.0
    tn = t / scale
    if not pred.trained and pred.init == "moment":
        Q0 = moment_init(ds.phases, tn, pred.rank)
    else:
        Q0 = pred.Q / math.sqrt(scale)
    params = {"Q": Q0}

    def full_loss(Q):
        return float(np.mean((tn - np.sum(np.abs(W @ Q.conj()) ** 2, axis=1)) ** 2))

    # Adam's normalized steps can move away from a good iterate; keep the best one
    best_loss, best_Q = full_loss(Q0), Q0.copy()
    opt = Adam(params, hyper.learning_rate, hyper.milestones, hyper.factor)
    trace = []
    for epoch in range(hyper.epochs):
        if best_loss <= hyper.tol:
            trace.append(best_loss * scale ** 2)
            continue
        opt.set_epoch(epoch)
        losses = []
        for idx in _batches(len(tn), hyper.batch_size, rng):
            Wb = W[idx]
            U = Wb @ params["Q"].conj()
            f = np.sum(np.abs(U) ** 2, axis=1)
            r = tn[idx] - f
            losses.append(float(np.mean(r ** 2)))
            c = -2.0 * r / idx.size
            grad = Wb.T @ (c[:, None] * U.conj())
            opt.step({"Q": grad})
        trace.append(float(np.mean(losses)) * scale ** 2 if losses else 0.0)
        loss = full_loss(params["Q"])
        if loss < best_loss:
            best_loss, best_Q = loss, params["Q"].copy()
    pred.Q = best_Q * math.sqrt(scale)
    pred.trained = True
    return trace


def training_mse(predictor, dataset: PowerDataset) -> float:
    """Mean squared prediction error in watts^2 over a dataset."""
    return float(np.mean((dataset.powers - predictor.predict_batch(dataset.phases)) ** 2))


def _train_dense(pred: DensePredictor, ds: PowerDataset, hyper: TrainHyper):
    rng = np.random.default_rng(hyper.seed)
    X = ds.phases
    t = ds.powers
    if not pred.trained:
        pred.target_mean = float(np.mean(t))
        std = float(np.std(t))
        pred.target_std = std if std > 0 else 1.0
    y = ((t - pred.target_mean) / pred.target_std)[:, None]
    opt = Adam(pred.net.params, hyper.learning_rate, hyper.milestones, hyper.factor)
    trace = []
    for epoch in range(hyper.epochs):
        opt.set_epoch(epoch)
        losses = []
        for idx in _batches(len(y), hyper.batch_size, rng):
            if idx.size < 2:
                # one sample only: nothing to normalize over, use running statistics
                loss, grads = pred.net.loss_and_grad(X[idx], y[idx], mode="eval")
            else:
                loss, grads = pred.net.loss_and_grad(X[idx], y[idx])
            losses.append(loss)
            opt.step(grads)
        trace.append(float(np.mean(losses)) * pred.target_std ** 2)
    pred.trained = True
    return trace


def evaluate_nmse(predictor, heldout: PowerDataset) -> float:
    """``sum (P - P_hat)^2 / sum (P - mean P)^2`` on held-out samples."""
    if len(heldout) == 0:
        raise InvalidInputError("held-out set is empty")
    t = heldout.powers
    denom = float(np.sum((t - t.mean()) ** 2))
    if denom == 0.0:
        raise DegenerateInputError("held-out targets are constant; NMSE is undefined")
    p = predictor.predict_batch(heldout.phases)
    return float(np.sum((t - p) ** 2) / denom)


# -- the twin -----------------------------------------------------------------

@dataclass
class TwinConfig:
    """``rank_in=None`` means ``K + 2`` (needs the interferer count), ``hidden=None`` means ``16*M``."""

    architecture: str = "quadratic"
    rank_in: Optional[int] = None
    rank_s: int = 2
    hidden: Optional[int] = None
    epochs: int = 500
    batch_size: int = 512
    learning_rate: Optional[float] = None
    milestones: Optional[tuple] = None
    init: str = "moment"

    def __post_init__(self):
        if self.architecture not in ("quadratic", "dense"):
            raise InvalidInputError(f"twin architecture must be 'quadratic' or 'dense', got {self.architecture!r}")

    def hyper(self, seed: int = 0) -> TrainHyper:
        kw = {"batch_size": self.batch_size, "epochs": self.epochs, "seed": seed}
        if self.learning_rate is not None:
            kw["learning_rate"] = self.learning_rate
        if self.milestones is not None:
            kw["milestones"] = tuple(self.milestones)
        return TrainHyper.quadratic(**kw) if self.architecture == "quadratic" else TrainHyper.dense(**kw)

    def to_dict(self):
        d = asdict(self)
        if d["milestones"] is not None:
            d["milestones"] = list(d["milestones"])
        return d


class DigitalTwin:
    """Interference and signal predictors trained independently on their datasets."""

    def __init__(self, interference, signal):
        if interference.num_antennas != signal.num_antennas:
            raise InvalidInputError("predictors disagree on the antenna count")
        self.interference = interference
        self.signal = signal
        self.nmse_history = []

    @classmethod
    def build(cls, config: TwinConfig, num_antennas: int, num_interferers: int = 2, rng=None) -> "DigitalTwin":
        rng = np.random.default_rng(rng)
        if config.architecture == "quadratic":
            r_in = config.rank_in if config.rank_in is not None else num_interferers + 2
            return cls(QuadraticPredictor(num_antennas, r_in, "interference", rng=rng, init=config.init),
                       QuadraticPredictor(num_antennas, config.rank_s, "signal", rng=rng, init=config.init))
        return cls(DensePredictor(num_antennas, config.hidden, "interference", rng=rng),
                   DensePredictor(num_antennas, config.hidden, "signal", rng=rng))

    @property
    def num_antennas(self) -> int:
        return self.interference.num_antennas

    @property
    def trained(self) -> bool:
        return self.interference.trained and self.signal.trained

    def train(self, d_in: PowerDataset, d_s: PowerDataset, config: TwinConfig, seed: int = 0):
        _, trace_in = train_twin(self.interference, d_in, config.hyper(seed))
        _, trace_s = train_twin(self.signal, d_s, config.hyper(seed + 1))
        return trace_in, trace_s

    def nmse(self, h_in: PowerDataset, h_s: PowerDataset):
        return evaluate_nmse(self.interference, h_in), evaluate_nmse(self.signal, h_s)

    def to_dict(self):
        return {"format": "dtnull.twin/1", "architecture": self.interference.architecture,
                "interference": self.interference.to_dict(), "signal": self.signal.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "DigitalTwin":
        return cls(predictor_from_dict(d["interference"]), predictor_from_dict(d["signal"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path) -> "DigitalTwin":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))
