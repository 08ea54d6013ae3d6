"""Q-function approximators sharing one interface.

A :class:`QApproximator` is either a one-hidden-layer ReLU network or a
parameterized circuit from :mod:`qsynth.circuits`.  Either way all trainable
numbers live in the flat ``params`` vector:

* classical: ``[W1 (input x hidden, row-major), b1, W2 (hidden x actions), b2]``
* quantum: ``[theta, lambda, w]`` as in :class:`~qsynth.circuits.ParamVector`
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import circuits, statevec
from .circuits import CircuitSpec, ParamVector
from .errors import DimensionError, TrainingError

HIDDEN = 128
CHECKPOINT_FORMAT = "qsynth-checkpoint"
CHECKPOINT_VERSION = 1
# amplitudes held per simulation chunk; bounds memory for wide registers
AMPLITUDE_BUDGET = 1 << 22


class Kind(str, enum.Enum):
    CLASSICAL = "classical"
    QUANTUM_V1 = "v1"
    QUANTUM_V2 = "v2"
    QUANTUM_V3 = "v3"

    @property
    def variant(self) -> int | None:
        return None if self is Kind.CLASSICAL else int(self.value[1])


@dataclass
class QApproximator:
    kind: Kind
    input_dim: int
    action_count: int
    params: np.ndarray
    hidden: int | None = None
    spec: CircuitSpec | None = None

    @property
    def n_params(self) -> int:
        return self.params.size

    def same_architecture(self, other: "QApproximator") -> bool:
        return (
            self.kind == other.kind
            and self.input_dim == other.input_dim
            and self.action_count == other.action_count
            and self.hidden == other.hidden
            and self.spec == other.spec
        )

    def copy(self) -> "QApproximator":
        return QApproximator(
            self.kind, self.input_dim, self.action_count, self.params.copy(), self.hidden, self.spec
        )

    def _classical_views(self):
        d, h, a = self.input_dim, self.hidden, self.action_count
        p = self.params
        i1 = d * h
        i2 = i1 + h
        i3 = i2 + h * a
        return p[:i1].reshape(d, h), p[i1:i2], p[i2:i3].reshape(h, a), p[i3:]


def classical_param_count(input_dim: int, action_count: int, hidden: int = HIDDEN) -> int:
    return input_dim * hidden + hidden + hidden * action_count + action_count


def param_count(kind, input_dim: int, action_count: int, qubits=None, layers=None, hidden=HIDDEN) -> int:
    kind = Kind(kind)
    if kind is Kind.CLASSICAL:
        return classical_param_count(input_dim, action_count, hidden)
    spec = circuits.build(kind.variant, input_dim, action_count, qubits, layers)
    return circuits.param_count(spec)


def make_classical(input_dim: int, action_count: int, rng: np.random.Generator, hidden: int = HIDDEN):
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    w1 = rng.uniform(-1, 1, (input_dim, hidden)) / np.sqrt(input_dim)
    w2 = rng.uniform(-1, 1, (hidden, action_count)) / np.sqrt(hidden)
    params = np.concatenate([w1.ravel(), np.zeros(hidden), w2.ravel(), np.zeros(action_count)])
    return QApproximator(Kind.CLASSICAL, input_dim, action_count, params, hidden=hidden)


def make_quantum(kind, input_dim: int, action_count: int, rng: np.random.Generator, qubits=None, layers=None):
    kind = Kind(kind)
    spec = circuits.build(kind.variant, input_dim, action_count, qubits, layers)
    params = circuits.init_params(spec, rng).flat()
    return QApproximator(kind, input_dim, action_count, params, spec=spec)


def make(kind, input_dim: int, action_count: int, rng: np.random.Generator, qubits=None, layers=None, hidden=HIDDEN):
    if Kind(kind) is Kind.CLASSICAL:
        return make_classical(input_dim, action_count, rng, hidden)
    return make_quantum(kind, input_dim, action_count, rng, qubits, layers)


def _states(model: QApproximator, states) -> np.ndarray:
    x = np.asarray(states, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionError(f"expected states of width {model.input_dim}, got shape {x.shape}")
    return x


def _chunks(model: QApproximator, n: int):
    step = max(1, AMPLITUDE_BUDGET >> model.spec.num_qubits)
    for lo in range(0, n, step):
        yield slice(lo, min(n, lo + step))


def predict_batch(model: QApproximator, states) -> np.ndarray:
    x = _states(model, states)
    if model.kind is Kind.CLASSICAL:
        w1, b1, w2, b2 = model._classical_views()
        return np.maximum(x @ w1 + b1, 0.0) @ w2 + b2
    pv = ParamVector.from_flat(model.spec, model.params)
    return np.concatenate(
        [circuits.q_values_batch(model.spec, pv, x[sl]) for sl in _chunks(model, len(x))]
    )


def predict(model: QApproximator, state) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    if x.shape != (model.input_dim,):
        raise DimensionError(f"expected a state of length {model.input_dim}, got {x.shape}")
    if model.kind is not Kind.CLASSICAL:
        return circuits.q_values(model.spec, ParamVector.from_flat(model.spec, model.params), x)
    return predict_batch(model, x)[0]


def loss_and_grad(model: QApproximator, states, actions, targets):
    """Mean squared Bellman error over a batch and its gradient on ``params``."""
    x = _states(model, states)
    a = np.asarray(actions, dtype=int)
    y = np.asarray(targets, dtype=float)
    b = len(x)
    if b == 0 or a.shape != (b,) or y.shape != (b,):
        raise DimensionError("batch needs matching, nonempty states, actions and targets")
    rows = np.arange(b)

    if model.kind is Kind.CLASSICAL:
        w1, b1, w2, b2 = model._classical_views()
        pre = x @ w1 + b1
        h = np.maximum(pre, 0.0)
        q = h @ w2 + b2
        resid = y - q[rows, a]
        dq = np.zeros_like(q)
        dq[rows, a] = -2.0 * resid / b
        dh = (dq @ w2.T) * (pre > 0)
        grad = np.concatenate([(x.T @ dh).ravel(), dh.sum(0), (h.T @ dq).ravel(), dq.sum(0)])
        return float(np.mean(resid**2)), grad

    spec = model.spec
    pv = ParamVector.from_flat(spec, model.params)
    w = pv.w
    g_theta = np.zeros(spec.n_theta)
    g_lam = np.zeros(spec.n_lambda)
    g_w = np.zeros(spec.action_count)
    sq = 0.0
    for sl in _chunks(model, b):
        xs, acts, ys = x[sl], a[sl], y[sl]
        r = np.arange(len(xs))
        upstream = {}

        def coeffs(exps):
            resid = ys - w[acts] * exps[r, acts]
            u = -2.0 * resid / b
            upstream["resid"], upstream["u"] = resid, u
            c = np.zeros((len(xs), 1, spec.action_count))
            c[r, 0, acts] = u * w[acts]
            return c

        exps, gt, gl = statevec.adjoint_vjp(spec, pv, xs, coeffs)
        g_theta += gt.sum(axis=(0, 1))
        g_lam += gl.sum(axis=(0, 1))
        np.add.at(g_w, acts, upstream["u"] * exps[r, acts])
        sq += float(np.sum(upstream["resid"] ** 2))
    return sq / b, np.concatenate([g_theta, g_lam, g_w])


@dataclass
class OptimizerState:
    lr: float = 0.01
    kind: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    step: int = 0

    def init(self, n: int) -> "OptimizerState":
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.step = 0
        return self


def make_optimizer(model: QApproximator, lr: float = 0.01, kind: str = "adam") -> OptimizerState:
    return OptimizerState(lr=lr, kind=kind).init(model.n_params)


def train_step(model: QApproximator, opt: OptimizerState, states, actions, targets) -> float:
    """One optimizer step on the batch loss; updates ``model`` in place and
    returns the loss measured before the update."""
    with np.errstate(invalid="ignore", over="ignore"):
        loss, grad = loss_and_grad(model, states, actions, targets)
    if not np.all(np.isfinite(grad)):
        bad = np.flatnonzero(~np.isfinite(grad))
        raise TrainingError(
            f"non-finite gradient in {bad.size} of {grad.size} entries (first index {bad[0]}), loss={loss}"
        )
    opt.step += 1
    if opt.kind == "sgd":
        model.params -= opt.lr * grad
        return loss
    opt.m = opt.beta1 * opt.m + (1 - opt.beta1) * grad
    opt.v = opt.beta2 * opt.v + (1 - opt.beta2) * grad * grad
    m_hat = opt.m / (1 - opt.beta1**opt.step)
    v_hat = opt.v / (1 - opt.beta2**opt.step)
    model.params -= opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    return loss


def sync_target(source: QApproximator, target: QApproximator) -> QApproximator:
    if not source.same_architecture(target):
        raise DimensionError("source and target architectures differ")
    target.params[:] = source.params
    return target


def save_checkpoint(model: QApproximator, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": model.kind.value,
        "input_dim": model.input_dim,
        "action_count": model.action_count,
        "hidden": model.hidden,
        "qubits": model.spec.num_qubits if model.spec else None,
        "layers": model.spec.num_layers if model.spec else None,
        "params": model.params.tolist(),
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_checkpoint(path) -> QApproximator:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path} is not a version-{CHECKPOINT_VERSION} checkpoint")
    kind = Kind(doc["kind"])
    params = np.array(doc["params"], dtype=float)
    if kind is Kind.CLASSICAL:
        model = QApproximator(kind, doc["input_dim"], doc["action_count"], params, hidden=doc["hidden"])
        expected = classical_param_count(model.input_dim, model.action_count, model.hidden)
    else:
        spec = circuits.build(kind.variant, doc["input_dim"], doc["action_count"], doc["qubits"], doc["layers"])
        model = QApproximator(kind, doc["input_dim"], doc["action_count"], params, spec=spec)
        expected = spec.n_params
    if params.size != expected:
        raise ValueError(f"checkpoint has {params.size} parameters, architecture needs {expected}")
    return model
