"""Dense statevector simulator for small parameterized circuits.

Conventions used everywhere in this package:

* Bit order is little-endian: qubit ``q`` is bit ``q`` of the amplitude
  index, so ``bits = [1, 0, 1]`` is the basis state at index ``1 + 4 = 5``.
* Rotations use the half-angle convention, ``RX(a) = exp(-i a X / 2)``, so
  ``<Z>`` after ``RX(a)|0>`` is ``cos(a)``.
* Expectations are exact (no shot sampling).

Internally every routine works on arrays of shape ``(batch, k, 2**n)`` so a
whole replay mini-batch can be pushed through the circuit in one sweep.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

from .errors import CapacityError, DimensionError, ParameterShapeError, UnsupportedGateError

if TYPE_CHECKING:
    from .circuits import CircuitSpec, ParamVector

ROTATIONS = ("RX", "RY", "RZ")
GATE_KINDS = ROTATIONS + ("CZ",)
MAX_QUBITS_ENV = "QSYNTH_MAX_QUBITS"
DEFAULT_MAX_QUBITS = 24


def max_qubits() -> int:
    """Register-size cap, overridable through ``QSYNTH_MAX_QUBITS``."""
    raw = os.environ.get(MAX_QUBITS_ENV)
    return DEFAULT_MAX_QUBITS if raw in (None, "") else int(raw)


def check_capacity(num_qubits: int) -> None:
    cap = max_qubits()
    if num_qubits > cap:
        raise CapacityError(
            f"{num_qubits} qubits need {16 * 2**num_qubits / 2**30:.1f} GiB per state; "
            f"cap is {cap} qubits (set {MAX_QUBITS_ENV} to change)"
        )


@dataclass(frozen=True)
class GateOp:
    """One gate of a circuit program.

    ``source`` says where a rotation angle comes from: ``"const"`` uses
    ``value``, ``"theta"`` reads ``params.theta[theta]`` and ``"encoded"``
    evaluates ``params.lam[lam] * features[feature]``.
    """

    kind: str
    target: int
    control: int | None = None
    source: str = "const"
    value: float = 0.0
    theta: int | None = None
    feature: int | None = None
    lam: int | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind == "CZ":
            if self.control is None or self.control == self.target:
                raise DimensionError("CZ needs a control distinct from its target")
        if self.source == "theta" and self.theta is None:
            raise ValueError("theta-sourced gate needs a theta index")
        if self.source == "encoded" and (self.feature is None or self.lam is None):
            raise ValueError("encoded gate needs exactly one feature and one lambda index")
        if self.source not in ("const", "theta", "encoded"):
            raise ValueError(f"unknown angle source {self.source!r}")

    @property
    def parameterized(self) -> bool:
        return self.source != "const"

    def qubits(self) -> tuple[int, ...]:
        return (self.target,) if self.control is None else (self.control, self.target)


def rot(kind: str, qubit: int, theta: int) -> GateOp:
    return GateOp(kind, qubit, source="theta", theta=theta)


def encoded(kind: str, qubit: int, feature: int, lam: int) -> GateOp:
    return GateOp(kind, qubit, source="encoded", feature=feature, lam=lam)


def cz(control: int, target: int) -> GateOp:
    return GateOp("CZ", target, control=control)


@dataclass(frozen=True)
class Statevector:
    num_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.amplitudes.shape != (1 << self.num_qubits,):
            raise DimensionError(
                f"expected {1 << self.num_qubits} amplitudes, got {self.amplitudes.shape}"
            )

    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def basis_index(bits) -> int:
    return sum(int(b) << i for i, b in enumerate(bits))


def zero_state(num_qubits: int) -> Statevector:
    return init_basis(num_qubits, [0] * num_qubits)


def init_basis(num_qubits: int, bits) -> Statevector:
    bits = list(bits)
    if len(bits) != num_qubits:
        raise DimensionError(f"{len(bits)} bits for a {num_qubits}-qubit register")
    if any(b not in (0, 1) for b in bits):
        raise DimensionError("basis bits must be 0 or 1")
    check_capacity(num_qubits)
    amps = np.zeros(1 << num_qubits, dtype=complex)
    amps[basis_index(bits)] = 1.0
    return Statevector(num_qubits, amps)


def _check_qubit(q: int, n: int) -> None:
    if not 0 <= q < n:
        raise DimensionError(f"qubit {q} out of range for {n} qubits")


@lru_cache(maxsize=256)
def _cz_mask(n: int, a: int, b: int) -> np.ndarray:
    idx = np.arange(1 << n)
    both = ((idx >> a) & 1) & ((idx >> b) & 1)
    mask = 1.0 - 2.0 * both
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=256)
def _z_sign(n: int, q: int) -> np.ndarray:
    sign = 1.0 - 2.0 * ((np.arange(1 << n) >> q) & 1)
    sign.setflags(write=False)
    return sign


def _split(v: np.ndarray, n: int, q: int) -> np.ndarray:
    b, k, _ = v.shape
    return v.reshape(b, k, 1 << (n - 1 - q), 2, 1 << q)


def _bcast(angle):
    a = np.asarray(angle, dtype=float)
    return a[:, None, None, None] if a.ndim == 1 else a


def _apply(v: np.ndarray, kind: str, n: int, target: int, control, angle) -> np.ndarray:
    """Apply one gate to a ``(batch, k, 2**n)`` array; ``angle`` is scalar or per-batch."""
    if kind == "CZ":
        return v * _cz_mask(n, control, target)
    a = _bcast(angle)
    x = _split(v, n, target)
    v0 = x[:, :, :, 0, :]
    v1 = x[:, :, :, 1, :]
    out = np.empty_like(x)
    if kind == "RZ":
        ph = np.exp(-0.5j * a)
        out[:, :, :, 0, :] = ph * v0
        out[:, :, :, 1, :] = np.conj(ph) * v1
    else:
        c = np.cos(0.5 * a)
        s = np.sin(0.5 * a)
        if kind == "RX":
            out[:, :, :, 0, :] = c * v0 - 1j * s * v1
            out[:, :, :, 1, :] = c * v1 - 1j * s * v0
        else:
            out[:, :, :, 0, :] = c * v0 - s * v1
            out[:, :, :, 1, :] = s * v0 + c * v1
    return out.reshape(v.shape)


def _generator(v: np.ndarray, kind: str, n: int, target: int) -> np.ndarray:
    # Pauli generator P of exp(-i a P / 2)
    if kind == "RZ":
        return v * _z_sign(n, target)
    x = _split(v, n, target)
    out = np.empty_like(x)
    if kind == "RX":
        out[:, :, :, 0, :] = x[:, :, :, 1, :]
        out[:, :, :, 1, :] = x[:, :, :, 0, :]
    else:
        out[:, :, :, 0, :] = -1j * x[:, :, :, 1, :]
        out[:, :, :, 1, :] = 1j * x[:, :, :, 0, :]
    return out.reshape(v.shape)


def apply_gate(state: Statevector, gate: GateOp, angle: float = 0.0) -> Statevector:
    n = state.num_qubits
    for q in gate.qubits():
        _check_qubit(q, n)
    if gate.kind != "CZ" and not np.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    v = _apply(state.amplitudes[None, None, :], gate.kind, n, gate.target, gate.control, angle)
    return Statevector(n, v[0, 0])


def expect_z(state: Statevector, qubit: int) -> float:
    _check_qubit(qubit, state.num_qubits)
    return float(np.dot(state.probabilities(), _z_sign(state.num_qubits, qubit)))


# -- circuit execution ---------------------------------------------------------


def _check_layout(spec: CircuitSpec, params: ParamVector, feats: np.ndarray) -> None:
    if feats.ndim != 2 or feats.shape[1] != spec.feature_count:
        raise ParameterShapeError(
            f"expected {spec.feature_count} features, got shape {feats.shape[1:]}"
        )
    for name, have, want in (
        ("theta", len(params.theta), spec.n_theta),
        ("lambda", len(params.lam), spec.n_lambda),
        ("w", len(params.w), spec.action_count),
    ):
        if have != want:
            raise ParameterShapeError(f"{name} segment has {have} entries, layout needs {want}")


def gate_angle(gate: GateOp, params: ParamVector, feats: np.ndarray):
    """Resolved angle of ``gate``: a scalar, or one value per batch row when encoded."""
    if gate.source == "theta":
        return params.theta[gate.theta]
    if gate.source == "encoded":
        return params.lam[gate.lam] * feats[:, gate.feature]
    return gate.value


def _initial(spec: CircuitSpec, feats: np.ndarray) -> np.ndarray:
    n = spec.num_qubits
    check_capacity(n)
    psi = np.zeros((feats.shape[0], 1, 1 << n), dtype=complex)
    if spec.basis_encoded:
        bits = feats[:, :n]
        if not np.all((bits == 0) | (bits == 1)):
            raise ParameterShapeError("basis encoding needs binary features")
        idx = (bits.astype(np.int64) << np.arange(n)).sum(axis=1)
        psi[np.arange(feats.shape[0]), 0, idx] = 1.0
    else:
        psi[:, 0, 0] = 1.0
    return psi


def _forward(spec: CircuitSpec, params: ParamVector, feats: np.ndarray, shift=None) -> np.ndarray:
    n = spec.num_qubits
    psi = _initial(spec, feats)
    for k, g in enumerate(spec.gates):
        angle = gate_angle(g, params, feats)
        if shift is not None and shift[0] == k:
            angle = angle + shift[1]
        psi = _apply(psi, g.kind, n, g.target, g.control, angle)
    return psi


def _expectations(psi: np.ndarray, spec: CircuitSpec) -> np.ndarray:
    probs = (psi.real**2 + psi.imag**2)[:, 0, :]
    n = spec.num_qubits
    return np.stack([probs @ _z_sign(n, q) for q in spec.observable_qubits], axis=1)


def _as_batch(features) -> np.ndarray:
    f = np.asarray(features, dtype=float)
    return f[None, :] if f.ndim == 1 else f


def run_circuit_batch(spec: CircuitSpec, params: ParamVector, features) -> np.ndarray:
    """``<Z>`` of every observable qubit for each row of ``features``; shape ``(batch, n_obs)``."""
    feats = _as_batch(features)
    _check_layout(spec, params, feats)
    return _expectations(_forward(spec, params, feats), spec)


def run_circuit(spec: CircuitSpec, params: ParamVector, features) -> np.ndarray:
    f = np.asarray(features, dtype=float)
    if f.ndim != 1:
        raise ParameterShapeError("run_circuit takes one feature vector")
    return run_circuit_batch(spec, params, f)[0]


def final_state(spec: CircuitSpec, params: ParamVector, features) -> Statevector:
    f = np.asarray(features, dtype=float)
    feats = f[None, :]
    _check_layout(spec, params, feats)
    return Statevector(spec.num_qubits, _forward(spec, params, feats)[0, 0])


# -- gradients -----------------------------------------------------------------


def _check_differentiable(spec: CircuitSpec) -> None:
    for g in spec.gates:
        if g.parameterized and g.kind not in ROTATIONS:
            raise UnsupportedGateError(f"{g.kind} cannot carry a trainable angle")


def adjoint_vjp(spec: CircuitSpec, params: ParamVector, feats: np.ndarray, coeffs: np.ndarray):
    """Reverse-mode sweep for weighted sums of Z observables.

    ``coeffs`` has shape ``(batch, m, n_obs)``; row ``m`` of sample ``b`` asks
    for the gradient of ``sum_a coeffs[b, m, a] * <Z_a>``.  It may also be a
    callable mapping the forward expectations to that array, for losses whose
    upstream gradient depends on the circuit output.  Returns the plain
    expectations ``(batch, n_obs)`` and gradients with respect to theta
    ``(batch, m, n_theta)`` and lambda ``(batch, m, n_lambda)``.
    """
    _check_differentiable(spec)
    n = spec.num_qubits
    psi = _forward(spec, params, feats)
    exps = _expectations(psi, spec)
    if callable(coeffs):
        coeffs = coeffs(exps)
    signs = np.stack([_z_sign(n, q) for q in spec.observable_qubits])  # (n_obs, dim)
    bra = np.einsum("bma,ad->bmd", coeffs, signs) * psi
    b, m = coeffs.shape[:2]
    g_theta = np.zeros((b, m, spec.n_theta))
    g_lam = np.zeros((b, m, spec.n_lambda))
    for g in reversed(spec.gates):
        if g.kind == "CZ":
            mask = _cz_mask(n, g.control, g.target)
            psi = psi * mask
            bra = bra * mask
            continue
        angle = gate_angle(g, params, feats)
        if g.parameterized:
            d = np.einsum("bmd,bd->bm", bra.conj(), _generator(psi, g.kind, n, g.target)[:, 0]).imag
            if g.source == "theta":
                g_theta[:, :, g.theta] += d
            else:
                g_lam[:, :, g.lam] += d * feats[:, g.feature, None]
        neg = -np.asarray(angle)
        psi = _apply(psi, g.kind, n, g.target, None, neg)
        bra = _apply(bra, g.kind, n, g.target, None, neg)
    return exps, g_theta, g_lam


def gradient_adjoint(spec: CircuitSpec, params: ParamVector, features) -> np.ndarray:
    """Jacobian of the read-out ``w_a * <Z_a>`` over the flat ``[theta, lambda, w]`` layout."""
    feats = np.asarray(features, dtype=float)[None, :]
    _check_layout(spec, params, feats)
    w = np.asarray(params.w, dtype=float)
    exps, g_theta, g_lam = adjoint_vjp(spec, params, feats, np.diag(w)[None])
    return np.hstack([g_theta[0], g_lam[0], np.diag(exps[0])])


def gradient_param_shift(spec: CircuitSpec, params: ParamVector, features) -> np.ndarray:
    """Same Jacobian as :func:`gradient_adjoint`, from +/- pi/2 shifted re-evaluations."""
    feats = np.asarray(features, dtype=float)[None, :]
    _check_layout(spec, params, feats)
    _check_differentiable(spec)
    w = np.asarray(params.w, dtype=float)
    exps = _expectations(_forward(spec, params, feats), spec)[0]
    n_t, n_l = spec.n_theta, spec.n_lambda
    jac = np.zeros((spec.action_count, n_t + n_l + spec.action_count))
    for k, g in enumerate(spec.gates):
        if not g.parameterized:
            continue
        plus = _expectations(_forward(spec, params, feats, (k, np.pi / 2)), spec)[0]
        minus = _expectations(_forward(spec, params, feats, (k, -np.pi / 2)), spec)[0]
        d = w * (plus - minus) / 2
        if g.source == "theta":
            jac[:, g.theta] += d
        else:
            jac[:, n_t + g.lam] += d * feats[0, g.feature]
    jac[:, n_t + n_l:] = np.diag(exps)
    return jac
