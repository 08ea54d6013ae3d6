"""Quantum Q-function circuit architectures.

Every variant shares the same trainable block: an ``RX, RY, RZ`` triplet of
theta rotations on each qubit followed by a CZ ring.  The variants differ in
how the flowsheet vector enters the circuit:

* Variant 1 basis-encodes the state bits (one qubit per feature) and
  re-uploads all features through scaled ``RX`` gates after each block.
* Variant 2 feeds features through one scaled ``RX`` per qubit per layer.
* Variant 3 feeds features through scaled ``RX, RY, RZ`` on every qubit.

Every variant closes with one extra theta triplet layer, and the Q-value for
action ``a`` is ``w[a] * <Z>`` on qubit ``a``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import statevec
from .errors import DimensionError, InsufficientCapacityError, ParameterShapeError
from .statevec import GateOp, cz, encoded, rot


class EncodingKind(str, enum.Enum):
    BASIS_REUPLOAD = "basis_reupload"
    ANGLE_X = "angle_x"
    ANGLE_XYZ = "angle_xyz"


@dataclass(frozen=True)
class CircuitSpec:
    num_qubits: int
    num_layers: int
    feature_count: int
    action_count: int
    gates: tuple[GateOp, ...] = field(repr=False)
    observable_qubits: tuple[int, ...]
    encoding_kind: EncodingKind
    n_theta: int
    n_lambda: int

    @property
    def basis_encoded(self) -> bool:
        return self.encoding_kind is EncodingKind.BASIS_REUPLOAD

    @property
    def variant(self) -> int:
        return {
            EncodingKind.BASIS_REUPLOAD: 1,
            EncodingKind.ANGLE_X: 2,
            EncodingKind.ANGLE_XYZ: 3,
        }[self.encoding_kind]

    @property
    def n_params(self) -> int:
        return self.n_theta + self.n_lambda + self.action_count

    def encoded_features(self) -> set[int]:
        return {g.feature for g in self.gates if g.source == "encoded"}


@dataclass
class ParamVector:
    theta: np.ndarray
    lam: np.ndarray
    w: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.theta, self.lam, self.w])

    @classmethod
    def from_flat(cls, spec: CircuitSpec, flat) -> "ParamVector":
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (spec.n_params,):
            raise ParameterShapeError(f"expected {spec.n_params} parameters, got {flat.shape}")
        a, b = spec.n_theta, spec.n_theta + spec.n_lambda
        return cls(flat[:a], flat[a:b], flat[b:])


def init_params(spec: CircuitSpec, rng: np.random.Generator) -> ParamVector:
    """theta ~ U(-pi, pi), lambda = 1, w = 1."""
    return ParamVector(
        rng.uniform(-np.pi, np.pi, spec.n_theta),
        np.ones(spec.n_lambda),
        np.ones(spec.action_count),
    )


def _check_counts(*counts: int) -> None:
    if any(c < 1 for c in counts):
        raise DimensionError("feature, qubit and layer counts must be at least 1")


def min_layers_v2(n_x: int, n_q: int) -> int:
    _check_counts(n_x, n_q)
    return math.ceil(n_x / n_q)


def min_layers_v3(n_x: int, n_q: int) -> int:
    _check_counts(n_x, n_q)
    return math.ceil(n_x / (3 * n_q))


class _Program:
    def __init__(self, n_q: int):
        self.n_q = n_q
        self.gates: list[GateOp] = []
        self.n_theta = 0
        self.n_lambda = 0

    def theta_layer(self):
        for q in range(self.n_q):
            for kind in statevec.ROTATIONS:
                self.gates.append(rot(kind, q, self.n_theta))
                self.n_theta += 1

    def cz_ring(self):
        n = self.n_q
        if n == 2:
            self.gates.append(cz(0, 1))
        elif n > 2:
            self.gates.extend(cz(q, (q + 1) % n) for q in range(n))

    def encode(self, kind: str, qubit: int, feature: int):
        self.gates.append(encoded(kind, qubit, feature, self.n_lambda))
        self.n_lambda += 1

    def spec(self, n_x, n_a, layers, kind) -> CircuitSpec:
        return CircuitSpec(
            num_qubits=self.n_q,
            num_layers=layers,
            feature_count=n_x,
            action_count=n_a,
            gates=tuple(self.gates),
            observable_qubits=tuple(range(n_a)),
            encoding_kind=kind,
            n_theta=self.n_theta,
            n_lambda=self.n_lambda,
        )


def _check_shape(n_x, n_a, n_q, layers):
    _check_counts(n_x, n_a, n_q, layers)
    if n_a > n_q:
        raise DimensionError(f"{n_a} actions need at least {n_a} qubits, got {n_q}")


def build_variant1(n_x: int, n_a: int, layers: int = 1) -> CircuitSpec:
    _check_shape(n_x, n_a, n_x, layers)
    p = _Program(n_x)
    for _ in range(layers):
        p.theta_layer()
        p.cz_ring()
        for q in range(n_x):
            p.encode("RX", q, q)
    p.theta_layer()
    return p.spec(n_x, n_a, layers, EncodingKind.BASIS_REUPLOAD)


def build_variant2(n_x: int, n_a: int, n_q: int, layers: int) -> CircuitSpec:
    _check_shape(n_x, n_a, n_q, layers)
    need = min_layers_v2(n_x, n_q)
    if layers < need:
        raise InsufficientCapacityError(f"{n_x} features on {n_q} qubits need {need} layers")
    p = _Program(n_q)
    slot = 0
    for _ in range(layers):
        for q in range(n_q):
            p.encode("RX", q, slot % n_x)
            slot += 1
        p.theta_layer()
        p.cz_ring()
    p.theta_layer()
    return p.spec(n_x, n_a, layers, EncodingKind.ANGLE_X)


def build_variant3(n_x: int, n_a: int, n_q: int, layers: int) -> CircuitSpec:
    _check_shape(n_x, n_a, n_q, layers)
    need = min_layers_v3(n_x, n_q)
    if layers < need:
        raise InsufficientCapacityError(f"{n_x} features on {n_q} qubits need {need} layers")
    p = _Program(n_q)
    slot = 0
    for _ in range(layers):
        for q in range(n_q):
            for kind in statevec.ROTATIONS:
                p.encode(kind, q, slot % n_x)
                slot += 1
        p.theta_layer()
        p.cz_ring()
    p.theta_layer()
    return p.spec(n_x, n_a, layers, EncodingKind.ANGLE_XYZ)


def build(variant: int, n_x: int, n_a: int, n_q: int | None = None, layers: int | None = None) -> CircuitSpec:
    """Build a variant with the default width/depth where not given."""
    if variant == 1:
        return build_variant1(n_x, n_a, layers or 1)
    n_q = n_q or n_a
    if variant == 2:
        return build_variant2(n_x, n_a, n_q, layers or min_layers_v2(n_x, n_q))
    if variant == 3:
        return build_variant3(n_x, n_a, n_q, layers or min_layers_v3(n_x, n_q))
    raise ValueError(f"unknown variant {variant}")


def param_count(spec: CircuitSpec) -> int:
    return spec.n_params


def q_values(spec: CircuitSpec, params: ParamVector, state_features) -> np.ndarray:
    x = np.asarray(state_features, dtype=float)
    if x.shape != (spec.feature_count,):
        raise ParameterShapeError(f"expected {spec.feature_count} features, got {x.shape}")
    if not np.all((x == 0) | (x == 1)):
        raise ParameterShapeError("flowsheet state features must be binary")
    return q_values_batch(spec, params, x[None, :])[0]


def q_values_batch(spec: CircuitSpec, params: ParamVector, states) -> np.ndarray:
    return np.asarray(params.w) * statevec.run_circuit_batch(spec, params, states)
