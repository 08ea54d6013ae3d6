"""Independent reference computations used only by the tests."""
import itertools

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"RX": X, "RY": Y, "RZ": Z}


def rotation(kind, angle):
    # exp(-i a P / 2) = cos(a/2) I - i sin(a/2) P
    return np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * PAULI[kind]


def embed(single, qubit, n):
    """Full 2^n matrix acting with ``single`` on ``qubit`` (little-endian)."""
    full = np.eye(1, dtype=complex)
    for q in reversed(range(n)):
        full = np.kron(full, single if q == qubit else I2)
    return full


def cz_matrix(a, b, n):
    diag = [(-1.0 if (i >> a) & 1 and (i >> b) & 1 else 1.0) for i in range(2**n)]
    return np.diag(diag).astype(complex)


def naive_expectations(spec, theta, lam, features):
    """Dense-matrix evaluation of <Z> on each observable qubit."""
    n = spec.num_qubits
    psi = np.zeros(2**n, dtype=complex)
    if spec.basis_encoded:
        psi[sum(int(features[q]) << q for q in range(n))] = 1
    else:
        psi[0] = 1
    for g in spec.gates:
        if g.kind == "CZ":
            U = cz_matrix(g.control, g.target, n)
        else:
            if g.source == "theta":
                a = theta[g.theta]
            elif g.source == "encoded":
                a = lam[g.lam] * features[g.feature]
            else:
                a = g.value
            U = embed(rotation(g.kind, a), g.target, n)
        psi = U @ psi
    return np.array([np.real(psi.conj() @ embed(Z, q, n) @ psi) for q in spec.observable_qubits])


def central_difference(f, x, h=1e-5):
    """Jacobian of vector-valued ``f`` at ``x`` by central differences."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def serial_trains(n_units):
    for k in range(1, n_units + 1):
        yield from itertools.permutations(range(n_units), k)
