"""Uniform random Clifford sampling and tableau densification.

A Clifford ``U`` is recorded by its binary stabilizer tableau: row ``j`` of
the destabilizer half is ``U X_j U^dagger`` and row ``j`` of the stabilizer
half is ``U Z_j U^dagger``, each as ``(x | z | sign)`` with ``x_q = z_q = 1``
meaning ``Y`` on qubit ``q``.  Sampling follows the Bravyi-Maslov canonical
form ``F1 H S F2`` (quantum Mallows permutation plus Hadamard layer between
two Borel-group elements), which is exactly uniform over the group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NumericalError, SizeError

MAX_STATE_QUBITS = 20

MAX_DENSE_QUBITS = 12


@dataclass(frozen=True, eq=False)
class CliffordTableau:
    """``(2n, 2n)`` symplectic matrix plus ``2n`` sign bits."""

    table: np.ndarray
    signs: np.ndarray

    @property
    def num_qubits(self) -> int:
        return self.table.shape[0] // 2

    def is_symplectic(self) -> bool:
        n = self.num_qubits
        omega = np.block([[np.zeros((n, n), int), np.eye(n, dtype=int)], [np.eye(n, dtype=int), np.zeros((n, n), int)]])
        t = self.table.astype(int)
        return bool(np.array_equal((t @ omega @ t.T) % 2, omega))


def _sample_qmallows(n: int, rng: np.random.Generator):
    had = np.zeros(n, dtype=bool)
    perm = np.zeros(n, dtype=int)
    inds = list(range(n))
    for i in range(n):
        m = n - i
        eps = 4.0 ** (-m)
        r = rng.uniform(0, 1)
        index = -int(np.ceil(np.log2(r + (1 - r) * eps)))
        had[i] = index < m
        k = index if index < m else 2 * m - index - 1
        perm[i] = inds[k]
        del inds[k]
    return had, perm


def _fill_tril(mat: np.ndarray, rng: np.random.Generator, symmetric: bool = False) -> None:
    dim = mat.shape[0]
    rows, cols = np.tril_indices(dim, -1)
    vals = rng.integers(2, size=rows.size, dtype=np.int8)
    mat[rows, cols] = vals
    if symmetric:
        mat[cols, rows] = vals


def _inverse_tril(mat: np.ndarray) -> np.ndarray:
    """Inverse of a unit lower-triangular binary matrix over GF(2)."""
    n = mat.shape[0]
    inv = np.eye(n, dtype=np.int8)
    for col in range(n):
        for row in range(col + 1, n):
            if mat[row, col]:
                inv[row] ^= inv[col]
    return inv


def random_clifford_tableau(n: int, rng: np.random.Generator) -> CliffordTableau:
    """Uniformly random ``n``-qubit Clifford tableau (Bravyi-Maslov)."""
    had, perm = _sample_qmallows(n, rng)
    gamma1 = np.diag(rng.integers(2, size=n, dtype=np.int8))
    gamma2 = np.diag(rng.integers(2, size=n, dtype=np.int8))
    delta1 = np.eye(n, dtype=np.int8)
    delta2 = np.eye(n, dtype=np.int8)
    _fill_tril(gamma1, rng, symmetric=True)
    _fill_tril(gamma2, rng, symmetric=True)
    _fill_tril(delta1, rng)
    _fill_tril(delta2, rng)
    zero = np.zeros((n, n), dtype=np.int8)
    prod1 = (gamma1.astype(int) @ delta1) % 2
    prod2 = (gamma2.astype(int) @ delta2) % 2
    inv1 = _inverse_tril(delta1).T
    inv2 = _inverse_tril(delta2).T
    table1 = np.block([[delta1, zero], [prod1, inv1]]).astype(int)
    table2 = np.block([[delta2, zero], [prod2, inv2]]).astype(int)
    table = table2[np.concatenate([perm, n + perm])]
    inds = np.flatnonzero(had)
    lhs = np.concatenate([inds, inds + n])
    rhs = np.concatenate([inds + n, inds])
    table[lhs, :] = table[rhs, :]
    t = (table1 @ table) % 2
    signs = rng.integers(2, size=2 * n).astype(np.int8)
    return CliffordTableau(t.astype(np.int8), signs)


def _pauli_action(x: np.ndarray, z: np.ndarray, sign: int, n: int):
    """Index map and phases with ``(P v)[c] = phase[c] * v[src[c]]``."""
    weights = 1 << np.arange(n - 1, -1, -1)
    xmask = int(np.dot(x, weights))
    zmask = int(np.dot(z, weights))
    src = np.arange(2**n) ^ xmask
    parity = _popcount_parity(src & zmask)
    ny = int(np.sum(x & z))
    phase = ((-1) ** sign) * (1j**ny) * (1 - 2 * parity)
    return src, phase


def _popcount_parity(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.uint64)
    p = np.zeros_like(a)
    while np.any(a):
        p ^= a & np.uint64(1)
        a >>= np.uint64(1)
    return p.astype(np.int64)


def pauli_from_row(tab: CliffordTableau, row: int) -> np.ndarray:
    """Dense Pauli operator encoded by tableau row ``row``."""
    n = tab.num_qubits
    x, z = tab.table[row, :n].astype(int), tab.table[row, n:].astype(int)
    src, phase = _pauli_action(x, z, int(tab.signs[row]), n)
    out = np.zeros((2**n, 2**n), dtype=complex)
    out[np.arange(2**n), src] = phase
    return out


def _stabilizer_vector(actions, D: int) -> np.ndarray:
    """Joint +1 eigenvector of the stabilizer actions (projects a generic vector)."""
    for trial in range(8):
        idx = np.arange(D)
        v = np.exp(1j * idx * (0.7071 + 0.31 * trial)) * (1.0 + 0.1 * np.cos(idx * (1 + trial)))
        for src, phase in actions:
            v = 0.5 * (v + phase * v[src])
        nrm = np.linalg.norm(v)
        if nrm > 1e-6:
            return v / nrm
    raise NumericalError("stabilizer projection vanished for every trial vector")


def _row_actions(tab: CliffordTableau, rows) -> list:
    n = tab.num_qubits
    return [_pauli_action(tab.table[r, :n].astype(int), tab.table[r, n:].astype(int), int(tab.signs[r]), n) for r in rows]


def tableau_to_unitary(tab: CliffordTableau) -> np.ndarray:
    """Dense unitary (up to global phase) realizing the tableau.

    ``U|0...0>`` is the joint +1 eigenvector of the stabilizer rows, obtained
    by projecting a fixed generic vector; the other columns follow from
    ``U|x> = prod_j (U X_j U^dagger)^{x_j} U|0>``.
    """
    n = tab.num_qubits
    if n > MAX_DENSE_QUBITS:
        raise SizeError(f"dense Clifford limited to n <= {MAX_DENSE_QUBITS}")
    D = 2**n
    actions = _row_actions(tab, range(2 * n))
    v = _stabilizer_vector(actions[n:], D)
    cols = v[None, :]
    for q in range(n):
        src, phase = actions[q]
        flipped = cols[:, src] * phase
        cols = np.stack([cols, flipped], axis=1).reshape(-1, D)
    return cols.T.copy()


def random_clifford_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Dense unitary of a uniformly random ``n``-qubit Clifford."""
    if n > MAX_DENSE_QUBITS:
        raise SizeError(f"dense Clifford limited to n <= {MAX_DENSE_QUBITS}")
    return tableau_to_unitary(random_clifford_tableau(n, rng))


def random_stabilizer_state(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random ``n``-qubit stabilizer state ``U|0...0>`` for random Clifford ``U``."""
    if n > MAX_STATE_QUBITS:
        raise SizeError(f"stabilizer state vectors limited to n <= {MAX_STATE_QUBITS}")
    tab = random_clifford_tableau(n, rng)
    return _stabilizer_vector(_row_actions(tab, range(n, 2 * n)), 2**n)
