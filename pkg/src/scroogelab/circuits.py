"""Statevector circuits and generator-state constructions.

States are stored as length ``2**n`` vectors with qubit 0 as the most
significant bit of the basis index.  Gates act through reshaped tensor
contractions; diagonal gates multiply in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .clifford import random_clifford_unitary
from .exceptions import InputError, ShapeError, SizeError
from .numeric import StateVector, haar_unitaries

UNITARY_TOL = 1e-10

_SQ2 = 1.0 / np.sqrt(2.0)
FIXED_GATES = {
    "I": np.eye(2, dtype=complex),
    "H": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "S": np.diag([1.0, 1j]),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1.0, -1.0]).astype(complex),
    # T = diag(1, e^{-i pi/4}) as used for the doped circuits
    "T": np.diag([1.0, np.exp(-1j * np.pi / 4)]),
}
TWO_QUBIT = {"CZ", "CNOT"}


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _canonical_phase(u: np.ndarray) -> np.ndarray:
    flat = u.ravel()
    i = int(np.flatnonzero(np.abs(flat) > 1e-9)[0])
    return u * (abs(flat[i]) / flat[i])


def _key(u: np.ndarray) -> bytes:
    # adding 0.0 folds -0.0 into +0.0
    return (np.round(u, 8) + 0.0).tobytes()


def _enumerate_clifford_1q() -> np.ndarray:
    """The 24 single-qubit Cliffords modulo phase, BFS over ``{H, S}``."""
    gens = [FIXED_GATES["H"], FIXED_GATES["S"]]
    found = [np.eye(2, dtype=complex)]
    keys = {_key(found[0])}
    frontier = list(found)
    while frontier:
        nxt = []
        for u in frontier:
            for g in gens:
                v = _canonical_phase(g @ u)
                key = _key(v)
                if key not in keys:
                    keys.add(key)
                    found.append(v)
                    nxt.append(v)
        frontier = nxt
    return np.array(found)


CLIFFORD_1Q = _enumerate_clifford_1q()


@dataclass(frozen=True)
class Gate:
    """A gate on ``targets`` (control first for CNOT).

    ``name`` is one of ``H S X Y Z T I RY CZ CNOT C1 DIAG U``.  ``RY`` takes
    ``params=(theta,)``, ``C1`` takes ``params=(index,)`` into
    :data:`CLIFFORD_1Q`; ``DIAG`` and ``U`` carry an explicit ``matrix``
    (phase vector or dense unitary) over the listed targets.
    """

    name: str
    targets: tuple
    params: tuple = ()
    matrix: np.ndarray | None = field(default=None, compare=False)

    def unitary(self) -> np.ndarray:
        if self.name in FIXED_GATES:
            return FIXED_GATES[self.name]
        if self.name == "RY":
            return ry(float(self.params[0]))
        if self.name == "C1":
            return CLIFFORD_1Q[int(self.params[0])]
        if self.name == "CZ":
            return np.diag([1, 1, 1, -1]).astype(complex)
        if self.name == "CNOT":
            return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
        if self.name == "DIAG":
            return np.diag(self.matrix)
        if self.name == "U":
            return np.asarray(self.matrix)
        raise InputError(f"unknown gate {self.name!r}")

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        if self.name == "DIAG":
            return bool(np.allclose(np.abs(self.matrix), 1.0, atol=tol))
        u = self.unitary()
        return bool(np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=tol))


@dataclass
class Circuit:
    """Ordered gate list on ``num_qubits`` qubits."""

    num_qubits: int
    gates: list = field(default_factory=list)
    seed: int | None = None

    def __post_init__(self):
        for g in self.gates:
            self._check(g)

    def _check(self, g: Gate) -> None:
        if any(t < 0 or t >= self.num_qubits for t in g.targets):
            raise InputError(f"gate {g.name} targets {g.targets} outside 0..{self.num_qubits - 1}")

    def append(self, g: Gate) -> "Circuit":
        self._check(g)
        self.gates.append(g)
        return self

    def extend(self, gates: Iterable[Gate]) -> "Circuit":
        for g in gates:
            self.append(g)
        return self

    def __len__(self) -> int:
        return len(self.gates)

    def count(self, name: str) -> int:
        return sum(g.name == name for g in self.gates)

    def qubits_touched(self) -> set:
        return {t for g in self.gates for t in g.targets}

    def to_text(self) -> str:
        """One gate per line: ``NAME t1,t2 [params...]``; matrices as re/im pairs."""
        lines = [f"# qubits {self.num_qubits}" + (f" seed {self.seed}" if self.seed is not None else "")]
        for g in self.gates:
            parts = [g.name, ",".join(str(t) for t in g.targets)]
            if g.matrix is not None:
                m = np.asarray(g.matrix).ravel()
                parts += [repr(float(v)) for z in m for v in (z.real, z.imag)]
            else:
                parts += [repr(p) for p in g.params]
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        if head[:2] != ["#", "qubits"]:
            raise InputError("missing '# qubits N' header")
        n = int(head[2])
        seed = int(head[4]) if len(head) >= 5 else None
        gates = []
        for ln in lines[1:]:
            tok = ln.split()
            name, targets = tok[0], tuple(int(t) for t in tok[1].split(","))
            rest = [float(v) for v in tok[2:]]
            if name in ("DIAG", "U"):
                vals = np.array(rest[0::2]) + 1j * np.array(rest[1::2])
                if name == "U":
                    dim = 2 ** len(targets)
                    vals = vals.reshape(dim, dim)
                gates.append(Gate(name, targets, matrix=vals))
            elif name == "C1":
                gates.append(Gate(name, targets, (int(rest[0]),)))
            else:
                gates.append(Gate(name, targets, tuple(rest)))
        return cls(n, gates, seed)


# --------------------------------------------------------------------------
# kernels


def _apply_matrix(t: np.ndarray, u: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    m = len(targets)
    ut = u.reshape((2,) * (2 * m))
    out = np.tensordot(ut, t, axes=(list(range(m, 2 * m)), list(targets)))
    return np.moveaxis(out, list(range(m)), list(targets))


def _apply_diag(t: np.ndarray, phases: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    m = len(targets)
    n = t.ndim
    shape = [1] * n
    for i, q in enumerate(targets):
        shape[q] = 2
    order = np.argsort(targets)
    ph = np.asarray(phases).reshape((2,) * m).transpose(order).reshape(shape)
    return t * ph


def apply_gate(t: np.ndarray, g: Gate) -> np.ndarray:
    """Apply ``g`` to a state tensor of shape ``(2,)*n`` (returns a new array)."""
    if g.name == "CZ":
        a, b = g.targets
        t = t.copy()
        idx = [slice(None)] * t.ndim
        idx[a] = 1
        idx[b] = 1
        t[tuple(idx)] *= -1
        return t
    if g.name == "CNOT":
        c, x = g.targets
        t = t.copy()
        idx = [slice(None)] * t.ndim
        idx[c] = 1
        sub = t[tuple(idx)]
        ax = x - (x > c)
        t[tuple(idx)] = np.flip(sub, axis=ax)
        return t
    if g.name == "DIAG":
        return _apply_diag(t, g.matrix, g.targets)
    if g.name in ("Z", "S", "T"):
        return _apply_diag(t, np.diag(g.unitary()), g.targets)
    return _apply_matrix(t, g.unitary(), g.targets)


def apply_circuit(c: Circuit, psi) -> StateVector:
    """Run ``c`` on ``psi`` and return the output state."""
    v = np.asarray(psi, dtype=complex).reshape(-1)
    if v.size != 2**c.num_qubits:
        raise ShapeError(f"state of dimension {v.size} does not match {c.num_qubits} qubits")
    t = v.reshape((2,) * c.num_qubits)
    for g in c.gates:
        t = apply_gate(t, g)
    return StateVector(t.reshape(-1), normalized=False)


def apply_unitary_on(psi, u: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Apply a dense unitary ``u`` acting on ``qubits`` of an ``n``-qubit state."""
    t = np.asarray(psi, dtype=complex).reshape((2,) * n)
    return _apply_matrix(t, np.asarray(u), list(qubits)).reshape(-1)


def circuit_unitary(c: Circuit) -> np.ndarray:
    """Dense unitary of ``c`` (columns are images of basis states)."""
    n = c.num_qubits
    if n > 12:
        raise SizeError("dense circuit unitary limited to 12 qubits")
    D = 2**n
    t = np.eye(D, dtype=complex).reshape((2,) * n + (D,))
    for g in c.gates:
        # trailing column axis is carried along untouched
        t = apply_gate(t, g)
    return t.reshape(D, D)


# --------------------------------------------------------------------------
# constructions


def plus_state(n: int) -> np.ndarray:
    return np.full(2**n, 2 ** (-n / 2), dtype=complex)


def bell_ladder_state(N_A: int, N: int) -> StateVector:
    """``prod_i CZ_{i, i+N_A} |+>^N``: qubit ``i < N_A`` paired with ``i + N_A``."""
    if N < 2 * N_A:
        raise InputError(f"Bell ladder needs N >= 2 N_A, got N={N}, N_A={N_A}")
    c = Circuit(N, [Gate("CZ", (i, i + N_A)) for i in range(N_A)])
    return apply_circuit(c, plus_state(N))


def random_diagonal_unitary(qubits: Sequence[int], rng: np.random.Generator, num_qubits: int | None = None) -> Circuit:
    """Diagonal gate with iid uniform phases on ``qubits``."""
    qubits = tuple(int(q) for q in qubits)
    n = num_qubits if num_qubits is not None else (max(qubits) + 1 if qubits else 0)
    phases = np.exp(1j * rng.uniform(0, 2 * np.pi, size=2 ** len(qubits)))
    return Circuit(n, [Gate("DIAG", qubits, matrix=phases)])


def uniform_phase_state(n: int, rng: np.random.Generator) -> np.ndarray:
    """``U_diag |+>^n`` with iid uniform phases."""
    return np.exp(1j * rng.uniform(0, 2 * np.pi, size=2**n)) * 2 ** (-n / 2)


def entangled_pair_state(chi: float, N_A: int, N_B: int) -> StateVector:
    """``(cos(chi/2)|00> + sin(chi/2)|11>)^{N_A}`` between ``A`` and ``B_1``, rest ``|0>``.

    Qubit layout: ``A = 0..N_A-1``, ``B_1 = N_A..2N_A-1``, ``B_2`` the rest.
    """
    if N_B < N_A:
        raise InputError(f"need N_B >= N_A, got N_B={N_B}, N_A={N_A}")
    n = N_A + N_B
    pair = np.array([np.cos(chi / 2), np.sin(chi / 2)])
    amp = np.zeros(2**n, dtype=complex)
    for bits in range(2**N_A):
        a = 1.0
        for i in range(N_A):
            a *= pair[(bits >> (N_A - 1 - i)) & 1]
        # A bits then the same bits on B_1, zeros on B_2
        idx = (bits << N_B) | (bits << (N_B - N_A))
        amp[idx] = a
    return StateVector(amp)


def ry_layer(theta: float, qubits: Sequence[int], num_qubits: int | None = None) -> Circuit:
    qubits = list(qubits)
    n = num_qubits if num_qubits is not None else (max(qubits) + 1 if qubits else 0)
    return Circuit(n, [Gate("RY", (q,), (float(theta),)) for q in qubits])


def cnot_layer(qubits: Sequence[int], pattern: str = "staircase") -> list:
    """Fixed nearest-neighbour CNOTs ``q_j -> q_{j+1}`` with periodic wrap.

    ``brickwork`` applies even bonds then odd bonds; ``staircase`` applies
    bonds ``0, 1, ..., n-1`` in order.  Both use all ``n`` ring bonds.
    """
    q = list(qubits)
    n = len(q)
    if n < 2:
        return []
    if n == 2:
        return [Gate("CNOT", (q[0], q[1]))]
    bonds = list(range(n))
    if pattern == "brickwork":
        bonds = bonds[0::2] + bonds[1::2]
    elif pattern != "staircase":
        raise InputError(f"unknown CNOT pattern {pattern!r}")
    return [Gate("CNOT", (q[j], q[(j + 1) % n])) for j in bonds]


def doped_clifford_circuit(
    n: int,
    d: int,
    N_T: int,
    rng: np.random.Generator,
    cnot_pattern: str = "staircase",
    qubits: Sequence[int] | None = None,
    num_qubits: int | None = None,
) -> Circuit:
    """``d`` layers of random 1q Cliffords plus fixed CNOTs, doped with ``N_T`` T gates.

    T gates occupy ``N_T`` distinct (layer, qubit) slots drawn without
    replacement; each sits right after that slot's 1q Clifford.  ``qubits``
    maps the ``n`` circuit wires onto a larger register of ``num_qubits``.
    """
    if d < 0 or N_T < 0:
        raise InputError("depth and T count must be nonnegative")
    if N_T > d * n:
        raise InputError(f"N_T={N_T} exceeds the {d * n} available slots")
    wires = list(range(n)) if qubits is None else [int(q) for q in qubits]
    if len(wires) != n:
        raise InputError("qubits must list n wires")
    total = num_qubits if num_qubits is not None else max(wires) + 1 if wires else 0
    slots = set(rng.choice(d * n, size=N_T, replace=False).tolist()) if N_T else set()
    c = Circuit(total)
    cnots = cnot_layer(wires, cnot_pattern)
    for layer in range(d):
        cl = rng.integers(len(CLIFFORD_1Q), size=n)
        for j, w in enumerate(wires):
            c.append(Gate("C1", (w,), (int(cl[j]),)))
            if layer * n + j in slots:
                c.append(Gate("T", (w,)))
        c.extend(cnots)
    return c


# --------------------------------------------------------------------------
# measurement-basis scramblers on B


def local_haar_circuit(qubits: Sequence[int], rng: np.random.Generator, num_qubits: int) -> Circuit:
    us = haar_unitaries(2, len(qubits), rng)
    return Circuit(num_qubits, [Gate("U", (q,), matrix=u) for q, u in zip(qubits, us)])


def t_basis_circuit(qubits: Sequence[int], num_qubits: int) -> Circuit:
    """``H T`` on every listed qubit (T first), a non-stabilizer product basis.

    The order matters: a trailing diagonal gate would commute with the
    computational readout and leave a stabilizer basis.
    """
    c = Circuit(num_qubits)
    for q in qubits:
        c.append(Gate("T", (q,)))
        c.append(Gate("H", (q,)))
    return c


BASIS_KINDS = ("identity", "local_haar", "clifford", "haar", "t_basis")


def basis_rotation(kind: str, n_B: int, rng: np.random.Generator | None = None):
    """Measurement-basis rotation ``U_B`` on ``n_B`` qubits.

    Returns ``None`` (identity), a :class:`Circuit` on ``0..n_B-1`` for
    product rotations, or a dense ``2^n_B``-square unitary for ``clifford``.
    ``haar`` is handled by the projected-ensemble code directly (an exact
    Haar isometry is cheaper), so it is rejected here.
    """
    if kind == "identity":
        return None
    if kind == "local_haar":
        return local_haar_circuit(range(n_B), rng, n_B)
    if kind == "t_basis":
        return t_basis_circuit(range(n_B), n_B)
    if kind == "clifford":
        return random_clifford_unitary(n_B, rng)
    raise InputError(f"basis kind {kind!r} has no explicit rotation here")
