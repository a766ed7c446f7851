"""Dense linear algebra and multi-qubit tensor plumbing.

Conventions
-----------
Qubit 0 is the most significant bit of a computational-basis index, so the
basis state ``|b_0 b_1 ... b_{N-1}>`` has index ``sum_j b_j 2**(N-1-j)``.
This matches ``numpy.kron`` ordering: ``kron(a, b)`` puts ``a`` on qubit 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .exceptions import InputError, ShapeError, SizeError

HERMITIAN_TOL = 1e-8
EIGENVALUE_CLIP = -1e-10
NORM_TOL = 1e-10
MAX_OPERATOR_DIM = 2**20


def _num_qubits(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or (1 << n) != dim:
        raise ShapeError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True)
class StateVector:
    """Pure state on ``N`` qubits, optionally unnormalized."""

    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=complex).reshape(-1)
        _num_qubits(amps.size)
        if self.normalized:
            nrm = np.linalg.norm(amps)
            if abs(nrm - 1.0) > NORM_TOL:
                raise InputError(f"state flagged normalized has norm {nrm:.12g}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_array(cls, amps, normalize: bool = True) -> "StateVector":
        amps = np.asarray(amps, dtype=complex).reshape(-1)
        if normalize:
            nrm = np.linalg.norm(amps)
            if nrm == 0:
                raise InputError("cannot normalize the zero vector")
            return cls(amps / nrm, normalized=True)
        return cls(amps, normalized=False)

    @classmethod
    def basis(cls, index: int, num_qubits: int) -> "StateVector":
        amps = np.zeros(2**num_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def num_qubits(self) -> int:
        return _num_qubits(self.amplitudes.size)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


@dataclass(frozen=True)
class Bipartition:
    """Split of ``N`` qubits into subsystems ``A`` and ``B``."""

    qubits_A: tuple[int, ...]
    qubits_B: tuple[int, ...]

    def __post_init__(self):
        a, b = tuple(int(q) for q in self.qubits_A), tuple(int(q) for q in self.qubits_B)
        if set(a) & set(b):
            raise InputError("subsystems A and B overlap")
        if sorted(a + b) != list(range(len(a) + len(b))):
            raise InputError("subsystems must cover qubits 0..N-1 exactly once")
        object.__setattr__(self, "qubits_A", a)
        object.__setattr__(self, "qubits_B", b)

    @classmethod
    def contiguous(cls, n_a: int, n: int) -> "Bipartition":
        """``A`` is the first ``n_a`` qubits, ``B`` the rest."""
        if not 0 <= n_a <= n:
            raise InputError(f"need 0 <= N_A <= N, got N_A={n_a}, N={n}")
        return cls(tuple(range(n_a)), tuple(range(n_a, n)))

    @property
    def N(self) -> int:
        return len(self.qubits_A) + len(self.qubits_B)

    @property
    def N_A(self) -> int:
        return len(self.qubits_A)

    @property
    def N_B(self) -> int:
        return len(self.qubits_B)

    @property
    def D_A(self) -> int:
        return 2**self.N_A

    @property
    def D_B(self) -> int:
        return 2**self.N_B

    @property
    def is_contiguous(self) -> bool:
        return self.qubits_A == tuple(range(self.N_A))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian positive-semidefinite matrix with cached spectrum."""

    matrix: np.ndarray
    is_state: bool = True
    _check: bool = field(default=True, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"density operator must be square, got {m.shape}")
        if self._check:
            _require_hermitian(m)
            if self.is_state and abs(np.trace(m).real - 1.0) > NORM_TOL * max(1, m.shape[0]):
                raise InputError(f"trace {np.trace(m).real:.12g} != 1")
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_state(cls, psi) -> "DensityOperator":
        v = np.asarray(psi, dtype=complex).reshape(-1)
        return cls(np.outer(v, v.conj()) / np.vdot(v, v).real)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(np.eye(dim) / dim)

    @classmethod
    def from_spectrum(cls, eigenvalues, eigenvectors=None) -> "DensityOperator":
        lam = np.asarray(eigenvalues, dtype=float)
        if eigenvectors is None:
            return cls(np.diag(lam).astype(complex))
        v = np.asarray(eigenvectors, dtype=complex)
        return cls((v * lam) @ v.conj().T)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def _spectrum(self):
        return eigh(self.matrix)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in descending order, clipped at zero."""
        lam = self._spectrum[0]
        if lam.min(initial=0.0) < EIGENVALUE_CLIP:
            raise InputError(f"operator is not PSD (min eigenvalue {lam.min():.3g})")
        return np.clip(lam, 0.0, None)

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._spectrum[1]

    def purity(self) -> float:
        return float(np.sum(self.eigenvalues**2))

    def norm(self, p) -> float:
        return schatten_norm(self.matrix, p)

    def sqrt(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * np.sqrt(self.eigenvalues)) @ v.conj().T

    def fingerprint(self, decimals: int = 10) -> bytes:
        """Hashable key identifying the operator up to rounding."""
        return np.round(self.matrix, decimals).tobytes()

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def _require_hermitian(h: np.ndarray, tol: float = HERMITIAN_TOL) -> None:
    scale = max(1.0, float(np.max(np.abs(h), initial=0.0)))
    err = float(np.max(np.abs(h - h.conj().T), initial=0.0))
    if err > tol * scale:
        raise InputError(f"operator is not Hermitian (max deviation {err:.3g})")


def as_matrix(op) -> np.ndarray:
    m = np.asarray(op)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {m.shape}")
    return m


def kron(a, b) -> np.ndarray:
    """Kronecker product with a size cap on the result."""
    a, b = as_matrix(a), as_matrix(b)
    dim = a.shape[0] * b.shape[0]
    if dim > MAX_OPERATOR_DIM:
        raise SizeError(f"kron result dimension {dim} exceeds cap {MAX_OPERATOR_DIM}")
    return np.kron(a, b)


def kron_all(ops: Sequence) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = kron(out, op)
    return out


def _split_axes(part: Bipartition):
    perm = list(part.qubits_A) + list(part.qubits_B)
    return perm


def state_matrix(psi, part: Bipartition) -> np.ndarray:
    """Reshape a pure state into a ``(D_A, D_B)`` amplitude matrix."""
    v = np.asarray(psi, dtype=complex).reshape(-1)
    if v.size != 2**part.N:
        raise ShapeError(f"state of length {v.size} does not match N={part.N}")
    if part.is_contiguous:
        return v.reshape(part.D_A, part.D_B)
    t = v.reshape((2,) * part.N).transpose(_split_axes(part))
    return t.reshape(part.D_A, part.D_B)


def matrix_to_state(m: np.ndarray, part: Bipartition) -> np.ndarray:
    """Inverse of :func:`state_matrix`."""
    m = np.asarray(m)
    if part.is_contiguous:
        return m.reshape(-1)
    t = m.reshape((2,) * part.N)
    inv = np.argsort(_split_axes(part))
    return t.transpose(inv).reshape(-1)


def partial_trace(op, part: Bipartition, keep: str = "A") -> np.ndarray:
    """Reduced operator on ``A`` (``keep="A"``) or ``B`` of an operator on ``AB``."""
    m = as_matrix(op)
    n = part.N
    if m.shape[0] != 2**n:
        raise ShapeError(f"operator dimension {m.shape[0]} does not match N={n}")
    perm = _split_axes(part)
    t = m.reshape((2,) * (2 * n)).transpose(perm + [n + p for p in perm])
    t = t.reshape(part.D_A, part.D_B, part.D_A, part.D_B)
    if keep == "A":
        return np.einsum("ibjb->ij", t)
    if keep == "B":
        return np.einsum("aiaj->ij", t)
    raise InputError(f"keep must be 'A' or 'B', got {keep!r}")


def reduced_state(psi, part: Bipartition, keep: str = "A") -> np.ndarray:
    """Reduced density matrix of a pure state without forming ``|psi><psi|``."""
    m = state_matrix(psi, part)
    if keep == "A":
        return m @ m.conj().T
    if keep == "B":
        return m.T @ m.conj()
    raise InputError(f"keep must be 'A' or 'B', got {keep!r}")


def eigh(h) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian eigendecomposition with eigenvalues in descending order."""
    m = as_matrix(h)
    _require_hermitian(m)
    lam, vec = np.linalg.eigh(0.5 * (m + m.conj().T))
    return lam[::-1].copy(), vec[:, ::-1].copy()


def _singular_values(m: np.ndarray) -> np.ndarray:
    if np.allclose(m, m.conj().T, atol=HERMITIAN_TOL, rtol=0):
        return np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))
    return np.linalg.svd(m, compute_uv=False)


def schatten_from_singular(s: np.ndarray, p) -> float:
    s = np.abs(np.asarray(s, dtype=float))
    if p in (np.inf, "inf"):
        return float(s.max(initial=0.0))
    p = float(p)
    if p <= 0:
        raise InputError("Schatten index must be positive")
    return float(np.sum(s**p) ** (1.0 / p))


def schatten_norm(op, p=2) -> float:
    """Schatten ``p``-norm (``p`` may be ``np.inf``)."""
    m = np.asarray(op)
    if m.ndim == 1:
        return schatten_from_singular(m, p)
    return schatten_from_singular(_singular_values(m), p)


def _coerce_pair(a, b):
    if hasattr(a, "aligned_with"):
        return a.aligned_with(b)
    if hasattr(b, "aligned_with"):
        y, x = b.aligned_with(a)
        return x, y
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def trace_distance(a, b) -> float:
    """``0.5 * ||a - b||_1``."""
    x, y = _coerce_pair(a, b)
    return 0.5 * schatten_norm(x - y, 1)


def hs_distance(a, b) -> float:
    """``0.5 * ||a - b||_2``."""
    x, y = _coerce_pair(a, b)
    return 0.5 * float(np.linalg.norm(x - y))


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Density matrix from the induced (Wishart) measure of the given rank."""
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a Ginibre matrix with phase correction."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def haar_unitaries(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Batch of ``count`` Haar-random unitaries, shape ``(count, dim, dim)``."""
    z = rng.standard_normal((count, dim, dim)) + 1j * rng.standard_normal((count, dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=1, axis2=2)
    return q * (d / np.abs(d))[:, None, :]


def haar_isometry(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """First ``cols`` columns of a Haar-random ``rows x rows`` unitary."""
    z = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))
