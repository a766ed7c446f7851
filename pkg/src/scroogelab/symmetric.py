"""Symmetric-subspace machinery, Weingarten calculus, and moment operators.

Moment operators are supported on the symmetric subspace of the ``k``-fold
replica space, so they are stored compressed in the orthonormal occupation
basis ``|m>`` (one vector per multiset of ``k`` single-copy indices).  For a
single-copy vector ``v`` the coordinates of ``v^{(x)k}`` in that basis are

    c_m(v) = sqrt(k! / prod_i m_i!) * prod_i v_i**m_i

which makes every rank-one term ``(|v><v|)^{(x)k}`` a ``D_k x D_k`` outer
product instead of a ``D^k x D^k`` one.  ``MomentOperator.to_dense`` embeds
back into the full replica space when needed.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .exceptions import InputError, ShapeError, SizeError
from .numeric import HERMITIAN_TOL

MAX_REPLICA_DIM = 4096
MAX_K = 6
GRAM_CONDITION_WARN = 1e10


def sym_dim(D: int, k: int) -> int:
    """Dimension ``binom(D + k - 1, k)`` of the symmetric subspace."""
    if k < 1 or D < 1:
        raise InputError("sym_dim needs D >= 1 and k >= 1")
    return math.comb(D + k - 1, k)


def _check_replica_cap(D: int, k: int, cap: int | None = None) -> None:
    cap = MAX_REPLICA_DIM if cap is None else cap
    if D**k > cap:
        raise SizeError(f"replica dimension D^k = {D}^{k} = {D**k} exceeds cap {cap}")


# --------------------------------------------------------------------------
# permutations


@dataclass(frozen=True)
class Permutation:
    """Bijection on ``{0, ..., k-1}``; ``mapping[i]`` is the image of ``i``."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        m = tuple(int(i) for i in self.mapping)
        if sorted(m) != list(range(len(m))):
            raise InputError(f"{m} is not a permutation")
        object.__setattr__(self, "mapping", m)

    @property
    def k(self) -> int:
        return len(self.mapping)

    @property
    def cycle_count(self) -> int:
        return cycle_count(self.mapping)

    def inverse(self) -> "Permutation":
        inv = [0] * self.k
        for i, j in enumerate(self.mapping):
            inv[j] = i
        return Permutation(tuple(inv))

    def __matmul__(self, other: "Permutation") -> "Permutation":
        """Composition ``(self @ other)(i) = self(other(i))``."""
        return Permutation(tuple(self.mapping[j] for j in other.mapping))

    @classmethod
    def identity(cls, k: int) -> "Permutation":
        return cls(tuple(range(k)))


def cycle_count(mapping: Sequence[int]) -> int:
    seen = [False] * len(mapping)
    count = 0
    for start in range(len(mapping)):
        if not seen[start]:
            count += 1
            j = start
            while not seen[j]:
                seen[j] = True
                j = mapping[j]
    return count


@lru_cache(maxsize=None)
def _perm_array(k: int) -> np.ndarray:
    if k > MAX_K:
        raise SizeError(f"k = {k} exceeds the permutation cap k <= {MAX_K}")
    return np.array(list(itertools.permutations(range(k))), dtype=np.int64).reshape(-1, k)


def permutations(k: int) -> list[Permutation]:
    """All of ``S_k`` in lexicographic order."""
    return [Permutation(tuple(p)) for p in _perm_array(k)]


@lru_cache(maxsize=None)
def _cycle_counts(k: int) -> np.ndarray:
    return np.array([cycle_count(p) for p in _perm_array(k)], dtype=np.int64)


def _perm_codes(perms: np.ndarray, k: int) -> np.ndarray:
    return perms @ (k ** np.arange(k - 1, -1, -1))


@lru_cache(maxsize=None)
def _relative_cycle_table(k: int) -> np.ndarray:
    """``T[a, b] = #cycles(perm_a^{-1} perm_b)``."""
    perms = _perm_array(k)
    inv = np.argsort(perms, axis=1)
    prod = np.take_along_axis(inv[:, None, :].repeat(len(perms), 1), perms[None, :, :].repeat(len(perms), 0), axis=2)
    codes = _perm_codes(perms, k)
    order = np.argsort(codes)
    pos = order[np.searchsorted(codes[order], _perm_codes(prod.reshape(-1, k), k))]
    return _cycle_counts(k)[pos].reshape(len(perms), len(perms))


def _source_index(perm: Sequence[int], D: int) -> np.ndarray:
    """Index map ``src`` with ``(P_pi v)[o] = v[src[o]]`` on the flat replica space."""
    k = len(perm)
    inv = np.argsort(np.asarray(perm))
    return np.arange(D**k).reshape((D,) * k).transpose(inv).reshape(-1)


def permutation_operator(pi: Permutation | Sequence[int], D: int) -> np.ndarray:
    """Dense operator permuting the ``k`` tensor factors of ``(C^D)^{(x)k}``.

    Copy ``j`` is moved to slot ``pi(j)``.
    """
    perm = pi.mapping if isinstance(pi, Permutation) else tuple(pi)
    k = len(perm)
    _check_replica_cap(D, k)
    src = _source_index(perm, D)
    out = np.zeros((D**k, D**k))
    out[np.arange(D**k), src] = 1.0
    return out


# --------------------------------------------------------------------------
# symmetric occupation basis


class SymmetricBasis:
    """Orthonormal occupation basis of ``Sym^k(C^D)``.

    Basis vectors are labelled by sorted index tuples ``i_1 <= ... <= i_k``
    in lexicographic order.
    """

    def __init__(self, D: int, k: int):
        if D < 1 or k < 1:
            raise InputError("SymmetricBasis needs D >= 1, k >= 1")
        self.D, self.k = int(D), int(k)
        self.multisets = np.array(
            list(itertools.combinations_with_replacement(range(D), k)), dtype=np.int64
        ).reshape(-1, k)
        self.dim = len(self.multisets)
        occ = np.zeros((self.dim, D), dtype=np.int64)
        for j in range(k):
            np.add.at(occ, (np.arange(self.dim), self.multisets[:, j]), 1)
        self.occupations = occ
        log_coef = math.lgamma(k + 1) - np.sum([[math.lgamma(m + 1) for m in row] for row in occ], axis=1)
        self.coefficients = np.exp(0.5 * log_coef)
        self.multiplicity = np.rint(self.coefficients**2).astype(np.int64)
        self._codes = self.multisets @ (D ** np.arange(k - 1, -1, -1))
        self._embedding = None

    def coords(self, vectors: np.ndarray) -> np.ndarray:
        """Occupation-basis coordinates of ``v^{(x)k}`` for each row ``v``."""
        v = np.asarray(vectors)
        single = v.ndim == 1
        v = np.atleast_2d(v)
        if v.shape[1] != self.D:
            raise ShapeError(f"vectors of length {v.shape[1]} do not match D={self.D}")
        out = v[:, self.multisets[:, 0]].copy()
        for j in range(1, self.k):
            out *= v[:, self.multisets[:, j]]
        out *= self.coefficients
        return out[0] if single else out

    def monomials(self, values: np.ndarray) -> np.ndarray:
        """``prod_i values_i**m_i`` for each basis label (no coefficient)."""
        v = np.atleast_2d(values)
        out = v[:, self.multisets[:, 0]].copy()
        for j in range(1, self.k):
            out *= v[:, self.multisets[:, j]]
        return out

    def index_of_flat(self, flat: np.ndarray) -> np.ndarray:
        """Occupation label of each flat replica-space index."""
        digits = np.stack(np.unravel_index(np.asarray(flat), (self.D,) * self.k), axis=-1)
        digits.sort(axis=-1)
        code = digits @ (self.D ** np.arange(self.k - 1, -1, -1))
        return np.searchsorted(self._codes, code)

    @property
    def embedding(self) -> np.ndarray:
        """Real isometry ``E`` of shape ``(D^k, D_k)`` with ``c(v) = E^T v^{(x)k}``."""
        if self._embedding is None:
            _check_replica_cap(self.D, self.k)
            n = self.D**self.k
            lab = self.index_of_flat(np.arange(n))
            e = np.zeros((n, self.dim))
            e[np.arange(n), lab] = 1.0 / self.coefficients[lab]
            e.setflags(write=False)
            self._embedding = e
        return self._embedding

    def power(self, m: np.ndarray) -> np.ndarray:
        """Restriction ``E^T M^{(x)k} E`` of ``M^{(x)k}`` to the symmetric subspace."""
        m = np.asarray(m)
        if m.shape != (self.D, self.D):
            raise ShapeError(f"matrix shape {m.shape} does not match D={self.D}")
        e = self.embedding
        t = e.reshape((self.D,) * self.k + (self.dim,)).astype(complex if np.iscomplexobj(m) else float)
        for axis in range(self.k):
            t = np.moveaxis(np.tensordot(m, t, axes=([1], [axis])), 0, axis)
        return e.T @ t.reshape(-1, self.dim)


@lru_cache(maxsize=64)
def symmetric_basis(D: int, k: int) -> SymmetricBasis:
    return SymmetricBasis(D, k)


def sym_power(m: np.ndarray, k: int) -> np.ndarray:
    """Compressed ``M^{(x)k}`` on the symmetric subspace."""
    m = np.asarray(m)
    return symmetric_basis(m.shape[0], k).power(m)


# --------------------------------------------------------------------------
# moment operators


def _same_frame(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a is b or (a.shape == b.shape and np.array_equal(a, b))


@dataclass(frozen=True, eq=False)
class MomentOperator:
    """Hermitian operator on ``Sym^k(C^D)`` stored in the occupation basis.

    ``matrix`` is expressed in the occupation basis of the single-copy frame
    ``frame`` (a ``D x D`` unitary whose columns are the frame vectors); the
    operator on the computational replica space is
    ``S(V) @ matrix @ S(V)^dagger`` with ``S(V) = sym_power(V, k)``.
    ``frame=None`` means the computational basis.
    """

    D: int
    k: int
    matrix: np.ndarray
    frame: np.ndarray | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix)
        d = sym_dim(self.D, self.k)
        if m.ndim == 1:
            m = np.diag(m)
        if m.shape != (d, d):
            raise ShapeError(f"moment matrix shape {m.shape} != ({d}, {d})")
        m = m.astype(complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.frame is not None:
            f = np.asarray(self.frame, dtype=complex)
            if f.shape != (self.D, self.D):
                raise ShapeError("frame must be a D x D unitary")
            f.setflags(write=False)
            object.__setattr__(self, "frame", f)

    @property
    def sym_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def basis(self) -> SymmetricBasis:
        return symmetric_basis(self.D, self.k)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def in_computational_frame(self) -> "MomentOperator":
        if self.frame is None:
            return self
        s = sym_power(self.frame, self.k)
        return MomentOperator(self.D, self.k, s @ self.matrix @ s.conj().T)

    def in_frame(self, frame: np.ndarray | None) -> "MomentOperator":
        if _same_frame(frame, self.frame):
            return self
        comp = self.in_computational_frame()
        if frame is None:
            return comp
        s = sym_power(np.asarray(frame).conj().T, self.k)
        return MomentOperator(self.D, self.k, s @ comp.matrix @ s.conj().T, frame)

    def to_dense(self) -> np.ndarray:
        """Operator on the full ``D^k``-dimensional replica space."""
        e = self.basis.embedding
        m = self.in_computational_frame().matrix
        return e @ m @ e.T

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[::-1]

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=tol, rtol=0))

    def aligned_with(self, other):
        """Two matrices representing ``self`` and ``other`` in a common basis."""
        if isinstance(other, MomentOperator):
            if (other.D, other.k) != (self.D, self.k):
                raise ShapeError(f"moment mismatch (D={self.D}, k={self.k}) vs (D={other.D}, k={other.k})")
            if _same_frame(self.frame, other.frame):
                return self.matrix, other.matrix
            return self.in_computational_frame().matrix, other.in_computational_frame().matrix
        o = np.asarray(other)
        if o.shape == self.matrix.shape:
            return self.in_computational_frame().matrix, o
        if o.shape == (self.D**self.k, self.D**self.k):
            return self.to_dense(), o
        raise ShapeError(f"cannot compare moment of size {self.matrix.shape} with array {o.shape}")

    def __add__(self, other: "MomentOperator") -> "MomentOperator":
        a, b = self.aligned_with(other)
        frame = self.frame if _same_frame(self.frame, other.frame) else None
        return MomentOperator(self.D, self.k, a + b, frame)

    def __sub__(self, other: "MomentOperator") -> "MomentOperator":
        a, b = self.aligned_with(other)
        frame = self.frame if _same_frame(self.frame, other.frame) else None
        return MomentOperator(self.D, self.k, a - b, frame)

    def __mul__(self, scalar) -> "MomentOperator":
        return MomentOperator(self.D, self.k, self.matrix * scalar, self.frame)

    __rmul__ = __mul__

    @classmethod
    def from_dense(cls, op: np.ndarray, D: int, k: int) -> "MomentOperator":
        """Compress a dense replica-space operator (its symmetric block)."""
        e = symmetric_basis(D, k).embedding
        return cls(D, k, e.T @ np.asarray(op) @ e)

    @classmethod
    def from_states(cls, states: np.ndarray, k: int, weights: np.ndarray | None = None) -> "MomentOperator":
        """``sum_i w_i (|psi_i><psi_i|)^{(x)k}`` for rows ``psi_i`` of ``states``."""
        states = np.atleast_2d(np.asarray(states, dtype=complex))
        n, D = states.shape
        w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
        c = symmetric_basis(D, k).coords(states)
        return cls(D, k, (c.T * w) @ c.conj())

    @classmethod
    def mixture(cls, weights: Iterable[float], ops: Sequence["MomentOperator"]) -> "MomentOperator":
        weights = list(weights)
        if not ops:
            raise InputError("empty mixture")
        frame = ops[0].frame
        if all(_same_frame(frame, o.frame) for o in ops):
            total = sum(w * o.matrix for w, o in zip(weights, ops))
        else:
            frame = None
            total = sum(w * o.in_computational_frame().matrix for w, o in zip(weights, ops))
        return cls(ops[0].D, ops[0].k, total, frame)


def haar_moment(D: int, k: int) -> MomentOperator:
    """``P_sym / D_k``, the ``k``-th moment of the Haar ensemble."""
    d = sym_dim(D, k)
    return MomentOperator(D, k, np.eye(d) / d)


def symmetric_projector(D: int, k: int) -> np.ndarray:
    """Dense ``P_sym = (1/k!) sum_pi P_pi``."""
    _check_replica_cap(D, k)
    out = np.zeros((D**k, D**k))
    rows = np.arange(D**k)
    for p in _perm_array(k):
        out[rows, _source_index(p, D)] += 1.0
    return out / math.factorial(k)


# --------------------------------------------------------------------------
# Weingarten calculus


@dataclass(frozen=True, eq=False)
class WeingartenTable:
    """Gram matrix ``G[s, p] = D^{#cycles(s^-1 p)}`` over ``S_k`` and its inverse."""

    k: int
    D: int
    gram: np.ndarray
    weingarten: np.ndarray

    @property
    def permutations(self) -> list[Permutation]:
        return permutations(self.k)

    def wg(self, pi: Permutation | Sequence[int]) -> float:
        """Weingarten function ``Wg(pi, D)``."""
        perm = pi.mapping if isinstance(pi, Permutation) else tuple(pi)
        perms = _perm_array(self.k)
        idx = int(np.flatnonzero((perms == np.asarray(perm)).all(axis=1))[0])
        return float(self.weingarten[0, idx])


@lru_cache(maxsize=32)
def weingarten_table(k: int, D: int) -> WeingartenTable:
    """Gram and Weingarten matrices for ``S_k`` acting on ``(C^D)^{(x)k}``."""
    if k < 1:
        raise InputError("k must be >= 1")
    if k > D:
        raise InputError(f"Gram matrix is singular for k = {k} > D = {D}")
    cycles = _relative_cycle_table(k)
    gram = np.power(float(D), cycles)
    lam, vec = np.linalg.eigh(gram)
    if lam.min() <= 0:
        raise InputError("Gram matrix is not positive definite")
    cond = lam.max() / lam.min()
    if cond > GRAM_CONDITION_WARN:
        warnings.warn(f"Gram matrix condition number {cond:.3g} exceeds {GRAM_CONDITION_WARN:g}", RuntimeWarning)
    wg = (vec / lam) @ vec.T
    gram.setflags(write=False)
    wg.setflags(write=False)
    return WeingartenTable(k, D, gram, wg)


def haar_twirl(A: np.ndarray, k: int, D: int) -> np.ndarray:
    """Exact ``E_U[U^{(x)k} A U^{dagger(x)k}]`` via Weingarten calculus.

    For ``k > D`` the Gram matrix is singular and its pseudo-inverse is used.
    """
    _check_replica_cap(D, k)
    A = np.asarray(A)
    n = D**k
    if A.shape != (n, n):
        raise ShapeError(f"operator shape {A.shape} does not match D^k = {n}")
    if k <= D:
        wg = weingarten_table(k, D).weingarten
    else:
        # the permutation operators are linearly dependent; the pseudo-inverse
        # of the Gram matrix still yields the orthogonal projection
        wg = np.linalg.pinv(np.power(float(D), _relative_cycle_table(k)), hermitian=True)
    rows = np.arange(n)
    sources = [_source_index(p, D) for p in _perm_array(k)]
    b = np.array([A[rows, src].sum() for src in sources])
    coeff = wg @ b
    out = np.zeros((n, n), dtype=np.result_type(A.dtype, coeff.dtype))
    for c, src in zip(coeff, sources):
        out[rows, src] += c
    return out
