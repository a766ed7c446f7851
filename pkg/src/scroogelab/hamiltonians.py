"""Spin-chain Hamiltonians, ground states and dynamics-derived ensembles.

Hamiltonians are sums of real-weighted Pauli strings, assembled as sparse
matrices.  ``"XXI"`` puts X on qubits 0 and 1 (qubit 0 is the leading bit).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .ensembles import FilteredGaussianSampler, _as_rng, phase_averaged_moment
from .exceptions import InputError, NumericalError, SizeError
from .numeric import DensityOperator, StateVector
from .symmetric import MomentOperator, _check_replica_cap, symmetric_basis

DENSE_MAX_QUBITS = 12
ITERATIVE_MAX_QUBITS = 20
DENSE_SECTOR_DIM = 256
RESIDUAL_TOL = 1e-8


def _pauli_string_action(s: str):
    """Index map and phase with ``(P v)[c] = phase[c] v[src[c]]``."""
    n = len(s)
    idx = np.arange(2**n)
    xmask = zmask = 0
    ny = 0
    for q, ch in enumerate(s.upper()):
        bit = 1 << (n - 1 - q)
        if ch in "XY":
            xmask |= bit
        if ch in "ZY":
            zmask |= bit
        if ch == "Y":
            ny += 1
        if ch not in "IXYZ":
            raise InputError(f"bad Pauli letter {ch!r} in {s!r}")
    src = idx ^ xmask
    par = np.zeros(idx.size, dtype=np.int64)
    a = src & zmask
    while np.any(a):
        par ^= a & 1
        a >>= 1
    # Y = i X Z
    return src, (1j**ny) * (1 - 2 * par)


def pauli_matrix(s: str) -> sp.csr_matrix:
    src, phase = _pauli_string_action(s)
    D = src.size
    return sp.csr_matrix((phase, (np.arange(D), src)), shape=(D, D))


def pauli_string(N: int, ops: dict) -> str:
    """``{qubit: letter}`` to a length-``N`` string."""
    chars = ["I"] * N
    for q, ch in ops.items():
        chars[q] = ch
    return "".join(chars)


@dataclass(frozen=True, eq=False)
class SpinHamiltonian:
    """``H = sum_m c_m P_m`` on ``N`` qubits."""

    N: int
    terms: tuple
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        terms = tuple((float(c), str(s)) for c, s in self.terms)
        for c, s in terms:
            if len(s) != self.N:
                raise InputError(f"Pauli string {s!r} has length {len(s)}, expected {self.N}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "_cache", {})

    @property
    def dim(self) -> int:
        return 2**self.N

    def combined_terms(self) -> dict:
        out: dict = {}
        for c, s in self.terms:
            out[s] = out.get(s, 0.0) + c
        return out

    def sparse(self) -> sp.csr_matrix:
        if "sparse" not in self._cache:
            if self.N > ITERATIVE_MAX_QUBITS:
                raise SizeError(f"N={self.N} above the {ITERATIVE_MAX_QUBITS}-qubit cap")
            D = self.dim
            rows, cols, vals = [], [], []
            for s, c in self.combined_terms().items():
                src, phase = _pauli_string_action(s)
                rows.append(np.arange(D))
                cols.append(src)
                vals.append(c * phase)
            m = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(D, D))
            m.sum_duplicates()
            m.eliminate_zeros()
            self._cache["sparse"] = m
        return self._cache["sparse"]

    def dense(self) -> np.ndarray:
        if self.N > DENSE_MAX_QUBITS:
            raise SizeError(f"dense Hamiltonian limited to N <= {DENSE_MAX_QUBITS}")
        return self.sparse().toarray()

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.sparse() @ v

    def commutes_with(self, op, tol: float = 1e-12) -> bool:
        o = pauli_matrix(op) if isinstance(op, str) else sp.csr_matrix(op)
        h = self.sparse()
        c = h @ o - o @ h
        return bool(c.nnz == 0 or abs(c).max() <= tol)

    def norm_bound(self) -> float:
        return float(sum(abs(c) for c in self.combined_terms().values()))


def tfim(N: int, h: float, periodic: bool = True, longitudinal: float = 0.0) -> SpinHamiltonian:
    """``-sum X_j X_{j+1} - h sum Y_j`` (optionally ``- g sum X_j``).

    The Y-field form commutes with ``prod_j Y_j``.  A nonzero
    ``longitudinal`` field ``g`` breaks integrability and that symmetry.
    """
    if N < 2:
        raise InputError("tfim needs N >= 2")
    terms = []
    bonds = N if periodic else N - 1
    for j in range(bonds):
        terms.append((-1.0, pauli_string(N, {j: "X", (j + 1) % N: "X"})))
    for j in range(N):
        terms.append((-float(h), pauli_string(N, {j: "Y"})))
    if longitudinal:
        for j in range(N):
            terms.append((-float(longitudinal), pauli_string(N, {j: "X"})))
    return SpinHamiltonian(N, tuple(terms), "tfim", {"h": h, "periodic": periodic, "longitudinal": longitudinal})


def xxz(N: int, h: float, periodic: bool = True) -> SpinHamiltonian:
    """``sum_j (-X_j X_{j+1} - Y_j Y_{j+1} - h Z_j Z_{j+1})``."""
    if N < 2:
        raise InputError("xxz needs N >= 2")
    terms = []
    bonds = N if periodic else N - 1
    for j in range(bonds):
        k = (j + 1) % N
        terms.append((-1.0, pauli_string(N, {j: "X", k: "X"})))
        terms.append((-1.0, pauli_string(N, {j: "Y", k: "Y"})))
        terms.append((-float(h), pauli_string(N, {j: "Z", k: "Z"})))
    return SpinHamiltonian(N, tuple(terms), "xxz", {"h": h, "periodic": periodic})


def hamiltonian_from_config(model: str, N: int, h: float, periodic: bool = True, **extra) -> SpinHamiltonian:
    if model in ("ising", "tfim"):
        return tfim(N, h, periodic, float(extra.get("longitudinal", 0.0)))
    if model in ("heisenberg", "xxz"):
        return xxz(N, h, periodic)
    raise InputError(f"unknown model {model!r}")


# --------------------------------------------------------------------------
# spectra and ground states


@dataclass(frozen=True, eq=False)
class SpectrumSlice:
    """Ascending eigenvalues with eigenvectors as columns."""

    energies: np.ndarray
    vectors: np.ndarray
    sector: str = "full"

    def residual(self, H: SpinHamiltonian) -> float:
        r = H.sparse() @ self.vectors - self.vectors * self.energies
        return float(np.max(np.linalg.norm(r, axis=0)))


def full_spectrum(H: SpinHamiltonian) -> SpectrumSlice:
    if H.N > DENSE_MAX_QUBITS:
        raise SizeError(f"full spectrum limited to N <= {DENSE_MAX_QUBITS}")
    e, v = np.linalg.eigh(H.dense())
    return SpectrumSlice(e, v, "full")


def z2_even_isometry(N: int) -> sp.csr_matrix:
    """Columns ``(|z> + i^N (-1)^{|z|} |~z>)/sqrt 2`` spanning the ``+1`` space of ``prod Y_j``."""
    D = 2**N
    z = np.arange(D // 2)
    flip = (D - 1) ^ z
    pop = np.array([bin(int(a)).count("1") for a in z])
    phase = (1j**N) * (1 - 2 * (pop & 1))
    rows = np.concatenate([z, flip])
    cols = np.concatenate([np.arange(z.size)] * 2)
    vals = np.concatenate([np.ones(z.size), phase]) / np.sqrt(2)
    return sp.csr_matrix((vals, (rows, cols)), shape=(D, z.size))


def ground_state(H: SpinHamiltonian, sector: str | None = None, maxiter: int = 20000, tol: float = 1e-12) -> tuple[float, StateVector]:
    """Lowest eigenpair, optionally in the ``"z2_even"`` sector of ``prod_j Y_j``.

    Dense diagonalization for sector dimension up to ``DENSE_SECTOR_DIM``,
    ARPACK Lanczos beyond.
    """
    if H.N > ITERATIVE_MAX_QUBITS:
        raise SizeError(f"ground_state limited to N <= {ITERATIVE_MAX_QUBITS}")
    h = H.sparse()
    W = None
    if sector in ("z2_even", "Z2-even", "even"):
        W = z2_even_isometry(H.N)
        h = (W.conj().T @ h @ W).tocsr()
    elif sector not in (None, "none", "full"):
        raise InputError(f"unknown sector {sector!r}")
    dim = h.shape[0]
    if dim <= DENSE_SECTOR_DIM:
        e, v = np.linalg.eigh(h.toarray())
        e0, v0 = float(e[0]), v[:, 0]
    else:
        v_init = np.ones(dim, dtype=complex) / np.sqrt(dim)
        try:
            e, v = eigsh(h, k=1, which="SA", v0=v_init, maxiter=maxiter, tol=tol)
        except ArpackNoConvergence as exc:
            raise NumericalError(f"Lanczos did not converge for {H.name} N={H.N}: {exc}") from exc
        e0, v0 = float(e[0]), v[:, 0]
    psi = W @ v0 if W is not None else v0
    psi = psi / np.linalg.norm(psi)
    res = np.linalg.norm(H.sparse() @ psi - e0 * psi)
    if res > max(RESIDUAL_TOL * H.norm_bound(), 1e-7):
        raise NumericalError(f"ground-state residual {res:.3g} above tolerance")
    return e0, StateVector(psi)


# --------------------------------------------------------------------------
# dynamics-derived ensembles


def _spectrum(H) -> SpectrumSlice:
    return H if isinstance(H, SpectrumSlice) else full_spectrum(H)


def energy_amplitudes(H, psi0) -> tuple[SpectrumSlice, np.ndarray]:
    spec = _spectrum(H)
    a = spec.vectors.conj().T @ np.asarray(psi0, dtype=complex).reshape(-1)
    return spec, a


def diagonal_ensemble(H, psi0) -> DensityOperator:
    """``sum_j |<E_j|psi0>|^2 |E_j><E_j|``."""
    spec, a = energy_amplitudes(H, psi0)
    p = np.abs(a) ** 2
    return DensityOperator((spec.vectors * p) @ spec.vectors.conj().T)


def random_phase_sample(H, psi0, rng, n: int | None = None) -> np.ndarray:
    """``sum_j |<E_j|psi0>| e^{i phi_j} |E_j>`` with iid uniform phases (rows if ``n``)."""
    spec, a = energy_amplitudes(H, psi0)
    rng = _as_rng(rng)
    m = 1 if n is None else n
    ph = np.exp(1j * rng.uniform(0, 2 * np.pi, size=(m, a.size)))
    out = (ph * np.abs(a)) @ spec.vectors.T
    return out[0] if n is None else out


def temporal_state(H, psi0, t) -> np.ndarray:
    """``e^{-iHt}|psi0>`` (rows for an array of times)."""
    spec, a = energy_amplitudes(H, psi0)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = (np.exp(-1j * np.outer(ts, spec.energies)) * a) @ spec.vectors.T
    return out[0] if np.ndim(t) == 0 else out


def temporal_states_random(H, psi0, n: int, T: float, rng) -> np.ndarray:
    """``n`` temporal-ensemble states at iid uniform times in ``[0, T]``."""
    rng = _as_rng(rng)
    return temporal_state(H, psi0, rng.uniform(0, T, size=n))


def random_phase_moment(H, psi0, k: int) -> MomentOperator:
    """Exact k-th moment of the random-phase ensemble.

    Phase averaging kills every off-diagonal term in the energy occupation
    basis, leaving ``(k!/prod m!) prod_j p_j^{m_j}``.
    """
    spec, a = energy_amplitudes(H, psi0)
    return phase_averaged_moment(np.abs(a) ** 2, k, frame=spec.vectors)


def temporal_moment(H, psi0, k: int, T: float) -> MomentOperator:
    """Exact k-th moment of the temporal ensemble with ``t`` uniform on ``[0, T]``."""
    spec, a = energy_amplitudes(H, psi0)
    D = a.size
    _check_replica_cap(D, k)
    basis = symmetric_basis(D, k)
    c = basis.coords(a)
    E = basis.occupations @ spec.energies
    w = E[:, None] - E[None, :]
    x = w * T
    # (1 - e^{-i x}) / (i x), with the removable singularity at x = 0
    avg = np.where(np.abs(x) < 1e-12, 1.0 + 0j, (1 - np.exp(-1j * x)) / (1j * np.where(x == 0, 1, x)))
    return MomentOperator(D, k, np.outer(c, c.conj()) * avg, frame=spec.vectors)


def resonance_probe(energies: np.ndarray, k: int = 2, tol: float = 1e-9) -> dict:
    """Coincidences among sums of ``k`` energies over distinct multisets.

    A spectrum satisfies the k-th no-resonance condition iff there are none.
    """
    e = np.sort(np.asarray(energies, dtype=float))
    basis = symmetric_basis(e.size, k)
    sums = np.sort(basis.occupations @ e)
    gaps = np.diff(sums)
    return {
        "k": k,
        "coincidences": int(np.sum(gaps < tol)),
        "min_gap": float(gaps.min()) if gaps.size else float("inf"),
        "degenerate_levels": int(np.sum(np.diff(e) < tol)),
        "nonresonant": bool(np.all(gaps >= tol)),
    }


# --------------------------------------------------------------------------
# thermal states


def thermal_filter(H, beta: float) -> np.ndarray:
    """``e^{-beta H / 2}`` via the eigendecomposition."""
    if beta < 0:
        raise InputError("beta must be nonnegative")
    spec = _spectrum(H)
    w = np.exp(-0.5 * beta * (spec.energies - spec.energies[0]))
    return (spec.vectors * w) @ spec.vectors.conj().T


def thermal_state(H, beta: float) -> DensityOperator:
    if beta < 0:
        raise InputError("beta must be nonnegative")
    spec = _spectrum(H)
    w = np.exp(-beta * (spec.energies - spec.energies[0]))
    w /= w.sum()
    return DensityOperator((spec.vectors * w) @ spec.vectors.conj().T)


def ctpq_sampler(H, beta: float, seed: int = 0) -> FilteredGaussianSampler:
    return FilteredGaussianSampler(thermal_filter(H, beta), seed, label="ctpq")


def ctpq_sample(H, beta: float, rng, n: int | None = None) -> np.ndarray:
    """``e^{-beta H/2} xi / ||.||`` with complex Gaussian ``xi``."""
    filt = thermal_filter(H, beta)
    rng = _as_rng(rng)
    m = 1 if n is None else n
    xi = rng.standard_normal((m, filt.shape[0])) + 1j * rng.standard_normal((m, filt.shape[0]))
    out = xi @ filt.T
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out[0] if n is None else out


@dataclass(frozen=True)
class GaussianSpectralStats:
    mu: float
    delta2: float
    predicted_norms: dict
    beta_c: float
    self_consistent: dict


def gaussian_spectral_stats(H_A: SpinHamiltonian, beta: float, ps: Sequence = (2, 4)) -> GaussianSpectralStats:
    """Gaussian-density-of-states predictions for ``sigma_A = e^{-beta H_A}/Z``.

    ``mu = Tr H/D`` (the identity coefficient), ``Delta^2 = sum c_m^2`` over
    non-identity strings, ``||sigma_A||_p = 2^{-N_A(1-1/p)} e^{(p-1) beta^2 Delta^2/2}``
    and ``beta_c = sqrt(N_A ln 2 / (4 Delta^2))``.  ``self_consistent[p]``
    is False when ``beta^2 Delta^2 > (2/p) N_A ln 2``.
    """
    terms = H_A.combined_terms()
    ident = "I" * H_A.N
    mu = float(terms.get(ident, 0.0))
    delta2 = float(sum(c**2 for s, c in terms.items() if s != ident))
    NA = H_A.N
    pred, ok = {}, {}
    for p in ps:
        p = float(p)
        pred[p] = 2.0 ** (-NA * (1 - 1 / p)) * math.exp((p - 1) * beta**2 * delta2 / 2)
        ok[p] = bool(beta**2 * delta2 <= (2 / p) * NA * math.log(2))
    beta_c = math.sqrt(NA * math.log(2) / (4 * delta2)) if delta2 > 0 else float("inf")
    return GaussianSpectralStats(mu, delta2, pred, beta_c, ok)
