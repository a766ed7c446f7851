"""Scrooge ensembles: sampling, k-th moments, generalized references, bounds.

Scrooge(sigma) reweights Haar states ``|phi>`` by ``D <phi|sigma|phi>`` and
maps them to ``sqrt(sigma)|phi> / ||sqrt(sigma)|phi>||``.  Its k-th moment is

    rho^(k) = D * E_phi[(sqrt(sigma)|phi><phi|sqrt(sigma))^{(x)k} / <phi|sigma|phi>^{k-1}]

which has no closed form; it is estimated here by importance-weighted Monte
Carlo over Haar ``phi`` with a reported Frobenius standard error.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .ensembles import StateSampler, _as_rng, derive_seed, haar_states, make_rng
from .exceptions import InputError, RegimeWarning
from .numeric import Bipartition, DensityOperator, StateVector, as_matrix
from .symmetric import MomentOperator, _check_replica_cap, sym_dim, symmetric_basis

log = logging.getLogger(__name__)

SUPPORT_TOL = 1e-12
LOW_WEIGHT_THRESHOLD = 1e-12
_CHUNK = 1 << 20


def _as_density(sigma) -> DensityOperator:
    return sigma if isinstance(sigma, DensityOperator) else DensityOperator(as_matrix(sigma))


def _support(sigma: DensityOperator):
    lam = sigma.eigenvalues
    keep = lam > SUPPORT_TOL * max(lam.max(), 1.0)
    return lam, keep


# --------------------------------------------------------------------------
# sampling


def scrooge_states(sigma, n: int, rng) -> np.ndarray:
    """``n`` Scrooge(sigma) states as rows, by rejection against ``D ||sigma||_inf``.

    Haar proposals ``phi`` are accepted with probability
    ``<phi|sigma|phi> / ||sigma||_inf``.  States are supported on the range of
    ``sigma``; zero eigen-directions never appear.
    """
    sig = _as_density(sigma)
    rng = _as_rng(rng)
    D = sig.dim
    root = sig.sqrt()
    top = float(sig.eigenvalues[0])
    out = []
    have = 0
    while have < n:
        m = max(16, int(1.2 * (n - have) * D * top) + 16)
        phi = haar_states(D, m, rng)
        p = np.einsum("ni,ij,nj->n", phi.conj(), sig.matrix, phi).real
        acc = rng.uniform(size=m) * top < p
        psi = phi[acc] @ root.T
        psi /= np.linalg.norm(psi, axis=1, keepdims=True)
        out.append(psi)
        have += psi.shape[0]
    return np.concatenate(out)[:n]


def sample_scrooge_state(sigma, rng) -> StateVector:
    """Single state drawn from Scrooge(sigma)."""
    return StateVector(scrooge_states(sigma, 1, rng)[0])


class ScroogeSampler(StateSampler):
    kind = "scrooge"

    def __init__(self, sigma, seed: int = 0):
        self.sigma = _as_density(sigma)
        super().__init__(self.sigma.dim, seed)

    def draw(self, rng, n):
        return scrooge_states(self.sigma, n, rng)


# --------------------------------------------------------------------------
# moments


@dataclass(frozen=True, eq=False)
class ScroogeReference:
    """Monte Carlo estimate of the k-th Scrooge moment with provenance."""

    sigma: DensityOperator
    k: int
    moment: MomentOperator
    std_error: float
    n_samples: int
    seed: int
    method: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "type": "ScroogeReference",
                "eigenvalues": self.sigma.eigenvalues.tolist(),
                "k": self.k,
                "n_samples": self.n_samples,
                "seed": self.seed,
                "method": self.method,
                "std_error": self.std_error,
                "trace": self.moment.trace(),
            }
        )


def _dirichlet(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Haar moduli ``|phi_i|^2``: uniform on the probability simplex."""
    e = rng.standard_exponential((n, dim))
    return e / e.sum(axis=1, keepdims=True)


def _phase_averaged(lam: np.ndarray, k: int, n: int, rng, weight_dim: int, gap: bool = False):
    """Diagonal occupation-basis estimate in the eigenframe of sigma.

    With ``x = |phi|^2`` Dirichlet, the phase average of the k-copy operator
    is diagonal with entries ``(k!/prod m!) prod (lambda x)^m``.  Returns the
    per-entry mean and standard error of ``weight_dim * <.>/p^{k-1}`` (or the
    paired gap against the proxy weight ``D^k`` if ``gap``).
    """
    D = lam.size
    basis = symmetric_basis(D, k)
    coef2 = basis.coefficients**2
    chunk = max(64, _CHUNK // basis.dim)
    s1 = np.zeros(basis.dim)
    s2 = np.zeros(basis.dim)
    done = 0
    support = lam > 0
    r = int(support.sum()) if not gap else D
    while done < n:
        m = min(chunk, n - done)
        x = np.zeros((m, D))
        if gap:
            x[:] = _dirichlet(rng, m, D)
        else:
            x[:, support] = _dirichlet(rng, m, r)
        y = x * lam
        p = y.sum(axis=1)
        mono = basis.monomials(y) * coef2
        if gap:
            w = weight_dim * (p ** (1 - k) - float(weight_dim) ** (k - 1))
        else:
            w = weight_dim * p ** (1 - k)
        vals = mono * w[:, None]
        s1 += vals.sum(axis=0)
        s2 += (vals**2).sum(axis=0)
        done += m
    mean = s1 / n
    var = np.maximum(s2 / n - mean**2, 0.0) * n / max(n - 1, 1)
    return mean, np.sqrt(var / n)


def scrooge_moment_mc(sigma, k: int, n: int = 100_000, seed: int = 0, method: str = "phase_averaged") -> ScroogeReference:
    """k-th moment of Scrooge(sigma) by importance-weighted Monte Carlo.

    ``method="phase_averaged"`` (default) works in the eigenframe of sigma and
    integrates the Haar phases analytically, sampling only the moduli; the
    estimate is diagonal in that frame.  ``method="direct"`` accumulates full
    rank-one terms ``D p^{1-k} |c(sqrt(sigma) phi)><c(.)|`` over Haar ``phi``.
    Both are unbiased; the reported error is the Frobenius standard error.
    For rank-deficient sigma the estimator runs on the support (exact: the
    Scrooge measure never leaves the range of sigma), so pure sigma yields the
    point mass exactly.
    """
    if n < 2:
        raise InputError("need n >= 2 samples")
    sig = _as_density(sigma)
    D = sig.dim
    _check_replica_cap(D, k)
    rng = make_rng(seed, 0x5C)
    lam, keep = _support(sig)
    lam = np.where(keep, lam, 0.0)
    if method == "phase_averaged":
        mean, se = _phase_averaged(lam, k, n, rng, int(keep.sum()))
        mom = MomentOperator(D, k, mean, frame=sig.eigenvectors)
        err = float(np.sqrt(np.sum(se**2)))
    elif method == "direct":
        from .ensembles import MomentAccumulator

        vec = sig.eigenvectors[:, keep]
        root = (vec * np.sqrt(lam[keep])) @ vec.conj().T
        r = int(keep.sum())
        acc = MomentAccumulator(D, k)
        chunk = max(64, (1 << 21) // sym_dim(D, k))
        done = 0
        while done < n:
            m = min(chunk, n - done)
            # Haar on the support, embedded back into C^D
            phi = haar_states(r, m, rng) @ vec.T
            psi = phi @ root.T
            p = np.sum(np.abs(psi) ** 2, axis=1)
            acc.add(psi, r * p ** (1 - k))
            done += m
        mom, err = acc.finalize()
    else:
        raise InputError(f"unknown method {method!r}")
    return ScroogeReference(sig, k, mom, err, n, seed, method)


def scrooge_moment_proxy(sigma, k: int) -> MomentOperator:
    """Proxy moment ``(D sigma)^{(x)k} rho_Haar^(k)`` (exact, not unit trace)."""
    sig = _as_density(sigma)
    D = sig.dim
    _check_replica_cap(D, k)
    basis = symmetric_basis(D, k)
    diag = basis.monomials(sig.eigenvalues[None, :])[0] * float(D) ** k / basis.dim
    return MomentOperator(D, k, diag, frame=sig.eigenvectors)


@dataclass(frozen=True)
class ProxyGap:
    """Paired Monte Carlo estimate of ``rho_Scrooge^(k) - proxy`` (diagonal in the eigenframe)."""

    diagonal: np.ndarray
    std_errors: np.ndarray
    frame: np.ndarray
    k: int

    @property
    def trace_norm(self) -> float:
        return float(np.sum(np.abs(self.diagonal)))

    @property
    def trace_norm_error(self) -> float:
        """Bound on the Monte Carlo contribution to :attr:`trace_norm` (sum of entry errors)."""
        return float(np.sum(self.std_errors))

    def operator(self) -> MomentOperator:
        return MomentOperator(self.frame.shape[0], self.k, self.diagonal, frame=self.frame)


def scrooge_proxy_gap(sigma, k: int, n: int = 100_000, seed: int = 0) -> ProxyGap:
    """Estimate ``rho_Scrooge^(k)(sigma) - (D sigma)^{(x)k} rho_Haar^(k)``.

    Both terms are written as expectations over the same Haar draws, with
    weights ``D p^{1-k}`` and ``D^k``; their difference vanishes sample by
    sample at ``k = 1`` and at ``sigma = I/D``.
    """
    sig = _as_density(sigma)
    D = sig.dim
    _check_replica_cap(D, k)
    rng = make_rng(seed, 0x9A)
    mean, se = _phase_averaged(sig.eigenvalues, k, n, rng, D, gap=True)
    return ProxyGap(mean, se, sig.eigenvectors, k)


# --------------------------------------------------------------------------
# generalized Scrooge


@dataclass(frozen=True, eq=False)
class GeneralizedScroogeReference:
    """Mixture ``sum_z <z|sigma_B|z> rho_Scrooge^(k)(sigma_hat_{A|z})``."""

    weights: np.ndarray
    outcomes: np.ndarray
    conditional_states: list
    moment: MomentOperator
    std_error: float
    n_distinct: int
    dropped_weight: float
    k: int


def _rotate_B(sigma: np.ndarray, part: Bipartition, U_B: np.ndarray) -> np.ndarray:
    from .numeric import kron

    perm = list(part.qubits_A) + list(part.qubits_B)
    n = part.N
    if perm != list(range(n)):
        t = sigma.reshape((2,) * (2 * n)).transpose(perm + [n + p for p in perm])
        sigma = t.reshape(2**n, 2**n)
    full = kron(np.eye(part.D_A), U_B)
    return full @ sigma @ full.conj().T


def conditional_states(sigma_AB, part: Bipartition, basis: np.ndarray | None = None, threshold: float = LOW_WEIGHT_THRESHOLD):
    """Outcome weights ``<z|sigma_B|z>`` and conditional states on ``A``.

    ``basis`` is an optional unitary ``U_B``; outcome ``z`` then refers to
    ``U_B^dagger|z>``.  Returns ``(weights, outcomes, states, dropped)`` with
    low-weight outcomes removed and the rest renormalized.
    """
    if isinstance(sigma_AB, StateVector) or np.asarray(sigma_AB).ndim == 1:
        v = np.asarray(sigma_AB, dtype=complex).reshape(-1)
        sig = np.outer(v, v.conj())
    else:
        sig = as_matrix(sigma_AB).astype(complex)
    if basis is not None:
        sig = _rotate_B(sig, part, np.asarray(basis))
    elif not part.is_contiguous:
        sig = _rotate_B(sig, part, np.eye(part.D_B))
    t = sig.reshape(part.D_A, part.D_B, part.D_A, part.D_B)
    blocks = np.einsum("azbz->zab", t)
    w = np.einsum("zaa->z", blocks).real
    total = w.sum()
    keep = w > threshold * total
    if not keep.any():
        raise InputError("all outcome weights fall below the low-weight threshold")
    dropped = float(w[~keep].sum() / total)
    if dropped > 0:
        log.info("dropped %d low-weight outcomes (total weight %.3g)", int((~keep).sum()), dropped)
    idx = np.flatnonzero(keep)
    states = blocks[idx] / w[idx, None, None]
    return w[idx] / w[idx].sum(), idx, states, dropped


def generalized_scrooge_reference(
    sigma_AB,
    part: Bipartition,
    basis: np.ndarray | None = None,
    k: int = 2,
    n: int = 100_000,
    seed: int = 0,
    threshold: float = LOW_WEIGHT_THRESHOLD,
    decimals: int = 10,
) -> GeneralizedScroogeReference:
    """Generalized Scrooge reference moment for measuring ``B`` of ``sigma_AB``.

    Identical conditional states (to ``decimals`` places) share one Monte
    Carlo estimate; distinct ones get independent streams.
    """
    w, idx, states, dropped = conditional_states(sigma_AB, part, basis, threshold)
    groups: dict[bytes, list[int]] = {}
    for i, s in enumerate(states):
        key = np.round(s, decimals).tobytes()
        groups.setdefault(key, []).append(i)
    moments, gweights, errs = [], [], []
    for g, members in enumerate(groups.values()):
        ref = scrooge_moment_mc(DensityOperator(states[members[0]]), k, n, seed=derive_seed(seed, g))
        moments.append(ref.moment.in_computational_frame())
        gw = float(w[members].sum())
        gweights.append(gw)
        errs.append(gw * ref.std_error)
    mom = MomentOperator.mixture(gweights, moments)
    dens = [DensityOperator(s) for s in states]
    return GeneralizedScroogeReference(w, idx, dens, mom, float(np.sqrt(np.sum(np.square(errs)))), len(groups), dropped, k)


# --------------------------------------------------------------------------
# bound evaluators


def _norms(p: dict) -> dict:
    p = dict(p)
    if "sigma" in p:
        sig = _as_density(p.pop("sigma"))
        lam = sig.eigenvalues
        p.setdefault("sigma_inf", float(lam.max()))
        p.setdefault("sigma_2", float(np.sqrt(np.sum(lam**2))))
        p.setdefault("sigma_4", float(np.sum(lam**4) ** 0.25))
        p.setdefault("D", sig.dim)
        p.setdefault("D_A", sig.dim)
    return p


def theorem_regime(name: str, **p) -> list[str]:
    """Hypotheses of ``name`` that the parameters violate (empty when all hold).

    Takes the same keywords as :func:`theorem_bound`; pure, so safe to call
    from worker threads.
    """
    p = _norms(p)
    k = int(p["k"])
    out = []
    if name == "T1":
        if k**2 * p["sigma_2"] >= 1:
            out.append(f"T1 assumes k^2 ||sigma_diag||_2 << 1; got {k**2 * p['sigma_2']:.3g}")
    elif name == "T2":
        if "D_B" in p and p["D_A"] > p["D_B"]:
            out.append("T2 assumes D_A <= D_B")
    elif name == "C1":
        if k**2 >= p["D_A"]:
            out.append(f"C1 assumes k^2 << D_A; got k^2 = {k**2}, D_A = {p['D_A']}")
    elif name == "T3":
        d_eff = (p["sigma_2"] / p["sigma_4"]) ** 4
        if k**4 >= d_eff:
            out.append(f"T3 assumes k^4 << D_A,eff; got k^4 = {k**4}, D_A,eff = {d_eff:.3g}")
        if p["D_A"] > p["D_B"]:
            out.append("T3 assumes D_A <= D_B")
    else:
        raise InputError(f"unknown theorem {name!r}")
    return out


def theorem_bound(name: str, warn: bool = True, **p) -> float:
    """Dominant expression of a theorem bound with O-constants set to 1.

    The output is a *scaling value*, not a certified bound.  Parameters:

    ``T1``: ``D, k, sigma_inf, sigma_2`` (norms of sigma_diag)
        ``(D ||s||_inf)^k k^2 / D + k ||s||_2``
    ``T2``: ``D_A, k, sigma_2, eps=0``, optional ``D_B``
        ``sqrt(D_A^k (eps + ||s||_2))``
    ``C1``: ``D_A, D_B, k, eps=0``
        ``sqrt(D_A^k / k! (1/D_B + eps))``
    ``T3``: ``D_A, D_B, k, sigma_2, sigma_4, eps=0``
        ``sqrt((D_A ||s||_2^2)^k (eps + k^2 ||s||_4^4/||s||_2^4) + D_{A,k} k^{2k+2} / D_B)``

    Norms may instead be derived from a ``sigma`` keyword.  With ``warn``
    a :class:`RegimeWarning` is issued for each violated hypothesis (see
    :func:`theorem_regime`).
    """
    p = _norms(p)
    if warn:
        for msg in theorem_regime(name, **p):
            warnings.warn(msg, RegimeWarning, stacklevel=2)
    k = int(p["k"])
    eps = float(p.get("eps", 0.0))
    if name == "T1":
        D, s_inf, s2 = p["D"], p["sigma_inf"], p["sigma_2"]
        return float((D * s_inf) ** k * k**2 / D + k * s2)
    if name == "T2":
        return float(math.sqrt(p["D_A"] ** k * (eps + p["sigma_2"])))
    if name == "C1":
        D_A, D_B = p["D_A"], p["D_B"]
        return float(math.sqrt(D_A**k / math.factorial(k) * (1.0 / D_B + eps)))
    if name == "T3":
        D_A, D_B, s2, s4 = p["D_A"], p["D_B"], p["sigma_2"], p["sigma_4"]
        d_eff = (s2 / s4) ** 4
        lead = (D_A * s2**2) ** k * (eps + k**2 / d_eff)
        tail = sym_dim(int(D_A), k) * k ** (2 * k + 2) / D_B
        return float(math.sqrt(lead + tail))
    raise InputError(f"unknown theorem {name!r}")


def relative_error_check(candidate: MomentOperator, reference: MomentOperator, eps: float) -> dict:
    """Experimental operator-ordering test ``(1-eps) R <= C <= (1+eps) R``.

    Checks only the smallest eigenvalues of the two differences.
    """
    c, r = candidate.aligned_with(reference)
    lo = np.linalg.eigvalsh(c - (1 - eps) * r).min()
    hi = np.linalg.eigvalsh((1 + eps) * r - c).min()
    return {"lower_ok": bool(lo >= -1e-12), "upper_ok": bool(hi >= -1e-12), "min_eig_lower": float(lo), "min_eig_upper": float(hi)}


def moment_bound_value(sigma, k: int) -> float:
    """Exact ``k! D_k E[<phi|sigma|phi>^k] = sum_pi prod_cycles Tr(sigma^len)``."""
    from .symmetric import _perm_array

    lam = _as_density(sigma).eigenvalues
    total = 0.0
    for perm in _perm_array(k):
        seen = [False] * k
        term = 1.0
        for s in range(k):
            if not seen[s]:
                length, j = 0, s
                while not seen[j]:
                    seen[j] = True
                    j = perm[j]
                    length += 1
                term *= float(np.sum(lam**length))
        total += term
    return total


def moment_bound_brackets(sigma_2: float, k: int) -> tuple[float, float]:
    """Lower/upper brackets for ``k! D_k E[<phi|sigma|phi>^k]``.

    ``1 + C(k,2) s^2 <= . <= 1 + C(k,2) s^2 / (1 - C(k,2) s)`` with ``s = ||sigma||_2``.
    The closed upper form requires ``C(k,2) s < 1``; otherwise the finite
    sum ``1 + s sum_{l=1}^{k-1} (C(k,2) s)^l`` it is derived from is returned.
    """
    c = math.comb(k, 2)
    lower = 1 + c * sigma_2**2
    if c * sigma_2 < 1:
        upper = 1 + c * sigma_2**2 / (1 - c * sigma_2)
    else:
        upper = 1 + sigma_2 * sum((c * sigma_2) ** l for l in range(1, k))
    return lower, upper
