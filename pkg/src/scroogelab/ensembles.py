"""Ensembles, random-state samplers, moment estimation, and entropic measures."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import mpmath
import numpy as np

from .exceptions import InputError, ShapeError
from .numeric import DensityOperator, StateVector, schatten_norm
from .symmetric import MomentOperator, _check_replica_cap, symmetric_basis

WEIGHT_TOL = 1e-9
DEGENERACY_TOL = 1e-7
_BATCH_ENTRIES = 1 << 21


# --------------------------------------------------------------------------
# random number streams


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``(seed, *stream)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit child seed for the given key path."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return make_rng(0 if rng is None else int(rng))


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard complex Gaussian entries with ``E|z|^2 = 1``."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)


def _normalize_rows(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def haar_states(D: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` Haar-random unit vectors as rows."""
    return _normalize_rows(complex_gaussian(rng, (n, D)))


def sample_haar_state(D: int, rng) -> StateVector:
    """Single Haar-random state (normalized complex Gaussian vector)."""
    return StateVector(haar_states(D, 1, _as_rng(rng))[0])


# --------------------------------------------------------------------------
# samplers


class StateSampler:
    """Seeded source of random pure states of dimension ``D``.

    Subclasses implement :meth:`draw`, which must depend only on the
    generator passed in, so that ``(seed, stream)`` fixes the sample stream.
    """

    kind = "abstract"

    def __init__(self, D: int, seed: int = 0):
        self.D = int(D)
        self.seed = int(seed)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def rng(self, stream: int = 0) -> np.random.Generator:
        return make_rng(self.seed, stream)

    def sample(self, n: int, stream: int = 0) -> np.ndarray:
        return self.draw(self.rng(stream), n)

    def batches(self, n: int, batch: int, stream: int = 0) -> Iterator[np.ndarray]:
        rng = self.rng(stream)
        done = 0
        while done < n:
            m = min(batch, n - done)
            yield self.draw(rng, m)
            done += m

    def describe(self) -> dict:
        return {"kind": self.kind, "D": self.D, "seed": self.seed}


class HaarSampler(StateSampler):
    kind = "haar"

    def draw(self, rng, n):
        return haar_states(self.D, n, rng)


class UniformPhaseSampler(StateSampler):
    """States ``D^{-1/2} sum_j e^{i phi_j} |j>`` with iid uniform phases."""

    kind = "uniform_phase"

    def draw(self, rng, n):
        phases = rng.uniform(0.0, 2 * np.pi, size=(n, self.D))
        return np.exp(1j * phases) / np.sqrt(self.D)


class RandomPhaseSampler(StateSampler):
    """States ``sum_j sqrt(p_j) e^{i phi_j} |e_j>`` for a fixed basis ``{e_j}``."""

    kind = "random_phase"

    def __init__(self, weights, basis: np.ndarray | None = None, seed: int = 0):
        p = np.asarray(weights, dtype=float)
        if np.any(p < -WEIGHT_TOL) or abs(p.sum() - 1) > WEIGHT_TOL:
            raise InputError("random-phase weights must be a probability vector")
        super().__init__(p.size, seed)
        self.amplitudes = np.sqrt(np.clip(p, 0, None))
        self.basis = None if basis is None else np.asarray(basis, dtype=complex)

    def draw(self, rng, n):
        phases = rng.uniform(0.0, 2 * np.pi, size=(n, self.D))
        coeffs = self.amplitudes * np.exp(1j * phases)
        return coeffs if self.basis is None else coeffs @ self.basis.T


class FilteredGaussianSampler(StateSampler):
    """States ``M xi / ||M xi||`` with ``xi`` complex Gaussian (e.g. cTPQ)."""

    kind = "filtered_gaussian"

    def __init__(self, matrix: np.ndarray, seed: int = 0, label: str = "filtered_gaussian"):
        m = np.asarray(matrix, dtype=complex)
        super().__init__(m.shape[0], seed)
        self.matrix = m
        self.kind = label

    def draw(self, rng, n):
        return _normalize_rows(complex_gaussian(rng, (n, self.D)) @ self.matrix.T)


class EnsembleSampler(StateSampler):
    """Draws entries of a finite :class:`WeightedEnsemble` by weight."""

    kind = "ensemble"

    def __init__(self, ensemble: "WeightedEnsemble", seed: int = 0):
        super().__init__(ensemble.dim, seed)
        self.ensemble = ensemble

    def draw(self, rng, n):
        idx = rng.choice(len(self.ensemble.weights), size=n, p=self.ensemble.weights)
        return self.ensemble.states[idx]


# --------------------------------------------------------------------------
# weighted ensembles


@dataclass(frozen=True, eq=False)
class WeightedEnsemble:
    """Finite ensemble ``{p_i, |psi_i>}`` with states stored as rows."""

    weights: np.ndarray
    states: np.ndarray
    dropped_weight: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        s = np.atleast_2d(np.asarray(self.states, dtype=complex))
        if s.shape[0] != w.size:
            raise ShapeError(f"{w.size} weights for {s.shape[0]} states")
        if np.any(w < 0):
            raise InputError("ensemble weights must be nonnegative")
        if abs(w.sum() + self.dropped_weight - 1.0) > WEIGHT_TOL:
            raise InputError(f"weights sum to {w.sum() + self.dropped_weight:.12g}, not 1")
        norms = np.linalg.norm(s, axis=1)
        if np.any(np.abs(norms - 1) > 1e-9):
            raise InputError("ensemble states must be normalized")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "states", s)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, object]], normalize_weights: bool = True) -> "WeightedEnsemble":
        w = np.array([p for p, _ in pairs], dtype=float)
        s = np.array([np.asarray(v, dtype=complex).reshape(-1) for _, v in pairs])
        s = _normalize_rows(s)
        if normalize_weights:
            w = w / w.sum()
        return cls(w, s)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return self.weights.size

    def average_state(self) -> np.ndarray:
        return (self.states.T * self.weights) @ self.states.conj() / self.total_weight

    def to_json(self) -> str:
        return json.dumps(
            {
                "type": "WeightedEnsemble",
                "dim": self.dim,
                "weights": self.weights.tolist(),
                "dropped_weight": self.dropped_weight,
                "states": encode_complex(self.states),
                "metadata": self.metadata,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "WeightedEnsemble":
        d = json.loads(text)
        if d.get("type") != "WeightedEnsemble":
            raise InputError("not a serialized WeightedEnsemble")
        return cls(np.array(d["weights"]), decode_complex(d["states"]), d["dropped_weight"], d.get("metadata", {}))


def encode_complex(a: np.ndarray) -> list:
    """Row-major nested lists of ``[re, im]`` pairs."""
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def decode_complex(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def moment_to_json(m: MomentOperator) -> str:
    """Serialize a moment operator (occupation-basis matrix, computational frame)."""
    comp = m.in_computational_frame()
    return json.dumps(
        {
            "type": "MomentOperator",
            "D": m.D,
            "k": m.k,
            "basis": "symmetric-occupation-lexicographic",
            "matrix": encode_complex(comp.matrix),
        }
    )


def moment_from_json(text: str) -> MomentOperator:
    d = json.loads(text)
    if d.get("type") != "MomentOperator":
        raise InputError("not a serialized MomentOperator")
    return MomentOperator(int(d["D"]), int(d["k"]), decode_complex(d["matrix"]))


# --------------------------------------------------------------------------
# moments


def moment_operator(ens: WeightedEnsemble, k: int) -> MomentOperator:
    """Exact ``sum_i p_i (|psi_i><psi_i|)^{(x)k}``."""
    _check_replica_cap(ens.dim, k)
    w = ens.weights / ens.total_weight
    return MomentOperator.from_states(ens.states, k, w)


def phase_averaged_moment(populations, k: int, frame: np.ndarray | None = None) -> MomentOperator:
    """Exact k-th moment of ``sum_j sqrt(p_j) e^{i phi_j} |j>`` with iid uniform phases.

    Off-diagonal occupation terms average to zero, leaving
    ``(k!/prod m!) prod_j p_j^{m_j}``.  ``frame`` holds the states ``|j>`` as
    columns (computational basis if omitted).
    """
    p = np.asarray(populations, dtype=float).ravel()
    D = p.size
    _check_replica_cap(D, k)
    basis = symmetric_basis(D, k)
    diag = basis.coefficients**2 * basis.monomials(p[None, :])[0]
    return MomentOperator(D, k, diag, frame=frame)


def uniform_phase_moment(D: int, k: int) -> MomentOperator:
    """k-th moment of uniform-amplitude random-phase states on ``D`` levels."""
    return phase_averaged_moment(np.full(D, 1.0 / D), k)


class MomentAccumulator:
    """Running estimate of ``E[w (|psi><psi|)^{(x)k}]`` with Frobenius error bars."""

    def __init__(self, D: int, k: int):
        _check_replica_cap(D, k)
        self.D, self.k = int(D), int(k)
        self.basis = symmetric_basis(D, k)
        self.total = np.zeros((self.basis.dim, self.basis.dim), dtype=complex)
        self.sum_sq = 0.0
        self.count = 0

    def add(self, states: np.ndarray, weights: np.ndarray | None = None) -> None:
        c = self.basis.coords(np.atleast_2d(states))
        n2 = np.sum(np.abs(c) ** 2, axis=1)
        if weights is None:
            self.total += c.T @ c.conj()
            self.sum_sq += float(np.sum(n2**2))
        else:
            w = np.asarray(weights, dtype=float)
            self.total += (c.T * w) @ c.conj()
            self.sum_sq += float(np.sum((w * n2) ** 2))
        self.count += c.shape[0]

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if (other.D, other.k) != (self.D, self.k):
            raise ShapeError("cannot merge accumulators of different (D, k)")
        self.total += other.total
        self.sum_sq += other.sum_sq
        self.count += other.count
        return self

    def mean(self) -> MomentOperator:
        if self.count == 0:
            raise InputError("no samples accumulated")
        m = self.total / self.count
        return MomentOperator(self.D, self.k, 0.5 * (m + m.conj().T))

    def std_error(self) -> float:
        if self.count < 2:
            return float("inf")
        mean_sq = float(np.sum(np.abs(self.total / self.count) ** 2))
        var = max(self.sum_sq / self.count - mean_sq, 0.0) * self.count / (self.count - 1)
        return math.sqrt(var / self.count)

    def finalize(self) -> tuple[MomentOperator, float]:
        return self.mean(), self.std_error()


def _batch_size(D_k: int, D: int) -> int:
    return max(16, _BATCH_ENTRIES // max(D_k, D))


def estimate_moment(sampler: StateSampler, k: int, n_samples: int, stream: int = 0) -> tuple[MomentOperator, float]:
    """Monte Carlo mean of ``(|psi><psi|)^{(x)k}`` and its Frobenius standard error."""
    if n_samples < 2:
        raise InputError("estimate_moment needs n_samples >= 2")
    acc = MomentAccumulator(sampler.D, k)
    for batch in sampler.batches(n_samples, _batch_size(acc.basis.dim, sampler.D), stream):
        acc.add(batch)
    return acc.finalize()


# --------------------------------------------------------------------------
# entropic quantities


def _spectrum(sigma) -> np.ndarray:
    if isinstance(sigma, DensityOperator):
        return sigma.eigenvalues
    arr = np.asarray(sigma)
    if arr.ndim == 1:
        return np.clip(arr.astype(float), 0, None)
    return DensityOperator(arr).eigenvalues


def von_neumann_entropy(sigma) -> float:
    """``-sum_j lambda_j ln lambda_j`` in nats (``0 ln 0 = 0``)."""
    lam = _spectrum(sigma)
    lam = lam[lam > 0]
    return float(-np.sum(lam * np.log(lam)))


def _clusters(lam: np.ndarray, tol: float) -> list[tuple[float, int]]:
    lam = np.sort(lam)[::-1]
    out: list[list[float]] = []
    for x in lam:
        if out and abs(out[-1][-1] - x) <= tol:
            out[-1].append(x)
        else:
            out.append([x])
    return [(float(np.mean(c)), len(c)) for c in out]


def _confluent_divided_difference(nodes: list[tuple[float, int]], deriv) -> mpmath.mpf:
    """Divided difference ``f[x_1, ..., x_n]`` over nodes with multiplicities."""
    xs = []
    for x, mult in nodes:
        xs.extend([mpmath.mpf(x)] * mult)
    n = len(xs)
    table = [deriv(0, x) for x in xs]
    for order in range(1, n):
        new = []
        for i in range(n - order):
            a, b = xs[i], xs[i + order]
            if a == b:
                new.append(deriv(order, a) / mpmath.factorial(order))
            else:
                new.append((table[i + 1] - table[i]) / (b - a))
        table = new
    return table[0]


def subentropy(sigma, convention: str = "jozsa", tol: float = DEGENERACY_TOL) -> float:
    """Subentropy ``Q(sigma)`` in nats.

    ``convention="jozsa"`` (default) evaluates
    ``Q = -sum_j [prod_{k != j} lambda_j / (lambda_j - lambda_k)] lambda_j ln lambda_j``,
    the lower bound on accessible information attained by Scrooge(sigma).  It
    is the divided difference ``-f[lambda_1..lambda_n]`` of ``f = x^n ln x``;
    eigenvalues closer than ``tol`` are merged and their confluent limit is
    taken exactly (extended precision), so degenerate spectra such as ``I/D``
    are handled without splitting.  Zero eigenvalues do not contribute.

    ``convention="reciprocal"`` evaluates the variant with the product
    ``prod_{k != j} lambda_k / (lambda_k - lambda_j)``, splitting eigenvalues
    closer than ``tol`` symmetrically by ``+-1e-6`` about their mean.
    """
    lam = _spectrum(sigma)
    lam = lam[lam > 1e-15]
    if lam.size <= 1:
        return 0.0
    if convention == "reciprocal":
        return _subentropy_reciprocal(lam, tol)
    if convention != "jozsa":
        raise InputError(f"unknown subentropy convention {convention!r}")
    nodes = _clusters(lam, tol)
    n = lam.size
    harmonic = [mpmath.mpf(0)]
    for j in range(1, n + 1):
        harmonic.append(harmonic[-1] + mpmath.mpf(1) / j)

    def deriv(m, x):
        # d^m/dx^m x^n ln x = n!/(n-m)! x^(n-m) (ln x + H_n - H_{n-m})
        return mpmath.factorial(n) / mpmath.factorial(n - m) * x ** (n - m) * (mpmath.log(x) + harmonic[n] - harmonic[n - m])

    with mpmath.workdps(60):
        q = -_confluent_divided_difference(nodes, deriv)
    return float(q)


def _subentropy_reciprocal(lam: np.ndarray, tol: float) -> float:
    # each cluster of near-equal eigenvalues is spread symmetrically about its mean
    split = []
    for mean, m in _clusters(lam, tol):
        split.extend(mean + 1e-6 * (2 * np.arange(m) - (m - 1)))
    lam = np.array(split)
    q = 0.0
    for j, lj in enumerate(lam):
        others = np.delete(lam, j)
        q -= lj * math.log(lj) * float(np.prod(others / (others - lj)))
    return q


def effective_dimension(sigma) -> float:
    """``(||sigma||_2 / ||sigma||_4)^4``."""
    lam = _spectrum(sigma)
    return float(schatten_norm(lam, 2) ** 4 / schatten_norm(lam, 4) ** 4)
