"""Projected ensembles: measure ``B`` of a bipartite pure state, keep ``A``.

Outcome ``z`` occurs with ``p_z = ||(I (x) <z|U_B)|Psi>||^2`` and leaves
``|psi_z> = (I (x) <z|U_B)|Psi> / sqrt(p_z)`` on ``A``.  With the state
written as the ``D_A x D_B`` matrix ``M`` (``Psi = vec(M)``), the
unnormalized post-measurement vectors are the columns of ``M U_B^T``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .circuits import Circuit, Gate, apply_gate, basis_rotation
from .ensembles import WeightedEnsemble, encode_complex
from .exceptions import InputError, ShapeError
from .numeric import Bipartition, haar_isometry, hs_distance, state_matrix, trace_distance
from .symmetric import MomentOperator, _check_replica_cap, sym_dim, sym_power, symmetric_basis

LOW_WEIGHT_THRESHOLD = 1e-14


@dataclass(frozen=True, eq=False)
class ProjectedEnsemble:
    """Weights and normalized conditional states on ``A``, one row per kept outcome."""

    weights: np.ndarray
    states: np.ndarray
    outcomes: np.ndarray
    part: Bipartition
    basis: str = "computational"
    dropped_weight: float = 0.0
    source: str = ""
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.weights.size

    @property
    def D_A(self) -> int:
        return self.states.shape[1]

    def first_moment(self) -> np.ndarray:
        return (self.states.T * self.weights) @ self.states.conj()

    def moment(self, k: int) -> MomentOperator:
        return projected_moment(self, k)

    def n_distinct(self, decimals: int = 8) -> int:
        """Number of distinct states up to global phase."""
        keys = set()
        for s in self.states:
            i = int(np.argmax(np.abs(s) > 1e-9))
            v = s * (abs(s[i]) / s[i])
            keys.add((np.round(v, decimals) + 0.0).tobytes())
        return len(keys)

    def to_weighted_ensemble(self) -> WeightedEnsemble:
        return WeightedEnsemble(self.weights.copy(), self.states.copy(), self.dropped_weight, {"basis": self.basis})

    def to_json(self) -> str:
        return json.dumps(
            {
                "type": "ProjectedEnsemble",
                "qubits_A": list(self.part.qubits_A),
                "qubits_B": list(self.part.qubits_B),
                "basis": self.basis,
                "source": self.source,
                "dropped_weight": self.dropped_weight,
                "outcomes": self.outcomes.tolist(),
                "weights": self.weights.tolist(),
                "states": encode_complex(self.states),
            }
        )


def _b_local(circ: Circuit, part: Bipartition) -> list:
    """Gates of ``circ`` re-indexed onto the axes of the ``(D_A, 2, ..., 2)`` tensor."""
    if circ.num_qubits == part.N_B:
        wire = {j: 1 + j for j in range(part.N_B)}
    elif circ.num_qubits == part.N:
        bad = circ.qubits_touched() - set(part.qubits_B)
        if bad:
            raise InputError(f"basis circuit touches qubits {sorted(bad)} outside B")
        wire = {q: 1 + j for j, q in enumerate(part.qubits_B)}
    else:
        raise ShapeError(f"basis circuit on {circ.num_qubits} qubits fits neither B ({part.N_B}) nor AB ({part.N})")
    return [Gate(g.name, tuple(wire[t] for t in g.targets), g.params, g.matrix) for g in circ.gates]


def rotated_columns(Psi, part: Bipartition, basis=None, rng: np.random.Generator | None = None) -> tuple[np.ndarray, str]:
    """Unnormalized post-measurement vectors as the columns of a ``D_A x D_B`` matrix.

    ``basis`` is ``None``/"identity", a :class:`Circuit` on ``B`` (either
    ``N_B`` wires or the full register restricted to ``B``), a dense
    ``D_B``-square unitary, or a kind name from
    :data:`scroogelab.circuits.BASIS_KINDS` (random kinds need ``rng``).
    For ``"haar"`` an exact Haar isometry acts on the Schmidt vectors,
    which has the same distribution as a full Haar ``U_B``.
    """
    M = state_matrix(Psi, part)
    if basis is None or (isinstance(basis, str) and basis in ("identity", "computational")):
        return M, "computational"
    if isinstance(basis, str):
        if basis == "haar":
            if rng is None:
                raise InputError("basis 'haar' needs an rng")
            a, s, bh = np.linalg.svd(M, full_matrices=False)
            V = haar_isometry(part.D_B, s.size, rng)
            return (a * s) @ V.T, "haar"
        label = basis
        basis = basis_rotation(basis, part.N_B, rng)
        if basis is None:
            return M, label
    else:
        label = "circuit" if isinstance(basis, Circuit) else "unitary"
    if isinstance(basis, Circuit):
        t = M.reshape((part.D_A,) + (2,) * part.N_B)
        for g in _b_local(basis, part):
            t = apply_gate(t, g)
        return t.reshape(part.D_A, part.D_B), label
    U = np.asarray(basis)
    if U.shape != (part.D_B, part.D_B):
        raise ShapeError(f"basis unitary of shape {U.shape} does not act on B (D_B={part.D_B})")
    return M @ U.T, label


def projected_ensemble(
    Psi,
    part: Bipartition,
    basis=None,
    rng: np.random.Generator | None = None,
    threshold: float = LOW_WEIGHT_THRESHOLD,
    source: str = "",
) -> ProjectedEnsemble:
    """Enumerate all ``D_B`` outcomes of measuring ``B`` (see :func:`rotated_columns`).

    Outcomes with ``p_z <= threshold`` are dropped; their total weight is
    recorded in ``dropped_weight`` and the kept weights are left as is, so
    ``sum(weights) + dropped_weight = 1``.
    """
    psi = np.asarray(Psi, dtype=complex).reshape(-1)
    nrm = np.linalg.norm(psi)
    if abs(nrm - 1) > 1e-9:
        raise InputError(f"generator state must be normalized (norm {nrm:.12g})")
    cols, label = rotated_columns(psi, part, basis, rng)
    p = np.sum(np.abs(cols) ** 2, axis=0)
    keep = p > threshold
    idx = np.flatnonzero(keep)
    states = (cols[:, idx] / np.sqrt(p[idx])).T
    return ProjectedEnsemble(p[idx], states, idx, part, label, float(p[~keep].sum()), source)


def projected_moment(pe: ProjectedEnsemble, k: int) -> MomentOperator:
    """``sum_z p_z (|psi_z><psi_z|)^{(x)k}`` in the occupation basis of ``Sym^k(C^{D_A})``."""
    _check_replica_cap(pe.D_A, k)
    return MomentOperator.from_states(pe.states, k, pe.weights)


def sampled_projected_moment(
    Psi,
    part: Bipartition,
    basis=None,
    k: int = 2,
    n_shots: int = 1000,
    rng: np.random.Generator | None = None,
) -> tuple[MomentOperator, float]:
    """Shot-based estimate: draw ``z ~ p_z`` and average ``(|psi_z><psi_z|)^{(x)k}``.

    Returns the estimate and its Frobenius standard error.  Each shot
    contributes an operator of unit Frobenius norm, so the sample variance
    is ``1 - ||mean||_F^2`` (scaled by ``n/(n-1)``).
    """
    if n_shots < 1:
        raise InputError("need at least one shot")
    if rng is None:
        raise InputError("sampled_projected_moment needs an rng")
    pe = projected_ensemble(Psi, part, basis, rng)
    p = pe.weights / pe.weights.sum()
    counts = rng.multinomial(n_shots, p)
    hit = counts > 0
    mom = MomentOperator.from_states(pe.states[hit], k, counts[hit] / n_shots)
    if n_shots < 2:
        return mom, float("inf")
    f2 = float(np.sum(np.abs(mom.matrix) ** 2))
    # 1 - f2 is round-off when a single state is hit
    var = (1.0 - f2 if 1.0 - f2 > 1e-12 else 0.0) * n_shots / (n_shots - 1)
    return mom, float(np.sqrt(var / n_shots))


def delta_k(pe, reference, k: int | None = None, metric: str = "trace") -> float:
    """Moment distance ``1/2 ||rho_E^(k) - reference||`` (trace or Hilbert-Schmidt).

    ``pe`` may be a :class:`ProjectedEnsemble` (its ``k``-th moment is
    formed) or a :class:`MomentOperator`.
    """
    if isinstance(pe, ProjectedEnsemble):
        if k is None:
            k = reference.k if isinstance(reference, MomentOperator) else 2
        mom = projected_moment(pe, k)
    else:
        mom = pe
    if metric == "trace":
        return trace_distance(mom, reference)
    if metric == "hs":
        return hs_distance(mom, reference)
    raise InputError(f"unknown metric {metric!r}")


# --------------------------------------------------------------------------
# unnormalized projected moments


def unnormalized_projected_moment(cols: np.ndarray, k: int, outcome: int | None = None) -> np.ndarray:
    """``(|psi~_z><psi~_z|)^{(x)k}`` (occupation basis) for one outcome or averaged over all."""
    D_A = cols.shape[0]
    basis = symmetric_basis(D_A, k)
    vecs = cols.T if outcome is None else cols[:, [outcome]].T
    c = basis.coords(vecs)
    return (c.T @ c.conj()) / vecs.shape[0]


def unnormalized_moment_oracle(sigma_A: np.ndarray, D_B: int, k: int) -> MomentOperator:
    """``(D_{A,k}/D_{B,k}) sigma_A^{(x)k} rho_Haar,A^(k)``: the Haar-``U_B`` average per outcome."""
    sigma_A = np.asarray(sigma_A)
    D_A = sigma_A.shape[0]
    return MomentOperator(D_A, k, sym_power(sigma_A, k) / sym_dim(D_B, k))
