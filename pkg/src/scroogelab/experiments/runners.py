"""Experiment runners: build tasks from a config, execute them, collect rows.

Every task owns a Philox stream seeded by ``derive_seed`` from the base
seed and the task's key, so the table is identical for any thread count.
Rows are merged in task order, never in completion order.
"""

from __future__ import annotations

import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..circuits import bell_ladder_state, doped_clifford_circuit, entangled_pair_state, ry_layer, apply_circuit
from ..clifford import random_clifford_unitary, random_stabilizer_state
from ..ensembles import derive_seed, haar_states, make_rng, uniform_phase_moment
from ..exceptions import ConfigError, NumericalError, ScroogeLabError
from ..hamiltonians import (
    ctpq_sample,
    diagonal_ensemble,
    energy_amplitudes,
    full_spectrum,
    ground_state,
    hamiltonian_from_config,
    random_phase_moment,
    temporal_states_random,
    thermal_state,
)
from ..numeric import Bipartition, DensityOperator, hs_distance, reduced_state, trace_distance
from ..projected import projected_ensemble, sampled_projected_moment
from ..scrooge import generalized_scrooge_reference, scrooge_moment_mc, theorem_bound, theorem_regime
from ..symmetric import haar_moment
from .config import ExperimentConfig
from .results import PARAM_ORDER, ResultTable

log = logging.getLogger(__name__)

BASIS_CODES = {"identity": 0, "local_haar": 1, "clifford": 2, "haar": 3, "t_basis": 4}


# --------------------------------------------------------------------------
# reference and ground-state caches


class ReferenceCache:
    """Scrooge references keyed by ``(sigma bytes, k, n, seed)``.

    The key uses the exact matrix bytes, so a cached value is always the
    one a fresh computation would give; thread order cannot leak in.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._store: dict = {}
        self.hits = 0
        self.misses = 0

    def scrooge(self, sigma: np.ndarray, k: int, n: int, seed: int):
        sigma = np.ascontiguousarray(np.asarray(sigma, dtype=complex))
        key = ("scrooge", sigma.tobytes(), sigma.shape, k, n, seed)
        with self._lock:
            if key in self._store:
                self.hits += 1
                return self._store[key]
        ref = scrooge_moment_mc(DensityOperator(sigma), k, n, seed=seed)
        with self._lock:
            self.misses += 1
            return self._store.setdefault(key, ref)

    def get(self, key, build: Callable):
        with self._lock:
            if key in self._store:
                self.hits += 1
                return self._store[key]
        val = build()
        with self._lock:
            self.misses += 1
            return self._store.setdefault(key, val)


@dataclass
class Task:
    """One unit of work: several grid points sharing an instance and a seed."""

    order: tuple
    points: list
    instance: int
    seed: int
    fn: Callable


@dataclass
class RunContext:
    cfg: ExperimentConfig
    cache: ReferenceCache = field(default_factory=ReferenceCache)
    errors: list = field(default_factory=list)


CHECK_COLUMNS = {
    "T1": ("N", "h"),
    "T2": ("N_A", "N_B", "h", "beta"),
    "C1": ("N_A", "N_B"),
    "T3": ("N_A", "N_B", "chi"),
    "P1": ("N_A", "N_B", "h"),
    "stabilizer_basis": ("N_A", "N_B", "basis"),
}


def _param_columns(cfg: ExperimentConfig, points: list[dict]) -> tuple:
    keys = list(cfg.grid_axes())
    if cfg.kind == "theorem_check":
        keys = ["check"] + [k for k in keys if k in CHECK_COLUMNS[cfg.check]]
    if cfg.kind == "doped_clifford":
        keys += ["cnot_pattern", "region"]
    if cfg.kind == "commuting" and cfg.get("shots"):
        keys.append("shots")
    keys = [k for k in keys if k != "k"]
    order = {name: i for i, name in enumerate(PARAM_ORDER)}
    return tuple(sorted(dict.fromkeys(keys), key=lambda c: (order.get(c, len(order)), c)))


def _distances(mom, ref) -> dict:
    return {"delta_trace": trace_distance(mom, ref), "delta_hs": hs_distance(mom, ref)}



# --------------------------------------------------------------------------
# commuting circuits


def commuting_instance(point: dict, seed: int, ctx: RunContext | None = None) -> dict:
    """Bell ladder, global random diagonal unitary, ``R_y(theta)`` on ``B``."""
    N_A, k, theta = int(point["N_A"]), int(point.get("k", 2)), float(point["theta"])
    ref = haar_moment(2**N_A, k)
    if isinstance(point["N_B"], float) and math.isinf(point["N_B"]):
        return _distances(uniform_phase_moment(2**N_A, k), ref)
    N_B = int(point["N_B"])
    N = N_A + N_B
    rng = make_rng(seed)
    psi = bell_ladder_state(N_A, N).amplitudes * np.exp(1j * rng.uniform(0.0, 2 * np.pi, 2**N))
    part = Bipartition.contiguous(N_A, N)
    basis = None if theta == 0 else ry_layer(theta, range(N_B), N_B)
    shots = int(point.get("shots", 0) or 0)
    if shots:
        mom, se = sampled_projected_moment(psi, part, basis, k, shots, rng)
        out = _distances(mom, ref)
        out["shot_std_err"] = se
        return out
    return _distances(projected_ensemble(psi, part, basis).moment(k), ref)


def _commuting_tasks(cfg: ExperimentConfig, ctx: RunContext) -> list[Task]:
    pts = cfg.grid_points()
    if cfg.get("include_infinite"):
        extra = {}
        for p in pts:
            if float(p["theta"]) == 0:
                q = dict(p, N_B=math.inf)
                extra[(q["N_A"], q.get("k", 2))] = q
        pts = pts + list(extra.values())
    tasks = []
    for g, p in enumerate(pts):
        n_inst = 1 if isinstance(p["N_B"], float) else cfg.instances
        for i in range(n_inst):
            tasks.append(Task((g, i), [p], i, derive_seed(cfg.base_seed, g, i), commuting_instance))
    return tasks


# --------------------------------------------------------------------------
# doped Clifford circuits


def doped_clifford_instance(point: dict, seed: int, ctx: RunContext | None = None) -> dict:
    """Entangled-pair state, doped Clifford on ``B`` (or ``AB``), computational measurement."""
    ctx = ctx or RunContext(None)
    N, N_A, k = int(point["N"]), int(point["N_A"]), int(point.get("k", 2))
    N_B = N - N_A
    chi = float(point["chi"])
    pattern = point.get("cnot_pattern", "staircase")
    region = point.get("region", "B")
    n_mc, mc_seed = int(point.get("mc_samples", 100_000)), int(point.get("mc_seed", 0))
    rng = make_rng(seed)
    psi0 = entangled_pair_state(chi, N_A, N_B).amplitudes
    part = Bipartition.contiguous(N_A, N)
    if region == "B":
        circ = doped_clifford_circuit(N_B, int(point["depth"]), int(point["N_T"]), rng, pattern, qubits=range(N_A, N), num_qubits=N)
        pe = projected_ensemble(psi0, part, circ)
        sigma_A = reduced_state(psi0, part)
    elif region == "AB":
        circ = doped_clifford_circuit(N, int(point["depth"]), int(point["N_T"]), rng, pattern)
        psi = apply_circuit(circ, psi0).amplitudes
        pe = projected_ensemble(psi, part)
        sigma_A = reduced_state(psi, part)
    else:
        raise ConfigError(f"unknown region {region!r}")
    ref = ctx.cache.scrooge(sigma_A, k, n_mc, mc_seed)
    out = _distances(pe.moment(k), ref.moment)
    out["ref_std_err"] = ref.std_error
    return out


def _doped_tasks(cfg: ExperimentConfig, ctx: RunContext) -> list[Task]:
    tasks = []
    for g, p in enumerate(cfg.grid_points()):
        if int(p["N_T"]) > int(p["depth"]) * (int(p["N"]) - int(p["N_A"]) if p.get("region", "B") == "B" else int(p["N"])):
            ctx.errors.append({"point": p, "error": "N_T exceeds available T slots"})
            continue
        for i in range(cfg.instances):
            tasks.append(Task((g, i), [p], i, derive_seed(cfg.base_seed, g, i), doped_clifford_instance))
    return tasks


# --------------------------------------------------------------------------
# ground states


def _ground(ctx: RunContext, model: str, N: int, h: float, periodic: bool):
    sector = "z2_even" if model in ("ising", "tfim") else None

    def build():
        H = hamiltonian_from_config(model, N, h, periodic)
        return ground_state(H, sector=sector)[1].amplitudes

    return ctx.cache.get(("ground", model, N, float(h), bool(periodic)), build)


def ground_state_sweep(points: list[dict], seed: int, ctx: RunContext | None = None) -> list[dict]:
    """All ``h`` values of one ``(model, N_A, N_B, basis, k)`` line for one instance.

    The basis rotation is drawn once from ``seed`` and reused along the
    sweep, so curves in ``h`` are correlated within an instance.
    """
    ctx = ctx or RunContext(None)
    p0 = points[0]
    model, N_A, N_B, basis, k = p0["model"], int(p0["N_A"]), int(p0["N_B"]), p0["basis"], int(p0.get("k", 2))
    N = N_A + N_B
    part = Bipartition.contiguous(N_A, N)
    n_mc, mc_seed = int(p0.get("mc_samples", 100_000)), int(p0.get("mc_seed", 0))
    rng = make_rng(seed)
    if basis == "clifford":
        U = random_clifford_unitary(N_B, rng)
    elif basis == "haar":
        U = None
    else:
        from ..circuits import basis_rotation

        U = basis_rotation(basis, N_B, rng)
    outs = []
    for p in points:
        psi = _ground(ctx, model, N, float(p["h"]), bool(p.get("periodic", True)))
        if basis == "haar":
            pe = projected_ensemble(psi, part, "haar", make_rng(seed, 1))
        else:
            pe = projected_ensemble(psi, part, U)
        ref = ctx.cache.scrooge(reduced_state(psi, part), k, n_mc, mc_seed)
        outs.append(_distances(pe.moment(k), ref.moment))
    return outs


def _ground_tasks(cfg: ExperimentConfig, ctx: RunContext) -> list[Task]:
    lines: dict = {}
    for p in cfg.grid_points():
        key = (p["model"], p["N_A"], p["N_B"], p["basis"], p.get("k", 2))
        lines.setdefault(key, []).append(p)
    tasks = []
    for li, (key, pts) in enumerate(lines.items()):
        model, N_A, N_B, basis, k = key
        if N_A + N_B > 20:
            ctx.errors.append({"point": pts[0], "error": "N above 20-qubit cap"})
            continue
        if basis == "clifford" and N_B > 12:
            ctx.errors.append({"point": pts[0], "error": "dense Clifford limited to N_B <= 12"})
            continue
        pts = sorted(pts, key=lambda q: float(q["h"]))
        for i in range(cfg.instances):
            seed = derive_seed(cfg.base_seed, N_A, N_B, BASIS_CODES[basis], i)
            tasks.append(Task((li, i), pts, i, seed, ground_state_sweep))
    return tasks


# --------------------------------------------------------------------------
# theorem checks


def _tfim_for(point: dict, N: int):
    return hamiltonian_from_config(point.get("model", "tfim"), N, float(point.get("h", 0.8)), bool(point.get("periodic", False)), longitudinal=float(point.get("longitudinal", 1.0)))


def _zero_state(N: int) -> np.ndarray:
    v = np.zeros(2**N, dtype=complex)
    v[0] = 1.0
    return v


def theorem_instance(point: dict, seed: int, ctx: RunContext | None = None) -> dict:
    """Measured distance next to the matching ``theorem_bound`` scaling value."""
    ctx = ctx or RunContext(None)
    chk = point["check"]
    k = int(point.get("k", 2))
    n_mc, mc_seed = int(point.get("mc_samples", 100_000)), int(point.get("mc_seed", 0))
    rng = make_rng(seed)
    out = _theorem_dispatch(chk, point, k, n_mc, mc_seed, rng, ctx)
    # warnings.catch_warnings is process-global, so the regime flag is computed directly
    bound_args = out.pop("_bound", None)
    if bound_args is not None:
        name, kw = bound_args
        out["bound"] = theorem_bound(name, warn=False, **kw)
        out["regime_ok"] = float(not theorem_regime(name, **kw))
    else:
        out["regime_ok"] = 1.0
    return out


def _theorem_dispatch(chk, point, k, n_mc, mc_seed, rng, ctx) -> dict:
    if chk == "T1":
        N = int(point["N"])
        H = _tfim_for(point, N)
        psi0 = _zero_state(N)
        mom = random_phase_moment(H, psi0, k)
        sig = diagonal_ensemble(H, psi0)
        ref = scrooge_moment_mc(sig, k, n_mc, seed=mc_seed)
        out = _distances(mom, ref.moment)
        out["_bound"] = ("T1", dict(sigma=sig, k=k, D=2**N))
        return out
    N_A, N_B = int(point["N_A"]), int(point["N_B"])
    N = N_A + N_B
    part = Bipartition.contiguous(N_A, N)
    if chk == "C1":
        psi = haar_states(2**N, 1, rng)[0]
        out = _distances(projected_ensemble(psi, part).moment(k), haar_moment(2**N_A, k))
        out["_bound"] = ("C1", dict(D_A=2**N_A, D_B=2**N_B, k=k))
        return out
    if chk == "T2":
        H = _tfim_for(point, N)
        beta = float(point["beta"])
        sigma = ctx.cache.get(("thermal", N, beta, H.params["h"], H.params["longitudinal"]), lambda: thermal_state(H, beta).matrix)
        psi = ctpq_sample(H, beta, rng)
        gref = ctx.cache.get(("gen", N, N_A, beta, k, n_mc, mc_seed, H.params["h"]), lambda: generalized_scrooge_reference(sigma, part, None, k, n_mc, mc_seed))
        out = _distances(projected_ensemble(psi, part).moment(k), gref.moment)
        s2 = float(np.sqrt(np.sum(np.linalg.eigvalsh(sigma) ** 2)))
        out["_bound"] = ("T2", dict(D_A=2**N_A, D_B=2**N_B, k=k, sigma_2=s2))
        return out
    if chk == "T3":
        psi = entangled_pair_state(float(point["chi"]), N_A, N_B).amplitudes
        sA = reduced_state(psi, part)
        ref = ctx.cache.scrooge(sA, k, n_mc, mc_seed)
        pe = projected_ensemble(psi, part, "haar", rng)
        out = _distances(pe.moment(k), ref.moment)
        lam = np.linalg.eigvalsh(sA)
        out["_bound"] = ("T3", dict(D_A=2**N_A, D_B=2**N_B, k=k, sigma_2=float(np.sqrt(np.sum(lam**2))), sigma_4=float(np.sum(lam**4) ** 0.25)))
        return out
    if chk == "P1":
        H = _tfim_for(point, N)
        psi0 = _zero_state(N)
        spec = ctx.cache.get(("spectrum", N, H.params["h"], H.params["longitudinal"]), lambda: full_spectrum(H))
        sig = ctx.cache.get(("diag", N, H.params["h"], H.params["longitudinal"]), lambda: diagonal_ensemble(spec, psi0).matrix)
        psi = temporal_states_random(spec, psi0, 1, float(point.get("time_window", 1e4)), rng)[0]
        gref = ctx.cache.get(("genP1", N, N_A, k, n_mc, mc_seed, H.params["h"]), lambda: generalized_scrooge_reference(sig, part, None, k, n_mc, mc_seed))
        out = _distances(projected_ensemble(psi, part).moment(k), gref.moment)
        out["delta_beta"] = ctx.cache.get(("dbeta", N, N_A, H.params["h"]), lambda: delta_beta(spec, psi0, part))
        return out
    if chk == "stabilizer_basis":
        psi = random_stabilizer_state(N, rng)
        basis = point["basis"]
        if basis == "clifford":
            b = random_clifford_unitary(N_B, rng)
        else:
            b = basis
        pe = projected_ensemble(psi, part, b, rng)
        ref = ctx.cache.scrooge(reduced_state(psi, part), k, n_mc, mc_seed)
        return _distances(pe.moment(k), ref.moment)
    raise ConfigError(f"unknown check {chk!r}")


def delta_beta(spec, psi0, part: Bipartition) -> float:
    """``sum_z <zz| Tr_A sigma_diag^(2) |zz> / <z|sigma_B|z>`` for the random-phase ensemble.

    With ``|psi> = sum_j a_j e^{i phi_j} |E_j>``, phase averaging gives
    ``E[p_z^2] = sum_{jl} |a_j|^2 |a_l|^2 (G_jj G_ll + |G_jl|^2) - sum_j |a_j|^4 G_jj^2``
    where ``G = V_z^dagger V_z`` is the Gram matrix of the ``z`` rows of
    the eigenvectors.
    """
    _, a = energy_amplitudes(spec, psi0)
    p = np.abs(a) ** 2
    keep = p > 1e-15
    V = spec.vectors[:, keep]
    p = p[keep]
    blocks = V.reshape(part.D_A, part.D_B, -1)
    total = 0.0
    for z in range(part.D_B):
        Vz = blocks[:, z, :]
        G = Vz.conj().T @ Vz
        g = G.diagonal().real
        first = float(p @ g)
        if first <= 1e-15:
            continue
        second = float((p @ g) ** 2 + p @ (np.abs(G) ** 2) @ p - np.sum(p**2 * g**2))
        total += second / first
    return total


def _theorem_tasks(cfg: ExperimentConfig, ctx: RunContext) -> list[Task]:
    tasks = []
    for g, p in enumerate(cfg.grid_points()):
        for i in range(cfg.instances):
            tasks.append(Task((g, i), [p], i, derive_seed(cfg.base_seed, g, i), theorem_instance))
    return tasks


# --------------------------------------------------------------------------
# driver


TASK_BUILDERS = {
    "commuting": _commuting_tasks,
    "doped_clifford": _doped_tasks,
    "ground_state": _ground_tasks,
    "theorem_check": _theorem_tasks,
}


def _execute(task: Task, ctx: RunContext):
    try:
        if len(task.points) == 1 and task.fn is not ground_state_sweep:
            return [task.fn(task.points[0], task.seed, ctx)]
        return task.fn(task.points, task.seed, ctx)
    except NumericalError:
        raise
    except ScroogeLabError as exc:
        ctx.errors.append({"point": task.points[0], "instance": task.instance, "error": str(exc)})
        return None


def run_experiment(cfg: ExperimentConfig, threads: int = 1, ctx: RunContext | None = None) -> ResultTable:
    """Run all tasks of ``cfg`` and return the per-instance plus summary table.

    A :class:`NumericalError` aborts the run; other per-point failures
    (size caps and similar) are logged in ``metadata["errors"]`` and the
    rest continues.
    """
    ctx = ctx or RunContext(cfg)
    t0 = time.perf_counter()
    tasks = TASK_BUILDERS[cfg.kind](cfg, ctx)
    all_points = [p for t in tasks for p in t.points]
    table = ResultTable(cfg.experiment, _param_columns(cfg, all_points))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda t: _execute(t, ctx), tasks))
    else:
        results = [_execute(t, ctx) for t in tasks]
    for task, res in sorted(zip(tasks, results), key=lambda tr: tr[0].order):
        if res is None:
            continue
        for p, metrics in zip(task.points, res):
            for name in sorted(metrics):
                table.add(p, int(p.get("k", 2)), name, float(metrics[name]), None, task.instance, task.seed)
    table.summarize()
    table.metadata.update(
        {
            "experiment": cfg.experiment,
            "n_tasks": len(tasks),
            "wall_time_s": time.perf_counter() - t0,
            "threads": threads,
            "errors": ctx.errors,
            "cache": {"hits": ctx.cache.hits, "misses": ctx.cache.misses},
        }
    )
    for e in ctx.errors:
        log.warning("grid point %s skipped: %s", e.get("point"), e.get("error"))
    return table


def run_commuting_circuit(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    return run_experiment(cfg, threads)


def run_doped_clifford(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    return run_experiment(cfg, threads)


def run_ground_state(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    return run_experiment(cfg, threads)


def run_theorem_checks(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    return run_experiment(cfg, threads)


INSTANCE_FUNCTIONS = {
    "commuting": commuting_instance,
    "doped_clifford": doped_clifford_instance,
    "theorem_check": theorem_instance,
}


def replay_row(cfg: ExperimentConfig, row: dict, metric: str = "delta_trace") -> float:
    """Recompute one per-instance row from its config and stored seed."""
    match = None
    for p in cfg.grid_points() + ([dict(q, N_B=math.inf) for q in cfg.grid_points()] if cfg.kind == "commuting" else []):
        if all(_same(p.get(c), row.get(c)) for c in _param_columns(cfg, [p])):
            match = p
            break
    if match is None:
        raise ConfigError("row does not correspond to a grid point of this config")
    ctx = RunContext(cfg)
    if cfg.kind == "ground_state":
        return float(ground_state_sweep([match], int(row["seed"]), ctx)[0][metric])
    return float(INSTANCE_FUNCTIONS[cfg.kind](match, int(row["seed"]), ctx)[metric])


def _same(a, b) -> bool:
    if isinstance(a, (int, float)) and isinstance(b, (int, float)) and not isinstance(a, bool):
        return a == b or abs(float(a) - float(b)) <= 1e-12 * max(1.0, abs(float(a)))
    return a == b
