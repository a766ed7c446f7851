from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scroogelab.ensembles import MomentAccumulator, estimate_moment
from scroogelab.exceptions import InputError, SizeError
from scroogelab.hamiltonians import (
    ctpq_sample,
    ctpq_sampler,
    diagonal_ensemble,
    full_spectrum,
    gaussian_spectral_stats,
    ground_state,
    hamiltonian_from_config,
    pauli_matrix,
    random_phase_moment,
    random_phase_sample,
    resonance_probe,
    temporal_moment,
    temporal_state,
    temporal_states_random,
    tfim,
    thermal_state,
    xxz,
)
from scroogelab.numeric import schatten_norm, trace_distance
from scroogelab.symmetric import MomentOperator, haar_moment


def _product(vec, n):
    out = np.ones(1, dtype=complex)
    for _ in range(n):
        out = np.kron(out, vec)
    return out


class TestModels:
    def test_tfim_terms(self):
        H = tfim(5, 0.3)
        assert len(H.terms) == 10
        assert len(tfim(5, 0.3, periodic=False).terms) == 9
        assert np.allclose(H.dense(), H.dense().conj().T)

    def test_tfim_two_sites(self):
        lam = np.linalg.eigvalsh(tfim(2, 0.0).dense())
        assert np.allclose(lam, [-2, -2, 2, 2])

    @settings(max_examples=15, deadline=None)
    @given(st.integers(2, 7), st.floats(-3, 3), st.booleans())
    def test_tfim_spin_flip_symmetry(self, N, h, periodic):
        assert tfim(N, h, periodic).commutes_with("Y" * N)

    def test_longitudinal_breaks_symmetry(self):
        assert not tfim(4, 0.5, longitudinal=1.0).commutes_with("YYYY")

    def test_xxz(self):
        H = xxz(4, 0.4)
        assert len(H.terms) == 12
        tot_z = sum(pauli_matrix("".join("Z" if j == q else "I" for j in range(4))) for q in range(4))
        assert H.commutes_with(tot_z.toarray())
        iso = xxz(4, 1.0)
        for p in "XYZ":
            tot = sum(pauli_matrix("".join(p if j == q else "I" for j in range(4))) for q in range(4))
            assert iso.commutes_with(tot.toarray())

    def test_xxz_two_sites(self):
        h = 0.7
        x, y, z = (pauli_matrix(s).toarray() for s in ("XX", "YY", "ZZ"))
        want = np.linalg.eigvalsh(-2 * (x + y + h * z))
        assert np.allclose(np.linalg.eigvalsh(xxz(2, h).dense()), want)
        # singlet 2 + 2h, triplet pieces -2 + 2h (twice... ) and -2 - 2h... check against hand values
        assert np.allclose(np.sort(want), np.sort([2 * h - 4, 2 * h + 4, -2 * h, -2 * h]))

    def test_block_structure(self):
        H = xxz(4, 0.3).dense()
        weight = np.array([bin(i).count("1") for i in range(16)])
        mask = weight[:, None] != weight[None, :]
        assert np.allclose(H[mask], 0)

    def test_from_config(self):
        assert hamiltonian_from_config("ising", 3, 0.5).name == "tfim"
        assert hamiltonian_from_config("heisenberg", 3, 0.5).name == "xxz"
        with pytest.raises(InputError):
            hamiltonian_from_config("potts", 3, 0.5)


class TestGroundState:
    def test_large_field_polarized(self):
        _, psi = ground_state(tfim(8, 20.0), sector="z2_even")
        # -h sum Y is minimized by the +1 eigenstate of every Y_j
        y_plus = np.array([1, 1j]) / math.sqrt(2)
        assert abs(np.vdot(_product(y_plus, 8), psi.amplitudes)) ** 2 >= 0.99

    def test_iterative_matches_dense(self):
        H = tfim(10, 0.9)
        e0, psi = ground_state(H)
        assert abs(e0 - np.linalg.eigvalsh(H.dense())[0]) <= 1e-8
        assert np.linalg.norm(H.sparse() @ psi.amplitudes - e0 * psi.amplitudes) < 1e-7

    def test_sector_selects_even_state(self):
        H = tfim(6, 0.05)
        e_even, psi = ground_state(H, sector="z2_even")
        y = pauli_matrix("Y" * 6)
        assert np.isclose(np.vdot(psi.amplitudes, y @ psi.amplitudes).real, 1)
        e_all = np.linalg.eigvalsh(H.dense())
        assert e_even >= e_all[0] - 1e-10
        assert e_even <= e_all[1] + 1e-10

    def test_critical_energy(self):
        # free-fermion value for the periodic chain: -sum_k |2 sin(k/2)| at h = 1, k = (2m+1) pi / N
        N = 8
        ks = (2 * np.arange(N) + 1) * np.pi / N
        exact = -np.sum(np.abs(2 * np.sin(ks / 2)))
        e0, _ = ground_state(tfim(N, 1.0), sector="z2_even")
        assert np.isclose(e0, exact)

    def test_limits(self):
        with pytest.raises(SizeError):
            ground_state(tfim(21, 1.0))
        with pytest.raises(InputError):
            ground_state(tfim(3, 1.0), sector="odd-ish")


NONRES = tfim(4, 0.8, periodic=False, longitudinal=1.0)
PSI0 = np.eye(16)[0].astype(complex)


class TestDynamics:
    def test_diagonal_ensemble(self):
        sig = diagonal_ensemble(NONRES, PSI0)
        assert np.isclose(np.trace(sig.matrix).real, 1)
        H = NONRES.dense()
        assert np.allclose(H @ sig.matrix, sig.matrix @ H)
        spec = full_spectrum(NONRES)
        eig = diagonal_ensemble(NONRES, spec.vectors[:, 3])
        assert np.isclose(eig.purity(), 1)

    def test_time_average_exact(self):
        m = temporal_moment(NONRES, PSI0, 1, 1e4).in_computational_frame()
        assert trace_distance(m.matrix, diagonal_ensemble(NONRES, PSI0).matrix) < 1e-2

    def test_time_average_sampled(self):
        states = temporal_states_random(NONRES, PSI0, 1000, 1e4, np.random.default_rng(1))
        acc = MomentAccumulator(16, 1)
        acc.add(states)
        m, se = acc.finalize()
        gap = np.linalg.norm(m.matrix - diagonal_ensemble(NONRES, PSI0).matrix)
        assert gap < 3 * se

    def test_populations_invariant(self, rng):
        spec = full_spectrum(NONRES)
        p0 = np.abs(spec.vectors.conj().T @ PSI0) ** 2
        for v in (random_phase_sample(NONRES, PSI0, rng), temporal_state(NONRES, PSI0, 12.3)):
            assert np.isclose(np.linalg.norm(v), 1)
            assert np.allclose(np.abs(spec.vectors.conj().T @ v) ** 2, p0)

    def test_random_phase_first_moment(self):
        states = random_phase_sample(NONRES, PSI0, np.random.default_rng(2), n=20_000)
        acc = MomentAccumulator(16, 1)
        acc.add(states)
        m, se = acc.finalize()
        assert np.linalg.norm(m.matrix - diagonal_ensemble(NONRES, PSI0).matrix) < 3 * se

    def test_temporal_vs_random_phase_second_moment(self):
        r = np.random.default_rng(3)
        n = 20_000
        a, b = MomentAccumulator(16, 2), MomentAccumulator(16, 2)
        a.add(temporal_states_random(NONRES, PSI0, n, 1e4, r))
        b.add(random_phase_sample(NONRES, PSI0, r, n=n))
        (ma, sa), (mb, sb) = a.finalize(), b.finalize()
        assert np.linalg.norm(ma.matrix - mb.matrix) < 3 * math.hypot(sa, sb)
        exact = random_phase_moment(NONRES, PSI0, 2)
        x, y = mb.aligned_with(exact)
        assert np.linalg.norm(x - y) < 3 * sb

    def test_temporal_moment_long_time_limit(self):
        t = temporal_moment(NONRES, PSI0, 2, 1e7)
        r = random_phase_moment(NONRES, PSI0, 2)
        assert trace_distance(t, r) < 1e-3

    def test_resonance_probe(self):
        for N in (4, 6):
            free = resonance_probe(full_spectrum(tfim(N, 0.8, periodic=False)).energies)
            assert not free["nonresonant"]
            mixed = resonance_probe(full_spectrum(tfim(N, 0.8, periodic=False, longitudinal=1.0)).energies)
            assert mixed["nonresonant"] and mixed["coincidences"] == 0


class TestThermal:
    def test_beta_zero_is_haar(self):
        sampler = ctpq_sampler(tfim(2, 0.5), 0.0, seed=4)
        m, se = estimate_moment(sampler, 2, 50_000)
        x, y = m.aligned_with(haar_moment(4, 2))
        assert np.linalg.norm(x - y) < 3 * se

    @staticmethod
    def _normalized_ctpq_first_moment(H, beta):
        # with x_j = |xi_j|^2 ~ Exp(1): E[w_i x_i / sum_j w_j x_j] = w_i int_0^inf ds / ((1 + w_i s) prod_j (1 + w_j s))
        from scipy.integrate import quad

        spec = full_spectrum(H)
        w = np.exp(-beta * (spec.energies - spec.energies[0]))

        def entry(i):
            f = lambda s: w[i] / ((1 + w[i] * s) * np.prod(1 + w * s))
            return quad(f, 0, np.inf, limit=200)[0]

        diag = np.array([entry(i) for i in range(w.size)])
        return (spec.vectors * diag) @ spec.vectors.conj().T

    def test_first_moment_matches_quadrature(self):
        H = tfim(6, 0.7)
        states = ctpq_sample(H, 1.0, np.random.default_rng(5), n=20_000)
        acc = MomentAccumulator(64, 1)
        acc.add(states)
        m, se = acc.finalize()
        oracle = self._normalized_ctpq_first_moment(H, 1.0)
        assert np.isclose(np.trace(oracle).real, 1)
        assert np.linalg.norm(m.matrix - oracle) < 3 * se

    def test_first_moment_thermal_high_temperature(self):
        # normalization bias scales with the purity of sigma_beta; negligible at small beta
        H = tfim(6, 0.7)
        states = ctpq_sample(H, 0.1, np.random.default_rng(6), n=20_000)
        acc = MomentAccumulator(64, 1)
        acc.add(states)
        m, se = acc.finalize()
        assert np.linalg.norm(m.matrix - thermal_state(H, 0.1).matrix) < 3 * se

    def test_low_temperature_bias_visible(self):
        H = tfim(6, 0.7)
        oracle = self._normalized_ctpq_first_moment(H, 1.0)
        assert trace_distance(oracle, thermal_state(H, 1.0).matrix) > 0.03

    def test_energy_decreases_with_beta(self):
        H = tfim(6, 0.7)
        dense = H.dense()
        energies = [np.trace(dense @ thermal_state(H, b).matrix).real for b in (0.0, 0.5, 1.0)]
        assert energies[0] > energies[1] > energies[2]

    def test_negative_beta(self):
        with pytest.raises(InputError):
            ctpq_sample(tfim(2, 0.5), -1.0, np.random.default_rng(0))

    def test_gaussian_stats(self):
        from scroogelab.hamiltonians import SpinHamiltonian

        single = gaussian_spectral_stats(SpinHamiltonian(1, ((0.7, "X"),)), 0.1)
        assert single.mu == 0 and np.isclose(single.delta2, 0.49)
        assert np.isclose(gaussian_spectral_stats(tfim(6, 1.0), 0.1).delta2, 12)

    def test_gaussian_norm_prediction(self):
        H = tfim(8, 1.0)
        stats = gaussian_spectral_stats(H, 0.1)
        exact = schatten_norm(thermal_state(H, 0.1).eigenvalues, 2)
        assert abs(stats.predicted_norms[2.0] - exact) / exact <= 0.10

    def test_self_consistency_flag(self):
        H = tfim(4, 1.0)
        assert gaussian_spectral_stats(H, 0.05).self_consistent[2.0]
        assert not gaussian_spectral_stats(H, 3.0).self_consistent[2.0]


def test_moment_operator_frames_agree():
    m = random_phase_moment(NONRES, PSI0, 2)
    assert isinstance(m, MomentOperator)
    assert np.isclose(m.trace(), 1)
