from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scroogelab.ensembles import MomentAccumulator, haar_states
from scroogelab.exceptions import InputError, RegimeWarning
from scroogelab.hamiltonians import ctpq_sample, tfim, thermal_state
from scroogelab.numeric import Bipartition, DensityOperator, kron, random_density_matrix, trace_distance
from scroogelab.scrooge import (
    ScroogeSampler,
    conditional_states,
    generalized_scrooge_reference,
    moment_bound_brackets,
    moment_bound_value,
    relative_error_check,
    sample_scrooge_state,
    scrooge_moment_mc,
    scrooge_moment_proxy,
    scrooge_proxy_gap,
    scrooge_states,
    theorem_bound,
    theorem_regime,
)
from scroogelab.symmetric import MomentOperator, haar_moment, sym_dim, sym_power


def _frob(a, b) -> float:
    x, y = a.aligned_with(b)
    return float(np.linalg.norm(x - y))


class TestSampling:
    def test_pure_sigma(self, rng):
        a = haar_states(4, 1, rng)[0]
        for _ in range(5):
            psi = sample_scrooge_state(np.outer(a, a.conj()), rng).amplitudes
            assert np.isclose(abs(np.vdot(a, psi)), 1)

    def test_identity_is_haar(self):
        states = scrooge_states(np.eye(3) / 3, 50_000, np.random.default_rng(1))
        for k in (1, 2):
            acc = MomentAccumulator(3, k)
            acc.add(states)
            m, se = acc.finalize()
            assert _frob(m, haar_moment(3, k)) < 3 * se

    def test_first_moment_is_sigma(self, rng):
        sig = random_density_matrix(4, rng)
        states = ScroogeSampler(sig, seed=3).sample(100_000)
        acc = MomentAccumulator(4, 1)
        acc.add(states)
        m, se = acc.finalize()
        assert np.linalg.norm(m.matrix - sig) < 3 * se

    def test_support_respected(self, rng):
        sig = np.diag([0.6, 0.4, 0.0, 0.0])
        states = scrooge_states(sig, 200, rng)
        assert np.allclose(states[:, 2:], 0)


class TestMonteCarloMoment:
    @pytest.mark.parametrize("method", ["phase_averaged", "direct"])
    def test_maximally_mixed_qubit(self, method):
        ref = scrooge_moment_mc(np.eye(2) / 2, 2, 100_000, seed=2, method=method)
        assert _frob(ref.moment, haar_moment(2, 2)) < 3 * max(ref.std_error, 1e-15)

    def test_pure_sigma_exact(self, rng):
        a = haar_states(3, 1, rng)[0]
        for k in (1, 2, 3):
            ref = scrooge_moment_mc(np.outer(a, a.conj()), k, 1_000, seed=1)
            want = MomentOperator.from_states(a[None, :], k)
            assert _frob(ref.moment, want) < 1e-10

    @pytest.mark.parametrize("method", ["phase_averaged", "direct"])
    def test_k1_is_sigma(self, rng, method):
        sig = random_density_matrix(4, rng)
        ref = scrooge_moment_mc(sig, 1, 50_000, seed=4, method=method)
        assert np.linalg.norm(ref.moment.in_computational_frame().matrix - sig) < 3 * ref.std_error + 1e-12

    def test_methods_agree(self, rng):
        sig = random_density_matrix(3, rng)
        a = scrooge_moment_mc(sig, 2, 100_000, seed=5)
        b = scrooge_moment_mc(sig, 2, 100_000, seed=6, method="direct")
        assert _frob(a.moment, b.moment) < 3 * math.hypot(a.std_error, b.std_error)

    def test_matches_sampler(self, rng):
        sig = random_density_matrix(3, rng)
        ref = scrooge_moment_mc(sig, 2, 100_000, seed=7)
        acc = MomentAccumulator(3, 2)
        acc.add(scrooge_states(sig, 50_000, np.random.default_rng(8)))
        m, se = acc.finalize()
        assert _frob(m, ref.moment) < 3 * math.hypot(se, ref.std_error)

    @pytest.mark.parametrize("D,k", [(4, 2), (8, 3), (32, 2)])
    def test_trace_converges(self, D, k):
        sig = random_density_matrix(D, np.random.default_rng(D + k))
        ref = scrooge_moment_mc(sig, k, 10_000, seed=9)
        assert abs(ref.moment.trace() - 1) < max(3 * ref.std_error, 1e-12)

    def test_reproducible_and_serializable(self, rng):
        sig = random_density_matrix(4, rng)
        a = scrooge_moment_mc(sig, 2, 2_000, seed=11)
        b = scrooge_moment_mc(sig, 2, 2_000, seed=11)
        assert np.array_equal(a.moment.matrix, b.moment.matrix)
        assert '"n_samples": 2000' in a.to_json()

    def test_errors(self):
        with pytest.raises(InputError):
            scrooge_moment_mc(np.eye(2) / 2, 2, 1)
        with pytest.raises(InputError):
            scrooge_moment_mc(np.eye(2) / 2, 2, 100, method="quadrature")


class TestProxy:
    def test_identity_exact(self):
        for D, k in ((2, 2), (4, 3)):
            assert _frob(scrooge_moment_proxy(np.eye(D) / D, k), haar_moment(D, k)) < 1e-12

    def test_k1(self, rng):
        sig = random_density_matrix(4, rng)
        assert np.allclose(scrooge_moment_proxy(sig, 1).in_computational_frame().matrix, sig)

    def test_commutes_and_trace(self, rng):
        sig = random_density_matrix(3, rng)
        for k in (2, 3):
            p = scrooge_moment_proxy(sig, k).in_computational_frame().matrix
            s = sym_power(sig, k)
            assert np.allclose(p @ s, s @ p)
            want = 3**k * moment_bound_value(sig, k) / (math.factorial(k) * sym_dim(3, k))
            assert np.isclose(np.trace(p).real, want)

    def test_gap_vanishes_identically(self, rng):
        g = scrooge_proxy_gap(np.eye(8) / 8, 2, 5_000, seed=1)
        assert g.trace_norm < 1e-12
        g1 = scrooge_proxy_gap(random_density_matrix(8, rng), 1, 5_000, seed=1)
        assert g1.trace_norm < 1e-12

    def test_gap_linear_in_purity(self):
        r = np.random.default_rng(13)
        ratios = []
        for _ in range(6):
            sig = random_density_matrix(8, r, rank=int(r.integers(2, 9)))
            s2 = float(np.sqrt(np.sum(DensityOperator(sig).eigenvalues ** 2)))
            g = scrooge_proxy_gap(sig, 2, 50_000, seed=2)
            ratios.append(g.trace_norm / (2 * s2))
        assert max(ratios) <= 2.0

    def test_proxy_vs_mc_direct(self, rng):
        sig = random_density_matrix(8, rng)
        ref = scrooge_moment_mc(sig, 2, 50_000, seed=3)
        s2 = float(np.sqrt(np.sum(DensityOperator(sig).eigenvalues ** 2)))
        d = 2 * trace_distance(scrooge_moment_proxy(sig, 2), ref.moment)
        assert d <= 2.0 * 2 * s2


class TestGeneralized:
    def test_product_with_pure_B(self, rng):
        sig_a = random_density_matrix(2, rng)
        sig = kron(sig_a, np.diag([1.0, 0.0, 0.0, 0.0]))
        part = Bipartition.contiguous(1, 3)
        g = generalized_scrooge_reference(sig, part, k=2, n=50_000, seed=1)
        assert g.weights.size == 1 and g.n_distinct == 1
        ref = scrooge_moment_mc(sig_a, 2, 50_000, seed=2)
        assert _frob(g.moment, ref.moment) < 3 * math.hypot(g.std_error, ref.std_error)

    def test_maximally_mixed(self):
        part = Bipartition.contiguous(1, 3)
        g = generalized_scrooge_reference(np.eye(8) / 8, part, k=2, n=20_000, seed=1)
        assert np.isclose(g.weights.sum(), 1)
        assert g.n_distinct == 1
        assert _frob(g.moment, haar_moment(2, 2)) < 3 * g.std_error + 1e-12

    def test_conditional_states_are_states(self, rng):
        part = Bipartition.contiguous(2, 4)
        w, idx, states, dropped = conditional_states(random_density_matrix(16, rng, rank=3), part)
        assert np.isclose(w.sum(), 1) and dropped == 0
        for s in states:
            assert np.isclose(np.trace(s).real, 1)
            assert np.linalg.eigvalsh(s).min() > -1e-12

    def test_pure_input_and_basis(self, rng):
        psi = haar_states(8, 1, rng)[0]
        part = Bipartition.contiguous(1, 3)
        w, idx, states, _ = conditional_states(psi, part)
        M = psi.reshape(2, 4)
        assert np.allclose(w, np.sum(np.abs(M) ** 2, axis=0))
        u = np.linalg.qr(rng.standard_normal((4, 4)))[0]
        w2, _, _, _ = conditional_states(psi, part, basis=u)
        assert np.allclose(w2, np.sum(np.abs(M @ u.T) ** 2, axis=0))

    def test_all_weights_dropped(self):
        part = Bipartition.contiguous(1, 2)
        with pytest.raises(InputError):
            conditional_states(np.zeros((4, 4)), part)

    def test_u1_grouping(self):
        # mixtures of Dicke states are permutation- and U(1)-symmetric
        N_A, N_B = 1, 4
        N = N_A + N_B
        weights = np.array([bin(i).count("1") for i in range(2**N)])
        sig = np.zeros((2**N, 2**N))
        coeff = np.array([0.1, 0.3, 0.25, 0.2, 0.1, 0.05])
        for w, c in enumerate(coeff):
            v = (weights == w).astype(float)
            v /= np.linalg.norm(v)
            sig += c * np.outer(v, v)
        g = generalized_scrooge_reference(sig, Bipartition.contiguous(N_A, N), k=2, n=2_000, seed=1)
        assert g.weights.size == 2**N_B
        assert g.n_distinct <= N_B + 1


class TestBounds:
    def test_c1_formula(self):
        for D_A, D_B, k in ((2, 16, 2), (4, 64, 2)):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RegimeWarning)
                v = theorem_bound("C1", D_A=D_A, D_B=D_B, k=k)
            assert np.isclose(v, math.sqrt(D_A**k / (math.factorial(k) * D_B)))

    def test_t1_identity(self):
        D, k = 64, 2
        v = theorem_bound("T1", sigma=np.eye(D) / D, k=k)
        assert np.isclose(v, k**2 / D + k / math.sqrt(D))

    def test_t3_identity(self):
        D_A, D_B, k = 16, 2**12, 1
        v = theorem_bound("T3", D_A=D_A, D_B=D_B, k=k, sigma_2=1 / math.sqrt(D_A), sigma_4=D_A ** (-0.75))
        lead = (D_A * (1 / D_A)) ** k * k**2 / D_A
        assert np.isclose(v, math.sqrt(lead + sym_dim(D_A, k) * k ** (2 * k + 2) / D_B))

    def test_regime_warnings(self):
        with pytest.warns(RegimeWarning):
            theorem_bound("T1", D=4, k=2, sigma_inf=1.0, sigma_2=1.0)
        with pytest.warns(RegimeWarning):
            theorem_bound("C1", D_A=2, D_B=8, k=2)
        with pytest.warns(RegimeWarning):
            theorem_bound("T2", D_A=8, D_B=4, k=2, sigma_2=0.1)
        with pytest.raises(InputError):
            theorem_bound("T9", k=2)

    def test_regime_list_without_warning(self):
        assert len(theorem_regime("T3", D_A=4, D_B=2, k=2, sigma_2=0.5, sigma_4=0.5**0.5)) == 2
        assert theorem_regime("C1", D_A=64, D_B=64, k=2) == []
        with warnings.catch_warnings():
            warnings.simplefilter("error", RegimeWarning)
            theorem_bound("C1", warn=False, D_A=2, D_B=8, k=2)

    def test_moment_bound_value_exact(self):
        # sigma = I/D gives k! D_k (1 / D^k) D_k ... = k! D_k E[(1/D)^k] = k! D_k / D^k
        for D, k in ((4, 2), (8, 3)):
            assert np.isclose(moment_bound_value(np.eye(D) / D, k), math.factorial(k) * sym_dim(D, k) / D**k)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 4))
    def test_brackets_contain_exact(self, seed, k):
        r = np.random.default_rng(seed)
        sig = random_density_matrix(32, r)
        s2 = float(np.sqrt(np.sum(DensityOperator(sig).eigenvalues ** 2)))
        lo, hi = moment_bound_brackets(s2, k)
        v = moment_bound_value(sig, k)
        assert lo <= v + 1e-9 and v <= hi + 1e-9

    def test_relative_error_check(self):
        h = haar_moment(3, 2)
        assert relative_error_check(h, h, 0.01)["lower_ok"]
        out = relative_error_check(h * 1.5, h, 0.1)
        assert out["lower_ok"] and not out["upper_ok"]


@pytest.mark.slow
def test_ctpq_second_moment_is_scrooge():
    H = tfim(6, 0.7)
    beta = 0.5
    ref = scrooge_moment_mc(thermal_state(H, beta), 2, 100_000, seed=1)
    acc = MomentAccumulator(64, 2)
    acc.add(ctpq_sample(H, beta, np.random.default_rng(5), n=20_000))
    m, se = acc.finalize()
    assert _frob(m, ref.moment) < 3 * math.hypot(se, ref.std_error)
