from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scroogelab.ensembles import (
    EnsembleSampler,
    HaarSampler,
    MomentAccumulator,
    RandomPhaseSampler,
    UniformPhaseSampler,
    WeightedEnsemble,
    derive_seed,
    effective_dimension,
    estimate_moment,
    haar_states,
    make_rng,
    moment_from_json,
    moment_operator,
    moment_to_json,
    phase_averaged_moment,
    sample_haar_state,
    subentropy,
    uniform_phase_moment,
    von_neumann_entropy,
)
from scroogelab.exceptions import InputError, ShapeError
from scroogelab.numeric import hs_distance, random_density_matrix, trace_distance
from scroogelab.symmetric import MomentOperator, haar_moment, symmetric_projector


def _frobenius(a: MomentOperator, b: MomentOperator) -> float:
    x, y = a.aligned_with(b)
    return float(np.linalg.norm(x - y))


class TestRng:
    def test_streams_reproducible(self):
        a = make_rng(5, 1, 2).standard_normal(4)
        b = make_rng(5, 1, 2).standard_normal(4)
        c = make_rng(5, 1, 3).standard_normal(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_derive_seed(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
        assert 0 <= derive_seed(2**63, 7) < 2**63

    def test_sampler_streams(self):
        s = HaarSampler(4, seed=11)
        assert np.array_equal(s.sample(5, stream=2), HaarSampler(4, seed=11).sample(5, stream=2))
        a = np.concatenate(list(s.batches(10, 3, stream=2)))
        b = np.concatenate(list(HaarSampler(4, seed=11).batches(10, 3, stream=2)))
        assert a.shape == (10, 4)
        assert np.array_equal(a, b)


class TestHaar:
    def test_normalized(self, rng):
        assert np.isclose(sample_haar_state(8, rng).norm(), 1)

    def test_population_mean(self):
        D, n = 4, 100_000
        x = np.abs(haar_states(D, n, make_rng(3))[:, 0]) ** 2
        assert abs(x.mean() - 1 / D) < 3 * x.std(ddof=1) / math.sqrt(n)

    def test_first_moment(self):
        m, se = estimate_moment(HaarSampler(4, seed=1), 1, 50_000)
        assert _frobenius(m, haar_moment(4, 1)) < 3 * se

    def test_second_moment(self):
        m, se = estimate_moment(HaarSampler(3, seed=2), 2, 100_000)
        assert _frobenius(m, haar_moment(3, 2)) < 3 * se


class TestMomentOperator:
    def test_single_state(self, rng):
        v = sample_haar_state(4, rng).amplitudes
        ens = WeightedEnsemble([1.0], [v])
        want = np.kron(np.outer(v, v.conj()), np.outer(v, v.conj()))
        assert np.allclose(moment_operator(ens, 2).to_dense(), want)

    def test_computational_pair(self):
        ens = WeightedEnsemble.from_pairs([(0.5, [1, 0]), (0.5, [0, 1])])
        want = np.zeros((4, 4))
        want[0, 0] = want[3, 3] = 0.5
        assert np.allclose(moment_operator(ens, 2).to_dense(), want)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 2**32 - 1))
    def test_trace_psd_symmetric(self, n, k, seed):
        r = np.random.default_rng(seed)
        D = 3
        ens = WeightedEnsemble(r.dirichlet(np.ones(n)), haar_states(D, n, r))
        m = moment_operator(ens, k)
        assert np.isclose(m.trace(), 1)
        assert m.eigenvalues().min() > -1e-12
        dense = m.to_dense()
        p = symmetric_projector(D, k)
        assert np.allclose(p @ dense @ p, dense)

    def test_validation(self):
        with pytest.raises(InputError):
            WeightedEnsemble([0.5, 0.6], [[1, 0], [0, 1]])
        with pytest.raises(InputError):
            WeightedEnsemble([1.0], [[1, 1]])
        with pytest.raises(ShapeError):
            WeightedEnsemble([1.0], [[1, 0], [0, 1]])

    def test_json_roundtrip(self, rng):
        ens = WeightedEnsemble(np.array([0.25, 0.75]), haar_states(4, 2, rng))
        back = WeightedEnsemble.from_json(ens.to_json())
        assert np.array_equal(back.states, ens.states)
        assert np.array_equal(back.weights, ens.weights)
        m = moment_operator(ens, 2)
        m2 = moment_from_json(moment_to_json(m))
        assert np.allclose(m2.matrix, m.matrix)

    def test_sampled_converges_to_exact(self, rng):
        ens = WeightedEnsemble(np.array([0.2, 0.3, 0.5]), haar_states(3, 3, rng))
        exact = moment_operator(ens, 2)
        small, _ = estimate_moment(EnsembleSampler(ens, seed=4), 2, 1_000)
        large, se = estimate_moment(EnsembleSampler(ens, seed=4), 2, 100_000)
        assert _frobenius(large, exact) < _frobenius(small, exact)
        assert _frobenius(large, exact) < 3 * se * math.sqrt(6)


class TestAccumulator:
    def test_merge_equals_single_pass(self):
        states = haar_states(3, 200, make_rng(8))
        one = MomentAccumulator(3, 2)
        one.add(states)
        a, b = MomentAccumulator(3, 2), MomentAccumulator(3, 2)
        a.add(states[:70])
        b.add(states[70:])
        a.merge(b)
        assert np.allclose(a.mean().matrix, one.mean().matrix)
        assert a.std_error() >= 0
        assert np.isclose(a.std_error(), one.std_error())

    def test_empty(self):
        with pytest.raises(InputError):
            MomentAccumulator(2, 2).mean()


class TestPhaseEnsembles:
    @pytest.mark.parametrize("N", [2, 3, 4, 5, 6])
    def test_uniform_phase_distance_exact(self, N):
        # hand-evaluated: diagonal 1/D^2 vs 2/(D(D+1)), pairs 2/D^2 vs 2/(D(D+1))
        D = 2**N
        d = trace_distance(uniform_phase_moment(D, 2), haar_moment(D, 2))
        assert np.isclose(d, (D - 1) / (D * (D + 1)))
        assert 0.5 * 4 / D <= d * 4 <= 4 * 4 / D

    def test_uniform_phase_design_slope(self):
        Ns = np.array([4, 5, 6])
        d = [trace_distance(uniform_phase_moment(2**N, 2), haar_moment(2**N, 2)) for N in Ns]
        slope = np.polyfit(Ns, np.log2(d), 1)[0]
        assert abs(slope + 1) <= 0.15

    def test_uniform_phase_matches_sampler(self):
        m, se = estimate_moment(UniformPhaseSampler(4, seed=3), 2, 100_000)
        assert _frobenius(m, uniform_phase_moment(4, 2)) < 3 * se

    def test_random_phase_uniform_weights_coincide(self):
        a = RandomPhaseSampler(np.full(4, 0.25), seed=9).sample(10)
        b = UniformPhaseSampler(4, seed=9).sample(10)
        assert np.allclose(a, b)

    def test_random_phase_moment_in_frame(self, rng):
        from scroogelab.numeric import haar_unitary

        p = rng.dirichlet(np.ones(4))
        u = haar_unitary(4, rng)
        exact = phase_averaged_moment(p, 2, frame=u)
        m, se = estimate_moment(RandomPhaseSampler(p, basis=u, seed=5), 2, 100_000)
        assert _frobenius(m, exact) < 3 * se

    def test_rejects_bad_weights(self):
        with pytest.raises(InputError):
            RandomPhaseSampler([0.5, 0.6])


class TestEntropies:
    def test_subentropy_values(self):
        assert subentropy([1.0, 0.0]) == 0.0
        # two-level closed form -(a^2 ln a - b^2 ln b)/(a - b) and its a -> b limit
        assert np.isclose(subentropy([0.5, 0.5]), math.log(2) - 0.5)
        want = -(0.81 * math.log(0.9) - 0.01 * math.log(0.1)) / 0.8
        assert np.isclose(subentropy([0.9, 0.1]), want)

    def test_reciprocal_convention_values(self):
        # two-level closed form a b ln(a/b)/(a - b) and its a -> b limit
        assert subentropy([1.0, 0.0], convention="reciprocal") == 0.0
        assert np.isclose(subentropy([0.5, 0.5], convention="reciprocal"), 0.5, atol=1e-6)
        assert np.isclose(subentropy([0.9, 0.1], convention="reciprocal"), 0.09 * math.log(9) / 0.8)
        assert np.isclose(subentropy([0.9, 0.1], convention="reciprocal"), 0.2471878, atol=1e-6)

    def test_subentropy_degenerate_limit(self):
        # nearly-degenerate spectra approach the confluent value continuously
        for eps in (1e-3, 1e-5):
            a, b = 0.5 + eps, 0.5 - eps
            close = -(a * a * math.log(a) - b * b * math.log(b)) / (a - b)
            assert np.isclose(subentropy([a, b]), close, atol=1e-9)
        for lam in ([0.25] * 4, [0.4, 0.3, 0.3], [0.2, 0.2, 0.2, 0.2, 0.1, 0.1]):
            near = np.array(lam) + np.linspace(-1, 1, len(lam)) * 1e-5
            assert np.isclose(subentropy(lam), subentropy(near / near.sum()), atol=1e-4)

    def test_zero_eigenvalues_ignored(self):
        assert np.isclose(subentropy([0.5, 0.5, 0.0]), subentropy([0.5, 0.5]))

    def test_maximally_mixed_subentropy(self):
        # Q(I/D) = ln D - (1 + 1/2 + ... + 1/D) + 1
        for D in (2, 3, 4, 8):
            harmonic = sum(1 / j for j in range(1, D + 1))
            assert np.isclose(subentropy(np.full(D, 1 / D)), math.log(D) - harmonic + 1)

    def test_von_neumann(self):
        assert von_neumann_entropy([1.0, 0.0]) == 0.0
        assert np.isclose(von_neumann_entropy(np.eye(4) / 4), math.log(4))
        assert np.isclose(von_neumann_entropy([0.5, 0.5]), math.log(2))

    def test_subentropy_below_entropy(self):
        r = np.random.default_rng(21)
        for _ in range(100):
            D = int(r.integers(2, 9))
            sig = random_density_matrix(D, r, rank=int(r.integers(1, D + 1)))
            q, s = subentropy(sig), von_neumann_entropy(sig)
            assert -1e-10 <= q <= s + 1e-10

    def test_effective_dimension(self):
        assert np.isclose(effective_dimension(np.eye(4) / 4), 4)
        assert np.isclose(effective_dimension([1.0, 0, 0, 0]), 1)
        assert np.isclose(effective_dimension([0.5, 0.5, 0, 0]), 2)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**32 - 1))
    def test_effective_dimension_range(self, D, seed):
        sig = random_density_matrix(D, np.random.default_rng(seed))
        assert 1 - 1e-9 <= effective_dimension(sig) <= D + 1e-9


def test_hs_and_trace_on_moments(rng):
    ens = WeightedEnsemble(np.array([0.5, 0.5]), haar_states(3, 2, rng))
    m = moment_operator(ens, 2)
    h = haar_moment(3, 2)
    assert hs_distance(m, h) <= trace_distance(m, h) <= math.sqrt(6) * hs_distance(m, h) + 1e-12
