from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scroogelab import analysis as an
from scroogelab.exceptions import InputError

NB = np.arange(2, 13, dtype=float)


class TestExpDecay:
    def test_exact(self):
        f = an.fit_exp_decay(NB, 2 ** (-0.5 * NB))
        assert abs(f["alpha"] - 0.5) < 1e-12
        assert f.error("alpha") < 1e-10
        assert f.x_range == (2.0, 12.0) and f.n_points == NB.size

    def test_noisy_within_2_sigma(self):
        rng = np.random.default_rng(2024)
        y = 2 ** (-0.37 * NB) * (1 + 0.1 * rng.standard_normal(NB.size))
        f = an.fit_exp_decay(NB, y)
        assert f.within("alpha", 0.37, 2.0)
        assert f.error("alpha") > 0

    def test_constant(self):
        f = an.fit_exp_decay(NB, np.full(NB.size, 0.3))
        assert abs(f["alpha"]) < 1e-12

    def test_nonpositive_filtered(self):
        y = 2 ** (-0.5 * NB)
        y[3] = 0.0
        with pytest.warns(RuntimeWarning):
            f = an.fit_exp_decay(NB, y)
        assert f.n_points == NB.size - 1
        assert abs(f["alpha"] - 0.5) < 1e-12

    def test_too_few(self):
        with pytest.raises(InputError):
            an.fit_exp_decay([1, 2], [0.5, 0.25])

    def test_range(self):
        y = np.where(NB < 6, 2 ** (-NB), 2 ** (-6.0) * 2 ** (-0.25 * (NB - 6)))
        f = an.fit_exp_decay(NB, y, x_range=(6, 12))
        assert abs(f["alpha"] - 0.25) < 1e-12


class TestPowerLaw:
    H = np.geomspace(1, 50, 12)

    def test_exact(self):
        f = an.fit_power_law(self.H, self.H**-2.0)
        assert abs(f["alpha"] - 2) < 1e-12

    def test_constant(self):
        assert abs(an.fit_power_law(self.H, np.full(12, 0.1))["alpha"]) < 1e-12

    def test_restricted_range_crossover(self):
        # plateau below h ~ 3, then h^-2: the full fit is biased, the tail refit recovers 2
        y = 1.0 / (1 + (self.H / 3) ** 2)
        full = an.fit_power_law(self.H, y)
        tail = an.fit_power_law(self.H, y, h_range=(15, 50))
        assert abs(full["alpha"] - 2) > 0.3
        assert abs(tail["alpha"] - 2) < 0.1
        tail2 = an.fit_power_law(self.H, y, h_range=(20, 50))
        assert abs(tail2["alpha"] - tail["alpha"]) < 0.05


class TestShiftedPower:
    N = np.arange(4, 16, 2, dtype=float)

    def test_exact(self):
        f = an.fit_shifted_power(self.N, 1 / self.N + 1)
        assert abs(f["c"] - 1) < 1e-6
        assert abs(f["a"] - 1) < 1e-6 and abs(f["gamma"] + 1) < 1e-6
        assert f.converged

    def test_noisy_c_within_2_sigma(self):
        rng = np.random.default_rng(77)
        N = np.arange(4, 30, 2, dtype=float)
        y = 0.8 * N**-1.5 + 1.0 + 0.002 * rng.standard_normal(N.size)
        f = an.fit_shifted_power(N, y)
        assert f.within("c", 1.0, 2.0)

    def test_gamma_free_vs_fixed(self):
        rng = np.random.default_rng(5)
        y = 2 * self.N**-1.0 + 0.5 + 0.001 * rng.standard_normal(self.N.size)
        cmp = an.compare_gamma(self.N, y, -1.0)
        assert cmp["fixed"].info["fixed_gamma"] and not cmp["free"].info["fixed_gamma"]
        assert cmp["fixed"].error("gamma") == 0.0
        assert cmp["free"].residual <= cmp["fixed"].residual + 1e-15
        assert abs(cmp["free"]["c"] - cmp["fixed"]["c"]) < 3 * max(cmp["free"].error("c"), cmp["fixed"].error("c"))

    def test_needs_four(self):
        with pytest.raises(InputError):
            an.fit_shifted_power([1, 2, 3], [1, 2, 3])

    def test_noise_flags_nothing_infinite(self):
        f = an.fit_shifted_power(self.N, np.random.default_rng(0).standard_normal(self.N.size))
        assert math.isfinite(f.residual)
        assert all(e >= 0 for e in f.errors.values())


class TestMinimumAndSaturation:
    def test_parabola_vertex(self):
        x = np.linspace(0.7, 1.3, 13)
        x0, y0 = an.locate_minimum(x, 2 * (x - 0.93) ** 2 + 0.1)
        assert abs(x0 - 0.93) < 1e-10 and abs(y0 - 0.1) < 1e-10

    def test_edge_minimum(self):
        x = np.linspace(0, 1, 5)
        assert an.locate_minimum(x, x) == (0.0, 0.0)

    def test_monotone(self):
        assert an.monotone_within([3, 2, 1])
        assert not an.monotone_within([3, 2, 2.5])
        assert an.monotone_within([3, 2, 2.05], [0.05, 0.05, 0.05])
        assert not an.monotone_within([3, 2, 2.0], strict=True)
        assert an.monotone_within([1, 2, 3], decreasing=False)

    @pytest.mark.parametrize("method", ["plateau", "hinge"])
    def test_saturation_onset(self, method):
        x = np.arange(0, 20, dtype=float)
        y = np.maximum(1.0 - 0.1 * x, 0.2)
        s = an.saturation_onset(x, y, method=method)
        assert abs(s.onset - 8) <= 1
        assert abs(s.plateau - 0.2) < 1e-9

    def test_saturation_bad_method(self):
        with pytest.raises(InputError):
            an.saturation_onset([1, 2, 3], [1, 2, 3], method="knee")


def _family(sizes, f, nu, h, noise=0.0, rng=None):
    out = []
    for N in sizes:
        y = f((h - 1) * N ** (1 / nu))
        if noise:
            y = y + noise * rng.standard_normal(h.size)
        out.append((N, h, y))
    return out


H = np.linspace(0.5, 1.5, 41)
SIZES = (4, 6, 8, 10)


class TestCollapse:
    def test_identical(self):
        y = np.sin(H)
        assert an.scaling_collapse([(4, H, y), (4, H, y)], 1.0) == 0.0

    def test_nu1_beats_nu2(self):
        fam = _family(SIZES, np.tanh, 1.0, H)
        q1 = an.scaling_collapse(fam, 1.0, h0=1.0)
        q2 = an.scaling_collapse(fam, 2.0, h0=1.0)
        assert q1 < 1e-4
        assert q2 >= 10 * q1

    def test_shuffled_negative_control(self):
        fam = _family(SIZES, np.tanh, 1.0, H)
        rng = np.random.default_rng(9)
        shuf = [(N, h, rng.permutation(y)) for N, h, y in fam]
        assert an.scaling_collapse(shuf, 1.0, h0=1.0) > 100 * an.scaling_collapse(fam, 1.0, h0=1.0)

    @pytest.mark.parametrize("seed", range(20))
    def test_minimized_at_true_exponent(self, seed):
        rng = np.random.default_rng(seed)
        nu = rng.choice([1.0, 2.0])
        fam = _family(SIZES, lambda u: np.exp(-(u**2)), nu, H, noise=1e-3, rng=rng)
        best, qs = an.best_nu(fam, [0.5, 1.0, 2.0, 3.0], h0=1.0)
        assert best == nu

    def test_no_overlap(self):
        with pytest.raises(InputError):
            an.scaling_collapse([(4, np.array([0.0, 0.1]), np.zeros(2)), (4, np.array([1.0, 1.1]), np.zeros(2))], 1.0)

    def test_single_curve(self):
        with pytest.raises(InputError):
            an.scaling_collapse([(4, H, H)], 1.0)

    def test_report_shift_minimum(self):
        curves = []
        for N in (4, 6, 8, 10, 12):
            hc = 1.0 + 0.8 / N
            curves.append((float(N), H, (H - hc) ** 2 * N + 0.1 / N))
        rep = an.collapse_report(curves, [1.0, 2.0], shift="minimum")
        assert np.allclose(rep["h0"], [1 + 0.8 / N for N in (4, 6, 8, 10, 12)], atol=1e-8)
        assert abs(rep["h_c"] - 1.0) < 1e-5
        assert set(rep["quality"]) == {"1.0", "2.0"}

    def test_curves_from_rows(self):
        rows = [{"N_B": n, "h": h, "value": 2.0 ** (-n * h)} for n in (2, 4) for h in (0.5, 1.0)]
        cs = an.curves_from_rows(rows, "h", "N_B", "log2_per_size")
        assert [c[0] for c in cs] == [2.0, 4.0]
        assert np.allclose(cs[1][2], [-0.5, -1.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fits_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    x = np.arange(4, 14, dtype=float)
    y = 2 ** (-0.4 * x) * np.exp(0.1 * rng.standard_normal(x.size)) + 1e-3
    p = rng.permutation(x.size)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for fit in (an.fit_exp_decay, an.fit_power_law, an.fit_shifted_power):
            a = fit(x, y)
            b = fit(x[p], y[p])
            assert a.params == b.params and a.errors == b.errors


class TestSklearnWrappers:
    def test_estimators(self):
        X = NB.reshape(-1, 1)
        est = an.ExpDecayFit().fit(X, 2 ** (-0.5 * NB))
        assert np.allclose(est.predict(X), 2 ** (-0.5 * NB))
        assert est.score(X, 2 ** (-0.5 * NB)) > 0.999
        N = np.arange(4, 16, 2, dtype=float)
        est = an.ShiftedPowerFit(gamma=-1.0).fit(N.reshape(-1, 1), 1 / N + 1)
        assert np.allclose(est.predict([[100.0]]), 1.01)
        est = an.PowerLawFit().fit(TestPowerLaw.H.reshape(-1, 1), TestPowerLaw.H**-2.0)
        assert np.allclose(est.predict([[2.0]]), 0.25)
