from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from kerneltest.inference import (
    asymptotic_pvalue,
    bh_adjust,
    chi2_sf,
    permutation_pvalue,
    permutation_statistics,
    regularized_gamma_q,
)
from kerneltest.kernels import GramMatrix, KernelSpec, gram
from kerneltest.kfda import StatisticValue, eigendecompose, kfda_statistic
from kerneltest.testing import two_sample_test


def _stat(d2, T, n1=60, n2=60):
    return StatisticValue(d2, np.array([d2]), T, n1, n2)


class TestChi2Sf:
    @pytest.mark.parametrize("T", [1, 2, 3, 4, 10, 25])
    def test_zero(self, T):
        assert chi2_sf(0.0, T) == 1.0

    def test_table_quantile(self):
        assert chi2_sf(3.841459, 1) == pytest.approx(0.05, abs=1e-5)

    @given(st.floats(0, 200))
    def test_df2_closed_form(self, x):
        assert chi2_sf(x, 2) == math.exp(-x / 2)

    def test_against_scipy(self):
        for T in range(1, 31):
            for x in np.concatenate([np.linspace(0, 3 * T + 30, 60), [1e-6, 0.01]]):
                assert chi2_sf(float(x), T) == pytest.approx(stats.chi2.sf(x, T), abs=1e-10)

    def test_against_quadrature(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            T = int(rng.integers(1, 12))
            x = float(rng.uniform(0.1, 4 * T))
            mass, _ = integrate.quad(lambda t: stats.chi2.pdf(t, T), 0, x, epsabs=1e-13)
            assert 1.0 - chi2_sf(x, T) == pytest.approx(mass, abs=1e-8)

    @pytest.mark.parametrize("T", [1, 3, 4, 7])
    def test_strictly_decreasing(self, T):
        xs = np.linspace(0, 40, 400)
        values = [chi2_sf(float(x), T) for x in xs]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_invalid(self):
        with pytest.raises(ValueError):
            chi2_sf(-1.0, 2)
        with pytest.raises(ValueError):
            chi2_sf(1.0, 0)
        with pytest.raises(ValueError):
            regularized_gamma_q(0.0, 1.0)


class TestAsymptoticPvalue:
    def test_zero_statistic(self):
        assert asymptotic_pvalue(_stat(0.0, 4)).pvalue == 1.0

    def test_table_value(self):
        result = asymptotic_pvalue(_stat(3.841459, 1))
        assert result.pvalue == pytest.approx(0.05, abs=1e-5)
        assert result.df == 1
        assert not result.small_sample

    def test_small_sample_flag(self):
        assert asymptotic_pvalue(_stat(2.0, 2, 20, 20)).small_sample

    def test_mismatched_truncation(self):
        with pytest.raises(ValueError, match="truncation"):
            asymptotic_pvalue(_stat(1.0, 3), T=4)


def _h0_gram(seed, n1=10, n2=10):
    x = np.random.default_rng(seed).normal(size=(n1 + n2, 1))
    return gram(x, KernelSpec(), n1)


class TestPermutation:
    def test_dominating_observation(self):
        x = np.concatenate([np.linspace(0, 1, 15), np.linspace(20, 21, 15)])
        result = permutation_pvalue(gram(x, KernelSpec(), 15), T=2, B=99, seed=1)
        assert result.pvalue == pytest.approx(1 / 100)
        assert result.method == "permutation"

    def test_duplicated_sample(self):
        block = np.random.default_rng(2).normal(size=(8, 2))
        g = gram(np.vstack([block, block]), KernelSpec(), 8)
        assert kfda_statistic(eigendecompose(g), 3).d2 == pytest.approx(0.0, abs=1e-10)
        assert permutation_pvalue(g, T=3, B=50, seed=0).pvalue == 1.0

    def test_deterministic_and_thread_independent(self):
        g = _h0_gram(3)
        a = permutation_statistics(g, 3, 150, seed=9, threads=1)
        b = permutation_statistics(g, 3, 150, seed=9, threads=4)
        assert a.tobytes() == b.tobytes()
        assert a.tobytes() != permutation_statistics(g, 3, 150, seed=10).tobytes()

    def test_statistics_match_explicit_relabeling(self):
        g = _h0_gram(4)
        null = permutation_statistics(g, 3, 5, seed=2)
        for b in range(5):
            order = np.random.default_rng([2, b]).permutation(g.n)
            model = eigendecompose(g.permuted(order))
            assert null[b] == pytest.approx(kfda_statistic(model, 3).d2, rel=1e-9)

    def test_unreachable_alpha_flagged(self):
        result = permutation_pvalue(_h0_gram(5), T=2, B=10, seed=0, alpha=0.05)
        assert any("cannot reach" in w for w in result.warnings)
        assert not permutation_pvalue(_h0_gram(5), T=2, B=99, seed=0, alpha=0.05).warnings

    def test_invalid_count(self):
        with pytest.raises(ValueError):
            permutation_statistics(_h0_gram(6), 2, 0)

    def test_super_uniform_under_null(self):
        reps, alpha = 500, 0.1
        p = np.array([
            permutation_pvalue(_h0_gram(100 + r), T=2, B=49, seed=r).pvalue for r in range(reps)
        ])
        for level in (0.05, alpha, 0.2, 0.5):
            rate = np.mean(p <= level)
            se = np.sqrt(level * (1 - level) / reps)
            assert rate <= level + 3 * se

    def test_two_sample_entry_point(self):
        rng = np.random.default_rng(7)
        x1, x2 = rng.normal(size=(30, 2)), rng.normal(1.0, size=(30, 2))
        res = two_sample_test(x1, x2, T=4, method="permutation", B=99, seed=0)
        assert res.pvalue == pytest.approx(0.01)
        assert res.projections.shape == (60,)
        with pytest.raises(ValueError):
            two_sample_test(x1, x2, method="bootstrap")


class TestBhAdjust:
    def test_equal_values(self):
        np.testing.assert_array_equal(bh_adjust([0.2, 0.2, 0.2]), [0.2, 0.2, 0.2])

    def test_example(self):
        np.testing.assert_allclose(bh_adjust([0.01, 0.02, 0.03]), [0.03, 0.03, 0.03])

    def test_single(self):
        np.testing.assert_array_equal(bh_adjust([0.37]), [0.37])

    def test_empty(self):
        assert bh_adjust([]).size == 0

    @pytest.mark.parametrize("bad", [[-0.1], [1.5], [np.nan]])
    def test_out_of_range(self, bad):
        with pytest.raises(ValueError):
            bh_adjust(bad)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=60))
    def test_matches_reference(self, p):
        ref = stats.false_discovery_control(np.array(p), method="bh")
        np.testing.assert_allclose(bh_adjust(p), ref, rtol=1e-12, atol=1e-15)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=60), st.randoms(use_true_random=False))
    def test_properties(self, p, rnd):
        p = np.array(p)
        q = bh_adjust(p)
        assert np.all(q >= p) and np.all(q <= 1)
        order = np.argsort(p, kind="stable")
        assert np.all(np.diff(q[order]) >= 0)
        perm = list(range(p.size))
        rnd.shuffle(perm)
        np.testing.assert_array_equal(bh_adjust(p[perm]), q[perm])


def test_gram_matrix_input_not_mutated():
    g = _h0_gram(8)
    before = g.values.copy()
    permutation_pvalue(g, T=2, B=20)
    assert isinstance(g, GramMatrix)
    np.testing.assert_array_equal(g.values, before)
