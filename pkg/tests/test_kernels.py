from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kerneltest.kernels import (
    KernelError,
    KernelSpec,
    eval_gauss,
    eval_linear,
    eval_zi_gauss,
    gram,
    median_heuristic,
    resolve,
    zero_fractions,
    zi_bandwidth,
)


def _pdf0(mean, sigma):
    return math.exp(-0.5 * (mean / sigma) ** 2) / (math.sqrt(2 * math.pi) * sigma)


class TestMedianHeuristic:
    def test_single_pair(self):
        assert median_heuristic(np.array([0.0, 2.0])) == 2.0

    def test_three_points(self):
        assert median_heuristic(np.array([0.0, 1.0, 3.0])) == 2.0

    def test_even_pair_count_takes_lower_median(self):
        # 4 points -> 6 distances {1,1,1,2,2,3}; lower median = 1
        assert median_heuristic(np.array([0.0, 1.0, 2.0, 3.0])) == 1.0

    def test_all_equal(self):
        with pytest.raises(KernelError, match="degenerate"):
            median_heuristic(np.ones((5, 2)))

    def test_zero_median_falls_back_to_positive_distances(self):
        # 45 pairs, 28 of them zero; positive distances are eight 1s, one 2, eight 3s
        x = np.array([0.0] * 8 + [1.0, 3.0])
        assert median_heuristic(x) == 2.0

    def test_multivariate_is_euclidean(self):
        assert median_heuristic(np.array([[0.0, 0.0], [3.0, 4.0]])) == 5.0


class TestEvalGauss:
    def test_identical(self):
        assert eval_gauss([1.0, 2.0], [1.0, 2.0], 0.7) == 1.0

    def test_analytic(self):
        sigma = 1.3
        y = np.array([sigma * math.sqrt(2.0), 0.0])
        assert eval_gauss([0.0, 0.0], y, sigma) == pytest.approx(math.exp(-1), rel=1e-14)

    def test_bandwidth_limit(self):
        vals = [eval_gauss([0.0], [1.0], s) for s in (0.5, 1, 2, 10, 100, 1e4)]
        assert all(a < b for a, b in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(1.0, abs=1e-8)

    def test_dimension_mismatch(self):
        with pytest.raises(KernelError):
            eval_gauss([0.0], [0.0, 1.0], 1.0)

    @given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.01, 100))
    def test_range_and_symmetry(self, x, y, s):
        v = eval_gauss([x], [y], s)
        assert 0.0 <= v <= 1.0
        assert v == eval_gauss([y], [x], s)


class TestEvalZiGauss:
    def test_full_dropout(self):
        assert eval_zi_gauss(3.0, 7.0, 1.5, 1.0, 1.0) == 1.0

    def test_no_dropout_is_product_kernel(self):
        x, y, s = 2.0, 3.5, 0.8
        expected = math.exp(-((x - y) ** 2) / (4 * s**2)) / (4 * math.pi * s**2)
        assert eval_zi_gauss(x, y, s, 0.0, 0.0) == pytest.approx(expected, rel=1e-14)

    def test_one_sided_dropout(self):
        assert eval_zi_gauss(2.0, 1.2, 0.9, 1.0, 0.0) == pytest.approx(_pdf0(1.2, 0.9), rel=1e-14)

    def test_bad_sigma(self):
        with pytest.raises(KernelError):
            eval_zi_gauss(0.0, 1.0, 0.0, 0.5, 0.5)

    @given(st.floats(0, 50), st.floats(0, 50), st.floats(0.1, 10), st.floats(0, 1), st.floats(0, 1))
    def test_symmetric_nonnegative(self, x, y, s, a, b):
        v = eval_zi_gauss(x, y, s, a, b)
        assert v >= 0 and math.isfinite(v)
        assert v == pytest.approx(eval_zi_gauss(y, x, s, b, a), rel=1e-14)


class TestKernelSpec:
    def test_alias(self):
        assert KernelSpec("zi-gauss").family == "zi_gauss"

    @pytest.mark.parametrize("kw", [{"family": "poly"}, {"bandwidth": -1.0}, {"bandwidth": "auto"}])
    def test_invalid(self, kw):
        with pytest.raises(KernelError):
            KernelSpec(**kw)

    def test_resolved_bandwidth_positive(self):
        spec = resolve(np.array([0.0, 1.0, 3.0]), KernelSpec())
        assert spec.bandwidth == 2.0

    def test_zi_defaults(self):
        x = np.array([0, 0, 2, 5, 0, 1, 1, 4], dtype=float)
        spec = resolve(x, KernelSpec("zi_gauss"), 4)
        np.testing.assert_array_equal(spec.zero_inflation, zero_fractions(x, 4))
        np.testing.assert_array_equal(spec.zero_inflation, [0.5] * 4 + [0.25] * 4)
        assert spec.bandwidth == zi_bandwidth(x)

    def test_known_dropout_overrides(self):
        x = np.array([0, 0, 2, 5], dtype=float)
        spec = resolve(x, KernelSpec("zi_gauss", 1.0, np.full(4, 0.8)), 2)
        np.testing.assert_array_equal(spec.zero_inflation, 0.8)


class TestGram:
    def test_gauss_diagonal(self):
        rng = np.random.default_rng(1)
        k = gram(rng.normal(size=(30, 4)), KernelSpec(), 12).values
        assert np.all(np.diag(k) == 1.0)

    def test_linear_example(self):
        k = gram(np.array([1.0, 2.0, 3.0]), KernelSpec("linear"), 1).values
        np.testing.assert_array_equal(k, [[1, 2, 3], [2, 4, 6], [3, 6, 9]])

    def test_exact_symmetry(self):
        rng = np.random.default_rng(2)
        for spec in (KernelSpec(), KernelSpec("linear"), KernelSpec("zi_gauss")):
            k = gram(rng.poisson(1.0, size=(25, 1)).astype(float), spec, 10).values
            assert np.array_equal(k, k.T)

    def test_simulated_gene_psd(self):
        from kerneltest.simulate import load_preset, generate_scenario

        d = generate_scenario(load_preset("desk").with_sizes(50, 50), seed=3)
        k = gram(d.values[:, 0], KernelSpec(), 50).values
        lam = np.linalg.eigvalsh(k)
        assert k.shape == (100, 100)
        assert lam.min() >= -1e-9 * lam.max()

    def test_psd_random_instances(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            n = int(rng.integers(2, 51))
            d = int(rng.integers(1, 6))
            x = rng.normal(size=(n, d)) * rng.uniform(0.1, 10)
            if np.all(x == x[0]):
                continue
            k = gram(x, KernelSpec(), max(1, n // 2)).values
            lam = np.linalg.eigvalsh(k)
            assert lam.min() >= -1e-9 * lam.max()

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**6))
    def test_translation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(int(rng.integers(3, 30)), int(rng.integers(1, 5))))
        c = rng.normal(scale=10, size=x.shape[1])
        spec = KernelSpec("gauss", float(rng.uniform(0.2, 5)))
        np.testing.assert_allclose(gram(x + c, spec, 2).values, gram(x, spec, 2).values,
                                   rtol=0, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**6))
    def test_median_scale_invariance(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(int(rng.integers(3, 30)), int(rng.integers(1, 5))))
        c = float(rng.uniform(1e-3, 1e3))
        np.testing.assert_allclose(gram(c * x, KernelSpec(), 2).values,
                                   gram(x, KernelSpec(), 2).values, rtol=0, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**6))
    def test_within_group_permutation_conjugates(self, seed):
        rng = np.random.default_rng(seed)
        n1, n2 = int(rng.integers(2, 15)), int(rng.integers(2, 15))
        x = rng.normal(size=(n1 + n2, 2))
        order = np.concatenate([rng.permutation(n1), n1 + rng.permutation(n2)])
        k = gram(x, KernelSpec(), n1).values
        kp = gram(x[order], KernelSpec(), n1).values
        assert np.array_equal(kp, k[np.ix_(order, order)])

    def test_zi_requires_scalar_feature(self):
        with pytest.raises(KernelError):
            gram(np.ones((4, 2)), KernelSpec("zi_gauss"), 2)

    def test_eval_consistency(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(6, 3))
        g = gram(x, KernelSpec("gauss", 1.7), 3).values
        lin = gram(x, KernelSpec("linear"), 3).values
        for a in range(6):
            for b in range(6):
                assert g[a, b] == pytest.approx(eval_gauss(x[a], x[b], 1.7), rel=1e-13)
                assert lin[a, b] == pytest.approx(eval_linear(x[a], x[b]), rel=1e-13, abs=1e-14)
