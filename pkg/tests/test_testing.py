from __future__ import annotations

import numpy as np
import pytest

from kerneltest.ingest import Dataset, IngestError
from kerneltest.kernels import KernelSpec, gram
from kerneltest.kfda import eigendecompose, kfda_statistic
from kerneltest.simulate import generate_scenario, load_preset
from kerneltest.testing import de_test, feature_statistics, global_test


def _dataset(values, labels):
    values = np.asarray(values, dtype=float)
    n, g = values.shape
    return Dataset(values, [f"c{i:02d}" for i in range(n)], [f"g{j}" for j in range(g)],
                   list(labels))


class TestGlobal:
    def test_duplicated_blocks(self):
        block = np.random.default_rng(0).normal(size=(15, 4))
        d = _dataset(np.vstack([block, block]), ["A"] * 15 + ["B"] * 15)
        result, cells, conds = global_test(d)
        assert result.df == 10
        assert result.d2 == pytest.approx(0.0, abs=1e-9)
        assert result.pvalue == pytest.approx(1.0)
        assert conds == ["A"] * 15 + ["B"] * 15
        assert cells == d.cell_ids

    def test_condition_order_flips_projection_blocks(self):
        rng = np.random.default_rng(1)
        x = np.vstack([rng.normal(size=(12, 3)), rng.normal(1.0, size=(12, 3))])
        d = _dataset(x, ["A"] * 12 + ["B"] * 12)
        a, _, _ = global_test(d, T=4)
        b, cells, conds = global_test(d, T=4, order=["B", "A"])
        assert b.d2 == pytest.approx(a.d2, rel=1e-10)
        assert conds[0] == "B"
        np.testing.assert_allclose(b.projections[:12], -a.projections[12:], atol=1e-8)

    def test_needs_two_cells(self):
        d = _dataset(np.arange(4.0)[:, None], ["A", "B", "B", "B"])
        with pytest.raises(IngestError):
            global_test(d)


class TestFeatureStatistics:
    def test_matches_single_feature_models(self):
        d = generate_scenario(load_preset("desk").with_sizes(20, 25, {"DE": 4, "H0_bimodal": 4}), 1)
        fs = feature_statistics(d.values, 20, truncations=(1, 4))
        for j in range(d.n_features):
            model = eigendecompose(gram(d.values[:, j], KernelSpec(), 20))
            assert fs.rank[j] == model.rank
            for k, T in enumerate((1, 4)):
                if T > model.rank:
                    assert np.isnan(fs.d2[j, k])
                else:
                    assert fs.d2[j, k] == pytest.approx(kfda_statistic(model, T).d2, rel=1e-8)

    def test_thread_independent(self):
        d = generate_scenario(load_preset("desk").with_sizes(15, 15), 2)
        a = feature_statistics(d.values, 15, threads=1)
        b = feature_statistics(d.values, 15, threads=4)
        assert a.d2.tobytes() == b.d2.tobytes()


class TestDe:
    def test_degenerate_and_rank(self):
        rng = np.random.default_rng(3)
        x = np.column_stack([np.full(10, 2.0), rng.normal(size=10),
                             np.r_[np.zeros(9), 1.0]])
        d = _dataset(x, ["A"] * 5 + ["B"] * 5)
        res = de_test(d, T=4)
        assert [r.feature for r in res] == ["g0", "g1", "g2"]
        assert np.isnan(res[0].pvalue) and res[0].warnings == ["degenerate"]
        assert np.isfinite(res[1].pvalue) and res[1].padj == pytest.approx(res[1].pvalue)
        assert np.isnan(res[2].pvalue) and res[2].warnings[0].startswith("rank")

    def test_padj_bounds(self):
        d = generate_scenario(load_preset("desk").with_sizes(20, 20, {"DE": 5, "H0_unimodal": 5}), 4)
        res = de_test(d)
        for r in res:
            if np.isfinite(r.pvalue):
                assert r.pvalue <= r.padj <= 1.0
                assert r.df == 4

    def test_permutation_per_feature(self):
        d = generate_scenario(load_preset("desk").with_sizes(12, 12, {"DE": 2, "H0_unimodal": 2}), 5)
        a = de_test(d, method="permutation", B=49, seed=1)
        b = de_test(d, method="permutation", B=49, seed=1, threads=4)
        assert [r.pvalue for r in a] == [r.pvalue for r in b]
        assert all(r.method == "permutation" for r in a)

    def test_zi_gauss_known_dropout(self):
        d = generate_scenario(load_preset("desk").with_sizes(20, 20, {"DB": 2, "H0_unimodal": 2}), 6)
        res = de_test(d, KernelSpec("zi_gauss"), T=3)
        assert all(0.0 <= r.pvalue <= 1.0 for r in res if np.isfinite(r.pvalue))
