import numpy as np
import pytest
from scipy import stats

from diffpath.analysis import (anova_oneway, category_centers, l2_distance,
                               parts_topk, portion_hot, ranking_overlap,
                               saliency_map, scalarize)
from diffpath.errors import LayerNotFoundError, ShapeError
from diffpath.pathways import (LayerPathwayAggregate, PathwayOptions,
                               PathwayResult, extract_pathways)
from diffpath.runtime import forward_trace

from oracles import anova_by_hand


def agg_of(values):
    return LayerPathwayAggregate(0, "conv1", np.asarray(values, np.float32))


class TestPartsTopk:
    def test_hand_case(self):
        # pixel (0,0): channels [3,1,2] -> top2 = 0,2
        # pixel (0,1): tie between 0 and 1 -> lower index first
        # pixel (1,0): all non-positive -> unassigned
        # pixel (1,1): only channel 1 positive -> second slot unassigned
        a = np.array([[[3, 1, 2], [5, 5, 0]],
                      [[0, -1, -2], [-3, 4, 0]]], np.float32)
        pa = parts_topk(agg_of(a), 2)
        assert pa.winners[0, 0].tolist() == [0, 2]
        assert pa.winners[0, 1].tolist() == [0, 1]
        assert pa.winners[1, 0].tolist() == [-1, -1]
        assert pa.winners[1, 1].tolist() == [1, -1]
        assert pa.pixel_counts.tolist() == [2, 2, 1]
        np.testing.assert_allclose(pa.area_ratios, [0.5, 0.5, 0.25])

    def test_k_bounds(self):
        a = agg_of(np.ones((2, 2, 3)))
        with pytest.raises(ShapeError):
            parts_topk(a, 0)
        with pytest.raises(ShapeError):
            parts_topk(a, 4)

    def test_ratio_invariants(self):
        rng = np.random.default_rng(1)
        a = agg_of(rng.normal(size=(5, 7, 6)))
        for k in (1, 3, 6):
            pa = parts_topk(agg_of(a.values), k)
            assert pa.area_ratios.min() >= 0
            assert pa.area_ratios.max() <= 1
            assert pa.area_ratios.sum() <= k + 1e-12
            assert pa.pixel_counts.sum() == int((pa.winners >= 0).sum())

    def test_all_positive_k1_partitions(self):
        rng = np.random.default_rng(2)
        a = agg_of(np.abs(rng.normal(size=(4, 4, 3))) + 0.1)
        pa = parts_topk(agg_of(a.values), 1)
        assert pa.pixel_counts.sum() == 16
        assert pa.area_ratios.sum() == pytest.approx(1.0)


class TestSaliency:
    def result(self):
        a = np.array([[[1, 5], [2, 2]], [[0, -1], [3, 0]]], np.float32)
        b = np.zeros((1, 1, 2), np.float32)
        return PathwayResult([LayerPathwayAggregate(0, "conv1", a),
                              LayerPathwayAggregate(2, "maxpl1", b)],
                             PathwayOptions())

    def test_max_over_channels(self):
        heat, norm = saliency_map(self.result(), layer="conv1")
        np.testing.assert_array_equal(heat, [[5, 2], [0, 3]])
        assert norm.min() == 0.0 and norm.max() == 1.0
        np.testing.assert_allclose(norm, [[1, 0.4], [0, 0.6]])

    def test_default_is_last_layer_and_flat_norm(self):
        heat, norm = saliency_map(self.result())
        assert heat.shape == (1, 1)
        assert norm.max() == 0.0  # constant map normalizes to zeros

    def test_lookup(self):
        heat_by_index, _ = saliency_map(self.result(), layer=0)
        heat_by_name, _ = saliency_map(self.result(), layer="conv1")
        np.testing.assert_array_equal(heat_by_index, heat_by_name)
        with pytest.raises(LayerNotFoundError):
            saliency_map(self.result(), layer="conv9")


class TestPortionHot:
    def test_layout_and_range(self, toy):
        model, weights = toy
        img = np.random.default_rng(3).normal(0, 1, model.input_shape).astype(np.float32)
        res = extract_pathways(model, weights, img)
        vec = portion_hot(res, k=3)
        channels = model.pathway_channels()
        assert vec.values.shape == (sum(channels),)
        assert [c for _, c in vec.layout] == channels
        assert vec.values.min() >= 0.0
        assert vec.values.max() <= 1.0

    def test_hand_values(self):
        a = np.array([[[2, 1], [-1, 3]]], np.float32)  # 1x2 map, 2 channels
        res = PathwayResult([LayerPathwayAggregate(0, "conv1", a)], PathwayOptions())
        vec = portion_hot(res, k=1)
        # winners: pixel0 -> ch0, pixel1 -> ch1
        np.testing.assert_allclose(vec.values, [0.5, 0.5])

    def test_empty_rejected(self):
        with pytest.raises(LayerNotFoundError):
            portion_hot(PathwayResult([], PathwayOptions()))


class TestDistance:
    def vec(self, vals, k=3):
        from diffpath.analysis import PortionHotVector
        return PortionHotVector(np.asarray(vals, np.float64), k, [("l", len(vals))])

    def test_three_four_five(self):
        assert l2_distance(self.vec([0, 0]), self.vec([3, 4])) == 5.0

    def test_self_zero_and_symmetry(self):
        rng = np.random.default_rng(4)
        a, b = self.vec(rng.random(8)), self.vec(rng.random(8))
        assert l2_distance(a, a) == 0.0
        assert l2_distance(a, b) == l2_distance(b, a)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a, b, c = (self.vec(rng.random(6)) for _ in range(3))
            assert l2_distance(a, c) <= l2_distance(a, b) + l2_distance(b, c) + 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            l2_distance(self.vec([1, 2]), self.vec([1, 2, 3]))
        with pytest.raises(ShapeError):
            l2_distance(self.vec([1, 2], k=3), self.vec([1, 2], k=5))


class TestCenters:
    def test_hand_means(self):
        vecs = [np.array([0.0, 0.0]), np.array([2.0, 0.0]),
                np.array([0.0, 4.0]), np.array([0.0, 8.0])]
        centers, globalc = category_centers(vecs, [0, 0, 1, 1])
        np.testing.assert_array_equal(centers[0], [1, 0])
        np.testing.assert_array_equal(centers[1], [0, 6])
        np.testing.assert_array_equal(globalc, [0.5, 3])

    def test_errors(self):
        with pytest.raises(ShapeError):
            category_centers([], [])
        with pytest.raises(ShapeError):
            category_centers([np.zeros(2)], [0, 1])


class TestAnova:
    def test_two_by_two_f_is_eight(self):
        res = anova_oneway([[0.0, 1.0], [2.0, 3.0]])
        assert res.f_stat == pytest.approx(8.0, abs=1e-9)
        assert res.df_between == 1 and res.df_within == 2

    def test_critical_values(self):
        res = anova_oneway([np.arange(6)] * 10)  # df 9, 50
        assert res.df_between == 9 and res.df_within == 50
        assert res.critical == pytest.approx(2.08, abs=0.01)
        big = anova_oneway([np.arange(400)] * 3)  # df 2, 1197
        assert big.critical == pytest.approx(3.00, abs=0.01)

    def test_matches_hand_formula_and_scipy(self):
        rng = np.random.default_rng(6)
        for trial in range(10):
            groups = [rng.normal(loc=rng.normal(), size=rng.integers(3, 12))
                      for _ in range(int(rng.integers(2, 6)))]
            res = anova_oneway(groups)
            f_hand, df_b, df_w = anova_by_hand(groups)
            assert (res.df_between, res.df_within) == (df_b, df_w)
            assert res.f_stat == pytest.approx(float(f_hand), rel=1e-9)
            f_scipy = stats.f_oneway(*groups).statistic
            assert res.f_stat == pytest.approx(float(f_scipy), rel=1e-8)

    def test_significance_flag(self):
        far = anova_oneway([np.zeros(10), np.zeros(10) + 5 + np.arange(10) * 0.01])
        assert far.significant
        rng = np.random.default_rng(7)
        same = anova_oneway([rng.normal(size=50), rng.normal(size=50)])
        assert same.significant == (same.f_stat > same.critical)

    def test_degenerate_groups(self):
        inf = anova_oneway([[1.0, 1.0], [2.0, 2.0]])
        assert np.isinf(inf.f_stat) and inf.infinite and inf.significant
        flat = anova_oneway([[1.0, 1.0], [1.0, 1.0]])
        assert flat.f_stat == 0.0 and not flat.infinite and not flat.significant

    def test_input_errors(self):
        with pytest.raises(ShapeError):
            anova_oneway([[1.0, 2.0]])
        with pytest.raises(ShapeError):
            anova_oneway([[1.0], [1.0]])
        with pytest.raises(ShapeError):
            anova_oneway([[1.0], []])

    def test_json_round_trip(self):
        res = anova_oneway([[0.0, 1.0], [2.0, 3.0]])
        d = res.to_json()
        assert d["f_stat"] == res.f_stat
        assert d["significant"] == res.significant
        assert set(d) == {"f_stat", "df_between", "df_within", "alpha",
                          "critical", "significant", "infinite"}


class TestScalarize:
    def test_hand_case(self):
        out = scalarize([np.array([0.0, 0.0]), np.array([2.0, 0.0])])
        np.testing.assert_allclose(out, [1.0, 1.0])

    def test_errors(self):
        with pytest.raises(ShapeError):
            scalarize([])
        with pytest.raises(ValueError):
            scalarize([np.zeros(2)], method="sum")


class TestRankingOverlap:
    def test_full_n_is_full_overlap(self, toy):
        model, weights = toy
        img = np.random.default_rng(8).normal(0, 1, model.input_shape).astype(np.float32)
        trace = forward_trace(model, weights, img)
        res = extract_pathways(model, weights, img, trace=trace)
        assert ranking_overlap(res, model, weights, trace, "conv1", n=2) == 2

    def test_range_and_determinism(self, tiny):
        model, weights = tiny
        img = np.random.default_rng(9).normal(0, 1, model.input_shape).astype(np.float32)
        trace = forward_trace(model, weights, img)
        res = extract_pathways(model, weights, img, trace=trace)
        for layer in ("conv2", "maxpl3"):
            for smallest in (False, True):
                a = ranking_overlap(res, model, weights, trace, layer,
                                    n=5, smallest=smallest)
                b = ranking_overlap(res, model, weights, trace, layer,
                                    n=5, smallest=smallest)
                assert a == b
                assert 0 <= a <= 5

    def test_n_bounds(self, toy):
        model, weights = toy
        img = np.random.default_rng(10).normal(0, 1, model.input_shape).astype(np.float32)
        trace = forward_trace(model, weights, img)
        res = extract_pathways(model, weights, img, trace=trace)
        with pytest.raises(ShapeError):
            ranking_overlap(res, model, weights, trace, "conv1", n=3)
