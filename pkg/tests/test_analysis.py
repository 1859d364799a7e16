import math

import numpy as np
import pytest
from scipy import stats as scipy_stats

from glyphsim.analysis import (AnalysisError, SimilarityDistribution,
                               bonferroni, cohens_d, cross_script_similarity,
                               effect_label, leave_one_out_stability,
                               paired_model_t, run_stat_battery,
                               similarity_matrix, welch_t)
from glyphsim.ensemble import EmbeddingSet


def emb(script, rows, model_id="model_0", ids=None):
    rows = np.asarray(rows, dtype=np.float64)
    ids = ids or [f"g{i}" for i in range(rows.shape[0])]
    return EmbeddingSet(script=script, model_id=model_id, ids=ids, matrix=rows)


class TestCrossScriptSimilarity:
    def test_identical_self_comparison_excludes_self_pairs(self):
        e = emb("a", np.tile([1.0, 2.0, 3.0], (4, 1)))
        dist = cross_script_similarity(e, e)
        assert dist.n == 12  # 16 minus the 4 self pairs
        np.testing.assert_allclose(dist.values, 1.0)
        matrix = similarity_matrix(e, e)
        np.testing.assert_allclose(np.diag(matrix), 1.0)

    def test_orthogonal_one_hots_give_zero(self):
        a = emb("a", np.eye(4)[:2])
        b = emb("b", np.eye(4)[2:])
        dist = cross_script_similarity(a, b)
        np.testing.assert_allclose(dist.values, 0.0, atol=0)

    def test_hand_computed_two_by_one(self):
        a = emb("a", [[1.0, 0.0], [0.0, 1.0]])
        b = emb("b", [[1.0 / math.sqrt(2), 1.0 / math.sqrt(2)]])
        dist = cross_script_similarity(a, b)
        np.testing.assert_allclose(sorted(dist.values),
                                   [math.sqrt(2) / 2] * 2, atol=1e-12)
        assert dist.mean == pytest.approx(0.7071, abs=1e-4)
        assert dist.n == 2

    def test_zero_norm_row_names_the_glyph(self):
        a = emb("a", [[1.0, 0.0], [0.0, 0.0]], ids=["good", "broken"])
        b = emb("b", [[1.0, 0.0]])
        with pytest.raises(AnalysisError, match="broken"):
            cross_script_similarity(a, b)

    def test_symmetric_as_multisets(self, rng):
        a = emb("a", rng.normal(size=(5, 8)))
        b = emb("b", rng.normal(size=(7, 8)))
        ab = np.sort(cross_script_similarity(a, b).values)
        ba = np.sort(cross_script_similarity(b, a).values)
        np.testing.assert_array_equal(ab, ba)

    def test_positive_rescaling_is_exact_for_power_of_two(self, rng):
        a = emb("a", rng.normal(size=(5, 8)))
        b = emb("b", rng.normal(size=(6, 8)))
        scaled = emb("a", a.matrix * 4.0)
        np.testing.assert_array_equal(cross_script_similarity(a, b).values,
                                      cross_script_similarity(scaled, b).values)

    def test_positive_rescaling_invariant_generally(self, rng):
        a = emb("a", rng.normal(size=(5, 8)))
        b = emb("b", rng.normal(size=(6, 8)))
        scaled = emb("a", a.matrix * 3.7)
        np.testing.assert_allclose(cross_script_similarity(a, b).values,
                                   cross_script_similarity(scaled, b).values,
                                   atol=1e-12)

    def test_values_in_unit_interval(self, rng):
        a = emb("a", rng.normal(size=(6, 16)))
        b = emb("b", rng.normal(size=(6, 16)))
        values = cross_script_similarity(a, b).values
        assert values.min() >= -1.0 - 1e-12 and values.max() <= 1.0 + 1e-12


def textbook_welch(a, b):
    """Direct re-evaluation of the two-sample unequal-variance formula."""
    a, b = np.asarray(a), np.asarray(b)
    va, vb = a.var(ddof=1), b.var(ddof=1)
    na, nb = len(a), len(b)
    t = (a.mean() - b.mean()) / math.sqrt(va / na + vb / nb)
    df = (va / na + vb / nb) ** 2 / (
        (va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    p = 2 * scipy_stats.t.sf(abs(t), df)
    return t, p, df


class TestWelch:
    def test_identical_distributions(self):
        a = np.array([0.1, 0.2, 0.3, 0.4])
        result = welch_t(a, a.copy())
        assert result.t == 0.0
        assert result.p == pytest.approx(1.0)

    def test_fully_separated_distributions(self, rng):
        a = np.zeros(30)
        b = 1.0 + rng.normal(0.0, 1e-6, 30)
        result = welch_t(a, b)
        assert abs(result.t) > 1e5
        assert result.p < 1e-30

    def test_matches_direct_formula_and_scipy(self, rng):
        a = rng.normal(0.61, 0.05, 500)
        b = rng.normal(0.07, 0.05, 500)
        result = welch_t(a, b)
        t_ref, p_ref, df_ref = textbook_welch(a, b)
        assert result.t == pytest.approx(t_ref, abs=1e-9)
        assert result.p == pytest.approx(p_ref, abs=1e-9)
        assert result.df == pytest.approx(df_ref, abs=1e-9)
        t_sp, p_sp = scipy_stats.ttest_ind(a, b, equal_var=False)
        assert result.t == pytest.approx(float(t_sp), abs=1e-9)
        assert result.p == pytest.approx(float(p_sp), abs=1e-9)

    def test_antisymmetric_in_t_invariant_in_p(self, rng):
        a = rng.normal(0.5, 0.1, 40)
        b = rng.normal(0.3, 0.2, 25)
        fwd = welch_t(a, b)
        rev = welch_t(b, a)
        assert fwd.t == pytest.approx(-rev.t, abs=1e-12)
        assert fwd.p == pytest.approx(rev.p, abs=1e-12)

    def test_big_distributions_subsampled_to_cap(self, rng):
        a = rng.normal(0.6, 0.05, 5000)
        b = rng.normal(0.1, 0.05, 5000)
        result = welch_t(a, b, subsample_cap=32, seed=3)
        again = welch_t(a, b, subsample_cap=32, seed=3)
        assert result == again  # fixed analysis seed
        assert result.df <= 62  # 32 + 32 - 2: the cap really applied

    def test_degenerate_zero_variance_equal_means(self):
        result = welch_t(np.ones(5), np.ones(5))
        assert result.degenerate
        assert result.t == 0.0 and result.p == 1.0

    def test_degenerate_zero_variance_distinct_means(self):
        result = welch_t(np.ones(5), np.zeros(5))
        assert result.degenerate
        assert math.isinf(result.t) and result.p == 0.0

    def test_too_small_rejected(self):
        with pytest.raises(AnalysisError):
            welch_t([1.0], [1.0, 2.0])


class TestPairedModelT:
    def test_equal_lists_give_zero_t(self):
        result = paired_model_t([0.2, 0.4, 0.5], [0.2, 0.4, 0.5])
        assert result.t == 0.0 and result.p == 1.0

    def test_constant_nonzero_differences_flagged_infinite(self):
        result = paired_model_t([1.0, 2.0, 3.0], [0.5, 1.5, 2.5])
        assert result.degenerate
        assert result.t == math.inf and result.p == 0.0
        assert result.mean_diff == pytest.approx(0.5)

    def test_published_paired_means_fixture(self):
        a = [0.61, 0.61, 0.63, 0.65, 0.68]
        b = [0.06, 0.07, 0.07, 0.07, 0.23]
        result = paired_model_t(a, b)
        assert abs(result.mean_diff - 0.536) < 1e-12
        t_ref, p_ref = scipy_stats.ttest_rel(a, b)
        assert result.t == pytest.approx(float(t_ref), abs=1e-9)
        assert result.p == pytest.approx(float(p_ref), abs=1e-9)
        assert result.df == 4

    def test_single_pair_rejected(self):
        with pytest.raises(AnalysisError):
            paired_model_t([1.0], [2.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(AnalysisError):
            paired_model_t([1.0, 2.0], [1.0, 2.0, 3.0])


class TestCohensD:
    def test_equal_means_give_zero_negligible(self, rng):
        shared = rng.normal(0.0, 1.0, 50)
        result = cohens_d(shared, shared.copy())
        assert result.d == 0.0 and result.label == "negligible"

    def test_hand_computed_d_of_ten(self):
        u = math.sqrt(0.5)
        a = np.array([0.5 - 0.05 * u, 0.5 + 0.05 * u])
        b = np.array([-0.05 * u, 0.05 * u])
        result = cohens_d(a, b)
        assert result.d == pytest.approx(10.0, abs=1e-9)
        assert result.label == "large"

    def test_label_thresholds_match_published_values(self):
        assert effect_label(0.01) == "negligible"
        assert effect_label(0.46) == "small"
        assert effect_label(0.74) == "medium"
        assert effect_label(1.17) == "large"
        assert effect_label(-1.17) == "large"  # label depends on |d|
        assert effect_label(0.2) == "small"
        assert effect_label(0.8) == "large"

    def test_sign_flips_under_swap(self, rng):
        a = rng.normal(0.6, 0.1, 30)
        b = rng.normal(0.2, 0.1, 30)
        fwd = cohens_d(a, b)
        rev = cohens_d(b, a)
        assert fwd.d == pytest.approx(-rev.d, abs=1e-12)
        assert fwd.label == rev.label

    def test_matches_pooled_formula(self, rng):
        a = rng.normal(0.6, 0.04, 40)
        b = rng.normal(0.1, 0.06, 25)
        na, nb = len(a), len(b)
        pooled = math.sqrt(((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1))
                           / (na + nb - 2))
        assert cohens_d(a, b).d == pytest.approx((a.mean() - b.mean()) / pooled,
                                                 abs=1e-12)

    def test_zero_pooled_sd_degenerate(self):
        result = cohens_d(np.ones(4), np.ones(4))
        assert result.degenerate


def test_bonferroni():
    assert bonferroni(0.05, 1) == 0.05
    assert bonferroni(0.05, 45) == pytest.approx(0.0011111111111111111, abs=0)
    assert bonferroni(0.05, 5) == 0.01
    with pytest.raises(AnalysisError):
        bonferroni(0.05, 0)


class TestLeaveOneOut:
    def test_unanimous_ranking_is_stable(self):
        means = {f"model_{i}": {"indus": 0.6 + 0.01 * i, "pc": 0.1, "pe": 0.08}
                 for i in range(5)}
        report = leave_one_out_stability(means)
        assert report.stable
        assert report.full_top == "indus"
        assert report.dissenting_models == []

    def test_two_opposite_models_unstable(self):
        means = {"model_0": {"a": 1.0, "b": 0.0},
                 "model_1": {"a": 0.0, "b": 1.0}}
        report = leave_one_out_stability(means)
        assert not report.stable

    def test_single_dissenter_noted_but_stable(self):
        means = {f"model_{i}": {"a": 0.7, "b": 0.2} for i in range(4)}
        means["model_4"] = {"a": 0.3, "b": 0.4}  # dissenting, but outvoted
        report = leave_one_out_stability(means)
        assert report.stable
        assert report.dissenting_models == ["model_4"]
        # direct recomputation: dropping any one model keeps "a" on top
        for left_out in means:
            rest = [m for m in means if m != left_out]
            mean_a = np.mean([means[m]["a"] for m in rest])
            mean_b = np.mean([means[m]["b"] for m in rest])
            assert (mean_a > mean_b) == (report.leave_out_top[left_out] == "a")

    def test_single_model_rejected(self):
        with pytest.raises(AnalysisError):
            leave_one_out_stability({"model_0": {"a": 1.0}})


class TestBattery:
    def test_counts_and_corrected_alpha(self, rng):
        targets = ["t1", "t2"]
        dists = {}
        for script in ("s1", "s2"):
            for model in ("model_0", "model_1"):
                dists[(script, model, "t1")] = SimilarityDistribution(
                    script, "t1", model, rng.normal(0.6, 0.05, 50))
                dists[(script, model, "t2")] = SimilarityDistribution(
                    script, "t2", model, rng.normal(0.1, 0.05, 50))
        results, corrected = run_stat_battery(dists, targets, alpha=0.05)
        assert len(results) == 4  # 2 scripts x 2 models x 1 target pair
        assert corrected == pytest.approx(0.05 / 4)
        for r in results:
            assert r.significant == (r.p_value < corrected)
            assert r.better_match == "t1"
            assert r.test_name == "t1_vs_t2"
            assert r.effect_label == effect_label(r.cohens_d)

    def test_difference_consistency(self, rng):
        dists = {
            ("s", "model_0", "t1"): SimilarityDistribution(
                "s", "t1", "model_0", rng.normal(0.5, 0.1, 40)),
            ("s", "model_0", "t2"): SimilarityDistribution(
                "s", "t2", "model_0", rng.normal(0.2, 0.1, 40)),
        }
        results, _ = run_stat_battery(dists, ["t1", "t2"])
        r = results[0]
        assert r.difference == pytest.approx(r.mean1 - r.mean2, abs=0)
