import numpy as np
import pytest

from rdtrial.mh import (
    MANTEL_FLEISS_MIN,
    DegenerateTableError,
    StratumStructureError,
    mantel_fleiss,
    mh_rd,
    mh_test,
)
from rdtrial.trialdata import Stratum, StratumTable


def table(*strata):
    return StratumTable(tuple(
        Stratum(key=(i,), x1=s[0], n1=s[1], x0=s[2], n0=s[3])
        for i, s in enumerate(strata)
    ))


class TestMhTest:
    def test_balanced_single_stratum(self):
        res = mh_test(table((3, 10, 3, 10)))
        assert res.chi2 == 0.0
        assert res.p_value == 1.0

    def test_single_stratum_hand_arithmetic(self):
        # E = 10*4/20 = 2, var = 10*10*4*16/(400*19) = 16/19,
        # chi2 = (3-2)^2 / var = 19/16 = 1.1875
        res = mh_test(table((3, 10, 1, 10)))
        assert res.chi2 == pytest.approx(1.1875, abs=1e-12)

    def test_zero_variance_stratum_skipped(self):
        base = mh_test(table((3, 10, 1, 10)))
        both = mh_test(table((3, 10, 1, 10), (0, 5, 0, 5)))
        assert both.chi2 == pytest.approx(base.chi2, abs=1e-12)
        assert both.strata_skipped == 1
        assert both.strata_used == 1

    def test_all_degenerate_raises(self):
        with pytest.raises(DegenerateTableError):
            mh_test(table((0, 5, 0, 5), (5, 5, 5, 5)))

    def test_stratum_reordering_invariance(self):
        a = mh_test(table((3, 10, 1, 10), (5, 8, 2, 12)))
        b = mh_test(table((5, 8, 2, 12), (3, 10, 1, 10)))
        assert a.chi2 == pytest.approx(b.chi2, abs=1e-12)


class TestMantelFleiss:
    def test_ample_counts(self):
        res = mantel_fleiss(table((25, 50, 25, 50)))
        assert res["margin"] == pytest.approx(25.0, abs=1e-12)
        assert res["satisfied"]

    def test_sparse_counts(self):
        res = mantel_fleiss(table((1, 3, 1, 3)))
        assert res["margin"] == pytest.approx(1.0, abs=1e-12)
        assert not res["satisfied"]

    def test_duplication_doubles_margin(self):
        one = mantel_fleiss(table((3, 10, 1, 10)))
        two = mantel_fleiss(table((3, 10, 1, 10), (3, 10, 1, 10)))
        assert two["margin"] == pytest.approx(2 * one["margin"], abs=1e-12)

    def test_threshold_constant(self):
        assert MANTEL_FLEISS_MIN == 5.0


class TestMhRd:
    def test_single_stratum_collapses(self):
        res = mh_rd(table((3, 10, 1, 10)))
        assert res.estimate == pytest.approx(0.2, abs=1e-12)

    def test_identical_strata_keep_common_difference(self):
        res = mh_rd(table((3, 10, 1, 10), (3, 10, 1, 10)))
        assert res.estimate == pytest.approx(0.2, abs=1e-12)

    def test_two_strata_hand_arithmetic(self):
        # weights (5, 4.8); estimate (5*0.2 + 4.8*(0.625 - 1/6))/9.8
        res = mh_rd(table((3, 10, 1, 10), (5, 8, 2, 12)), variance_kind="sato")
        assert res.estimate == pytest.approx(0.326531, abs=1e-6)
        assert res.variance == pytest.approx(0.0183278226, abs=1e-9)
        assert res.estimand == "CPATE"

    def test_mgr_single_stratum_matches_binomial_form(self):
        x1, n1, x0, n0 = 3, 10, 1, 10
        res = mh_rd(table((x1, n1, x0, n0)), variance_kind="mgr")
        p1, p0 = x1 / n1, x0 / n0
        want = p1 * (1 - p1) / n1 + p0 * (1 - p0) / n0
        assert res.variance == pytest.approx(want, abs=1e-12)
        assert res.estimand == "MTE"
        assert res.variance_note != ""

    def test_reordering_invariance(self):
        a = mh_rd(table((3, 10, 1, 10), (5, 8, 2, 12)))
        b = mh_rd(table((5, 8, 2, 12), (3, 10, 1, 10)))
        assert a.estimate == pytest.approx(b.estimate, abs=1e-12)
        assert a.variance == pytest.approx(b.variance, abs=1e-12)

    def test_merging_identical_strata_preserves_estimate(self):
        split = mh_rd(table((3, 10, 1, 10), (3, 10, 1, 10)))
        merged = mh_rd(table((6, 20, 2, 20)))
        assert split.estimate == pytest.approx(merged.estimate, abs=1e-12)

    def test_empty_arm_stratum_rejected(self):
        with pytest.raises(StratumStructureError) as exc:
            mh_rd(table((3, 10, 1, 10), (0, 4, 0, 0)))
        assert exc.value.key == (1,)

    def test_ci_truncated_to_unit_interval(self):
        res = mh_rd(table((2, 2, 0, 2)))
        assert -1.0 <= res.ci[0] <= res.ci[1] <= 1.0

    def test_unknown_variance_kind(self):
        with pytest.raises(ValueError):
            mh_rd(table((3, 10, 1, 10)), variance_kind="other")
