import numpy as np
import pytest

from rdtrial.methods import METHOD_NAMES, MethodUsageError, apply_method
from rdtrial.trialdata import TrialDataset


def random_dataset(seed, n=60, beta_cov=0.4):
    rng = np.random.default_rng(seed)
    arm = (rng.random(n) < 0.5).astype(float)
    x1 = (rng.random(n) < 0.5).astype(float)
    x2 = (rng.random(n) < 0.5).astype(float)
    lp = -1.0 + 0.5 * arm + beta_cov * (x1 + x2)
    y = (rng.random(n) < 1 / (1 + np.exp(-lp))).astype(float)
    return TrialDataset(y=y, arm=arm,
                        covariates={"X1": x1, "X2": x2},
                        cov_types={"X1": "categorical", "X2": "categorical"})


class TestApplyMethod:
    def test_ten_methods_listed(self):
        assert len(METHOD_NAMES) == 10

    def test_all_methods_run(self):
        d = random_dataset(1)
        for m in METHOD_NAMES:
            covs = [] if m == "suissa" else ["X1", "X2"]
            res = apply_method(d, covs, m, seed=3)
            assert 0.0 <= res.p_value <= 1.0, m

    def test_suissa_rejects_covariates(self):
        d = random_dataset(2)
        with pytest.raises(MethodUsageError):
            apply_method(d, ["X1"], "suissa")

    def test_suissa_estimate_is_difference_in_proportions(self):
        d = random_dataset(3)
        res = apply_method(d, [], "suissa")
        k1, n1, k0, n0 = d.arm_counts()
        assert res.estimate == pytest.approx(k1 / n1 - k0 / n0, abs=1e-12)
        assert np.isnan(res.se)

    def test_mh_test_has_no_estimate(self):
        d = random_dataset(4)
        res = apply_method(d, ["X1", "X2"], "mh-test")
        assert np.isnan(res.estimate)
        assert res.estimand == "CTE"

    def test_mh_variants_estimand_labels(self):
        d = random_dataset(5)
        assert apply_method(d, ["X1"], "mh-sato").estimand == "CPATE"
        assert apply_method(d, ["X1"], "mh-mgr").estimand == "MTE"

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            apply_method(random_dataset(6), [], "anova")

    def test_single_stratum_mh_rd_matches_unadjusted(self):
        d = random_dataset(7)
        res = apply_method(d, [], "mh-sato")
        k1, n1, k0, n0 = d.arm_counts()
        assert res.estimate == pytest.approx(k1 / n1 - k0 / n0, abs=1e-12)
