import numpy as np
import pytest

from rdtrial.glm import (
    DegenerateLeverageError,
    DesignError,
    DesignMatrix,
    batched_fit_ml,
    build_design,
    detect_separation,
    fit_firth_flic,
    fit_ml,
    hc3_covariance,
    penalized_loglik,
)
from rdtrial.numerics import logit
from rdtrial.trialdata import TrialDataset


def random_dataset(seed, n=40, beta_cov=0.0):
    rng = np.random.default_rng(seed)
    arm = (rng.random(n) < 0.5).astype(float)
    x1 = (rng.random(n) < 0.5).astype(float)
    x2 = (rng.random(n) < 0.5).astype(float)
    lp = -1.0 + 0.5 * arm + beta_cov * (x1 + x2)
    y = (rng.random(n) < 1 / (1 + np.exp(-lp))).astype(float)
    return TrialDataset(y=y, arm=arm,
                        covariates={"X1": x1, "X2": x2},
                        cov_types={"X1": "categorical", "X2": "categorical"})


class TestBuildDesign:
    def test_columns_and_names(self):
        d = random_dataset(0)
        x = build_design(d, ["X1", "X2"])
        assert x.names[:2] == ("(intercept)", "arm")
        assert x.p == 4
        assert np.all(x.matrix[:, 0] == 1.0)

    def test_unknown_covariate(self):
        d = random_dataset(0)
        with pytest.raises(DesignError):
            build_design(d, ["Z"])

    def test_with_arm_forces_column(self):
        d = random_dataset(0)
        x = build_design(d, [])
        assert np.all(x.with_arm(1.0)[:, 1] == 1.0)
        assert np.all(x.with_arm(0.0)[:, 1] == 0.0)
        # original untouched
        assert np.any(x.matrix[:, 1] == 0.0) and np.any(x.matrix[:, 1] == 1.0)

    def test_multilevel_categorical_reference_coded(self):
        n = 12
        d = TrialDataset(
            y=[0, 1] * 6, arm=[0, 1] * 6,
            covariates={"G": np.array([0.0, 1, 2, 0, 1, 2] * 2)},
            cov_types={"G": "categorical"},
        )
        x = build_design(d, ["G"])
        assert x.p == 4
        assert "G=1" in x.names and "G=2" in x.names
        assert x.matrix.shape == (n, 4)


class TestFitMl:
    def test_intercept_only(self):
        y = np.array([1.0] * 3 + [0.0] * 7)
        x = DesignMatrix(matrix=np.ones((10, 1)), names=("(intercept)",))
        fit = fit_ml(x, y)
        assert fit.converged
        assert fit.beta[0] == pytest.approx(logit(0.3), abs=1e-8)

    def test_two_cell_saturated(self):
        arm = np.repeat([0.0, 1.0], 10)
        y = np.concatenate([[1, 1, 0, 0, 0, 0, 0, 0, 0, 0],
                            [1, 1, 1, 1, 1, 0, 0, 0, 0, 0]]).astype(float)
        d = TrialDataset(y=y, arm=arm)
        x = build_design(d, [])
        fit = fit_ml(x, d.y)
        assert fit.converged
        assert fit.beta[0] == pytest.approx(logit(0.2), abs=1e-7)
        assert fit.beta[1] == pytest.approx(logit(0.5) - logit(0.2), abs=1e-7)

    def test_perfect_predictor_flags_separation(self):
        rng = np.random.default_rng(5)
        n = 30
        arm = (rng.random(n) < 0.5).astype(float)
        x1 = (rng.random(n) < 0.5).astype(float)
        d = TrialDataset(y=x1.copy(), arm=arm, covariates={"X1": x1},
                         cov_types={"X1": "categorical"})
        x = build_design(d, ["X1"])
        fit = fit_ml(x, d.y)
        assert fit.separation

    def test_rank_deficient_design(self):
        d = random_dataset(1)
        dup = DesignMatrix(
            matrix=np.column_stack([np.ones(d.n), d.arm, d.arm]),
            names=("(intercept)", "arm", "arm_copy"),
        )
        with pytest.raises(DesignError):
            fit_ml(dup, d.y)

    def test_needs_more_rows_than_columns(self):
        x = DesignMatrix(matrix=np.column_stack([np.ones(3), [0.0, 1, 0], [1.0, 0, 0]]),
                         names=("a", "b", "c"))
        with pytest.raises(DesignError):
            fit_ml(x, np.array([0.0, 1.0, 0.0]))

    def test_hat_sums_to_p(self):
        d = random_dataset(2, beta_cov=0.4)
        x = build_design(d, ["X1", "X2"])
        fit = fit_ml(x, d.y)
        assert float(np.sum(fit.hat)) == pytest.approx(x.p, abs=1e-8)

    def test_cov_matches_inverse_information(self):
        d = random_dataset(3)
        x = build_design(d, ["X1"])
        fit = fit_ml(x, d.y)
        w = fit.fitted * (1 - fit.fitted)
        info = x.matrix.T @ (x.matrix * w[:, None])
        assert np.allclose(fit.cov_model.entries @ info, np.eye(x.p), atol=1e-8)


class TestDetectSeparation:
    def test_interior_probabilities_false(self):
        d = random_dataset(7, beta_cov=0.3)
        x = build_design(d, ["X1", "X2"])
        fit = fit_ml(x, d.y)
        if np.all((fit.fitted > 0.05) & (fit.fitted < 0.95)):
            assert not fit.separation

    def test_boundary_probability_true(self):
        d = random_dataset(8)
        x = build_design(d, [])
        fit = fit_ml(x, d.y)
        rigged = fit.fitted.copy()
        rigged[0] = 1 - 1e-9
        from dataclasses import replace
        assert detect_separation(replace(fit, fitted=rigged))

    def test_large_coefficient_true(self):
        d = random_dataset(9)
        x = build_design(d, [])
        fit = fit_ml(x, d.y)
        from dataclasses import replace
        big = fit.beta.copy()
        big[1] = 20.0
        assert detect_separation(replace(fit, beta=big))


class TestFirthFlic:
    def test_intercept_only_all_zero(self):
        # stage 1 solves p = (0 + 1/2)/(n + 1); FLIC stage is unbounded
        y = np.zeros(10)
        x = DesignMatrix(matrix=np.ones((10, 1)), names=("(intercept)",))
        fit = fit_firth_flic(x, y)
        assert fit.flic_unbounded
        assert fit.beta[0] == pytest.approx(-3.0445224, abs=1e-6)

    def test_flic_matches_event_rate(self):
        d = random_dataset(12, beta_cov=0.7)
        x = build_design(d, ["X1", "X2"])
        fit = fit_firth_flic(x, d.y)
        assert float(np.mean(fit.fitted)) == pytest.approx(float(np.mean(d.y)), abs=1e-8)

    def test_separated_data_finite(self):
        rng = np.random.default_rng(5)
        n = 30
        arm = (rng.random(n) < 0.5).astype(float)
        x1 = (rng.random(n) < 0.5).astype(float)
        d = TrialDataset(y=x1.copy(), arm=arm, covariates={"X1": x1},
                         cov_types={"X1": "categorical"})
        x = build_design(d, ["X1"])
        fit = fit_firth_flic(x, d.y)
        assert np.all(np.isfinite(fit.beta))
        assert float(np.max(np.abs(fit.beta))) < 15

    def test_penalized_loglik_increases(self):
        d = random_dataset(13, beta_cov=0.5)
        x = build_design(d, ["X1"])
        fit = fit_firth_flic(x, d.y)
        start = np.zeros(x.p)
        start[0] = logit(min(max(float(np.mean(d.y)), 1e-3), 1 - 1e-3))
        # optimum of the penalized likelihood is at the stage-1 solution; the
        # FLIC intercept moves it, but never below the IRLS start
        assert penalized_loglik(x, d.y, fit.beta) >= penalized_loglik(x, d.y, start) - 1e-6


class TestHc3:
    def test_constant_leverage_scaling(self):
        # intercept+treatment with 4 subjects per arm: every hat value is 1/4,
        # so HC3 equals the raw sandwich scaled by (1 - 1/4)^-2
        arm = np.repeat([0.0, 1.0], 4)
        y = np.array([1.0, 0, 0, 0, 1, 1, 0, 0])
        d = TrialDataset(y=y, arm=arm)
        x = build_design(d, [])
        fit = fit_ml(x, d.y)
        assert np.allclose(fit.hat, 0.25, atol=1e-9)
        vhc3 = hc3_covariance(x, y, fit)
        r = y - fit.fitted
        meat0 = x.matrix.T @ (x.matrix * (r * r)[:, None])
        raw = fit.cov_model.entries @ meat0 @ fit.cov_model.entries
        assert np.allclose(vhc3.entries, raw / 0.75**2, atol=1e-12)

    def test_perfect_fit_gives_zero(self):
        d = random_dataset(20)
        x = build_design(d, [])
        fit = fit_ml(x, d.y)
        from dataclasses import replace
        rigged = replace(fit, fitted=d.y.astype(float), hat=fit.hat)
        assert np.allclose(hc3_covariance(x, d.y, rigged).entries, 0.0, atol=1e-30)

    def test_symmetric_output(self):
        d = random_dataset(21, beta_cov=0.6)
        x = build_design(d, ["X1", "X2"])
        fit = fit_ml(x, d.y)
        v = hc3_covariance(x, d.y, fit).entries
        assert np.max(np.abs(v - v.T)) <= 1e-12 * max(1.0, np.max(np.abs(v)))

    def test_unit_leverage_raises(self):
        d = random_dataset(22)
        x = build_design(d, [])
        fit = fit_ml(x, d.y)
        from dataclasses import replace
        bad_hat = fit.hat.copy()
        bad_hat[3] = 1.0
        with pytest.raises(DegenerateLeverageError) as exc:
            hc3_covariance(x, d.y, replace(fit, hat=bad_hat))
        assert exc.value.row == 3


class TestBatchedFitMl:
    def test_matches_sequential(self):
        rng = np.random.default_rng(31)
        B, n = 6, 50
        datasets = [random_dataset(100 + b, n=n, beta_cov=0.4) for b in range(B)]
        designs = [build_design(d, ["X1", "X2"]) for d in datasets]
        x3 = np.stack([x.matrix for x in designs])
        y2 = np.stack([d.y for d in datasets])
        beta, fitted, converged = batched_fit_ml(x3, y2)
        for b in range(B):
            fit = fit_ml(designs[b], datasets[b].y)
            assert converged[b] == fit.converged
            if fit.converged:
                assert np.allclose(beta[b], fit.beta, atol=1e-6)

    def test_singular_batch_marked_unconverged(self):
        n = 10
        x3 = np.ones((2, n, 2))
        x3[0, :, 1] = np.arange(n) % 2
        # replicate 1: duplicated column, singular normal equations
        y2 = np.array([[0, 1, 1, 0, 1, 0, 0, 1, 0, 1],
                       [0, 1, 1, 0, 1, 0, 0, 1, 0, 1]], dtype=float)
        beta, fitted, converged = batched_fit_ml(x3, y2)
        assert converged[0]
        assert not converged[1]
