import csv
import io
import math

import numpy as np
import pytest

from chromapraise.mixedmodel import (
    DesignData,
    SingularityError,
    check_full_rank,
    coef_csv,
    coef_report,
    fit,
    group_variance_se,
    is_binary,
    profile_ci,
    profiled_deviance,
    r_squared,
    render_coef_table,
)


def dense_profile(y, X, groups, lam, reml=False):
    """Deviance via an explicit N x N covariance matrix."""
    _, inv = np.unique(groups, return_inverse=True)
    n, p = X.shape
    z = (inv[:, None] == np.arange(inv.max() + 1)[None, :]).astype(float)
    v = np.eye(n) + lam * z @ z.T
    vi = np.linalg.inv(v)
    xtvx = X.T @ vi @ X
    beta = np.linalg.solve(xtvx, X.T @ vi @ y)
    r = y - X @ beta
    quad = float(r @ vi @ r)
    if reml:
        dof = n - p
        s2 = quad / dof
        dev = (
            dof * np.log(2 * np.pi * s2)
            + np.linalg.slogdet(v)[1]
            + np.linalg.slogdet(xtvx)[1]
            + dof
        )
    else:
        s2 = quad / n
        dev = n * np.log(2 * np.pi * s2) + np.linalg.slogdet(v)[1] + n
    return float(dev), beta, s2


def simulate(J=10, n_per=40, sigma_u=0.7, sigma_e=0.5, seed=0, beta=(2.0, 0.5, -0.3)):
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta, dtype=float)
    n = J * n_per
    X = np.column_stack([np.ones(n), rng.normal(size=(n, len(beta) - 1))])
    groups = np.repeat(np.arange(J), n_per)
    u = rng.normal(0.0, sigma_u, J)
    y = X @ beta + u[groups] + rng.normal(0.0, sigma_e, n)
    names = ["Intercept"] + [f"x{i}" for i in range(1, len(beta))]
    return DesignData(y, X, groups, names)


class TestDesignData:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            DesignData(np.ones(3), np.ones((4, 1)), np.zeros(3), ["a"])
        with pytest.raises(ValueError):
            DesignData(np.ones(3), np.ones((3, 1)), np.zeros(3), ["a", "b"])

    def test_rejects_more_columns_than_rows(self):
        with pytest.raises(ValueError, match="more rows"):
            DesignData(np.ones(2), np.ones((2, 2)), np.zeros(2), ["a", "b"])

    def test_rejects_non_finite(self):
        y = np.array([1.0, np.nan, 2.0])
        with pytest.raises(ValueError, match="finite"):
            DesignData(y, np.ones((3, 1)), np.zeros(3), ["a"])

    def test_duplicate_column_named_in_error(self):
        X = np.column_stack([np.ones(6), np.arange(6.0), np.arange(6.0)])
        with pytest.raises(SingularityError, match="dup"):
            DesignData(np.ones(6), X, np.zeros(6), ["Intercept", "x", "dup"])

    def test_constant_column_with_intercept_is_singular(self):
        X = np.column_stack([np.ones(6), np.full(6, 3.0), np.arange(6.0)])
        with pytest.raises(SingularityError):
            DesignData(np.ones(6), X, np.zeros(6), ["Intercept", "const", "x"])

    def test_full_rank_passes(self):
        check_full_rank(np.column_stack([np.ones(5), np.arange(5.0)]), ["i", "x"])


class TestProfiledDeviance:
    def test_hand_case_intercept_only(self):
        data = DesignData(
            np.array([1.0, 2.0, 3.0]), np.ones((3, 1)), np.zeros(3), ["Intercept"]
        )
        dev, beta, s2 = profiled_deviance(data, 0.0)
        assert beta[0] == pytest.approx(2.0, abs=1e-12)
        assert s2 == pytest.approx(2.0 / 3.0, abs=1e-12)
        n = 3
        assert dev == pytest.approx(n * math.log(2 * math.pi * s2) + n, abs=1e-10)

    def test_lambda_zero_equals_ols(self):
        data = simulate(seed=1)
        _, beta, s2 = profiled_deviance(data, 0.0)
        ols, *_ = np.linalg.lstsq(data.X, data.y, rcond=None)
        assert np.allclose(beta, ols, atol=1e-10)
        rss = float(np.sum((data.y - data.X @ ols) ** 2))
        assert s2 == pytest.approx(rss / data.n_obs, rel=1e-10)

    @pytest.mark.parametrize("lam", [0.0, 0.3, 1.0, 5.0, 50.0])
    @pytest.mark.parametrize("reml", [False, True])
    def test_matches_dense_covariance_oracle(self, lam, reml):
        data = simulate(J=6, n_per=9, seed=2)
        dev, beta, s2 = profiled_deviance(data, lam, reml=reml)
        dev0, beta0, s20 = dense_profile(data.y, data.X, data.groups, lam, reml=reml)
        assert dev == pytest.approx(dev0, rel=1e-9)
        assert np.allclose(beta, beta0, atol=1e-9)
        assert s2 == pytest.approx(s20, rel=1e-9)

    def test_unbalanced_groups_match_oracle(self):
        rng = np.random.default_rng(3)
        n = 40
        X = np.column_stack([np.ones(n), rng.normal(size=n)])
        groups = rng.integers(0, 5, size=n)
        y = rng.normal(size=n) + groups * 0.3
        data = DesignData(y, X, groups, ["Intercept", "x"])
        for lam in (0.2, 2.0):
            dev, beta, _ = profiled_deviance(data, lam)
            dev0, beta0, _ = dense_profile(y, X, groups, lam)
            assert dev == pytest.approx(dev0, rel=1e-9)
            assert np.allclose(beta, beta0, atol=1e-9)

    def test_rejects_negative_lambda(self):
        data = simulate(J=3, n_per=5)
        with pytest.raises(ValueError):
            profiled_deviance(data, -0.5)

    def test_true_lambda_beats_scaled_lambda_on_average(self):
        sigma_u, sigma_e = 0.6, 0.5
        lam = sigma_u**2 / sigma_e**2
        at_true, at_low, at_high = [], [], []
        for seed in range(100):
            data = simulate(J=8, n_per=15, sigma_u=sigma_u, sigma_e=sigma_e, seed=seed)
            at_true.append(profiled_deviance(data, lam)[0])
            at_low.append(profiled_deviance(data, lam / 4.0)[0])
            at_high.append(profiled_deviance(data, lam * 4.0)[0])
        assert np.mean(at_true) < np.mean(at_low)
        assert np.mean(at_true) < np.mean(at_high)


class TestFit:
    def test_recovers_variance_components(self):
        data = simulate(J=25, n_per=40, sigma_u=0.7, sigma_e=0.5, seed=7)
        model = fit(data)
        assert math.sqrt(model.sigma_u2) == pytest.approx(0.7, rel=0.25)
        assert math.sqrt(model.sigma_e2) == pytest.approx(0.5, rel=0.10)
        assert np.allclose(model.beta, [2.0, 0.5, -0.3], atol=0.15)

    def test_fitted_lambda_is_local_minimum(self):
        data = simulate(seed=11)
        model = fit(data)
        dev = model.deviance
        assert dev <= profiled_deviance(data, model.lam * 1.05 + 1e-6)[0] + 1e-9
        if model.lam > 0:
            assert dev <= profiled_deviance(data, model.lam / 1.05)[0] + 1e-9

    def test_deviance_matches_loglik(self):
        data = simulate(seed=4)
        model = fit(data)
        dev, _, _ = profiled_deviance(data, model.lam)
        assert -2.0 * model.loglik == pytest.approx(dev, abs=1e-8)

    def test_no_group_variance_degenerates_to_ols(self):
        data = simulate(J=10, n_per=200, sigma_u=0.0, seed=0)
        model = fit(data)
        assert model.lam < 0.01
        ols, *_ = np.linalg.lstsq(data.X, data.y, rcond=None)
        assert np.allclose(model.beta, ols, atol=1e-4)

    def test_reml_intercept_only_gives_sample_variance(self):
        y = np.array([3.0, 5.0, 4.0, 8.0, 6.0])
        data = DesignData(y, np.ones((5, 1)), np.zeros(5), ["Intercept"])
        model = fit(data, reml=True)
        assert model.lam == 0.0
        assert model.sigma_e2 == pytest.approx(float(np.var(y, ddof=1)), rel=1e-9)

    def test_blup_matches_closed_form(self):
        data = simulate(J=8, n_per=12, seed=9)
        model = fit(data)
        _, inv = np.unique(data.groups, return_inverse=True)
        resid = data.y - data.X @ model.beta
        for j in range(data.n_groups):
            mask = inv == j
            n_j = mask.sum()
            expected = model.lam * resid[mask].sum() / (1.0 + model.lam * n_j)
            assert model.group_effects[j] == pytest.approx(expected, abs=1e-9)
        # shrinkage: predicted effects never exceed the raw group means
        for j in range(data.n_groups):
            mask = inv == j
            assert abs(model.group_effects[j]) <= abs(resid[mask].mean()) + 1e-12

    def test_permuting_rows_changes_nothing(self):
        data = simulate(seed=13)
        rng = np.random.default_rng(0)
        perm = rng.permutation(data.n_obs)
        shuffled = DesignData(
            data.y[perm], data.X[perm], data.groups[perm], list(data.names)
        )
        a, b = fit(data), fit(shuffled)
        assert np.array_equal(a.beta, b.beta)
        assert np.array_equal(a.se, b.se)
        assert a.lam == b.lam
        assert a.loglik == b.loglik
        assert np.array_equal(a.group_effects, b.group_effects)

    def test_scale_equivariance(self):
        data = simulate(seed=17)
        scaled_X = data.X.copy()
        scaled_X[:, 1] *= 4.0
        scaled = DesignData(data.y, scaled_X, data.groups, list(data.names))
        a, b = fit(data), fit(scaled)
        assert b.beta[1] == pytest.approx(a.beta[1] / 4.0, abs=1e-8)
        assert b.beta[1] / b.se[1] == pytest.approx(a.beta[1] / a.se[1], abs=1e-8)
        assert b.beta[2] == pytest.approx(a.beta[2], abs=1e-8)

    def test_single_group_still_fits(self):
        rng = np.random.default_rng(21)
        X = np.column_stack([np.ones(20), rng.normal(size=20)])
        y = X @ np.array([1.0, 2.0]) + rng.normal(0, 0.1, 20)
        model = fit(DesignData(y, X, np.zeros(20), ["Intercept", "x"]))
        assert np.allclose(model.beta, [1.0, 2.0], atol=0.2)


class TestRSquared:
    def test_exact_identities(self):
        r2m, r2c = r_squared(1.0, 0.5, 0.5)
        assert r2m == 0.5
        assert r2c == 0.75

    def test_marginal_never_exceeds_conditional(self):
        data = simulate(seed=23)
        model = fit(data)
        assert 0.0 <= model.r2_marginal <= model.r2_conditional <= 1.0

    def test_fitted_values_match_construction(self):
        # strong fixed effect, known variance components
        data = simulate(J=30, n_per=60, sigma_u=0.5, sigma_e=0.5, seed=29,
                        beta=(0.0, 1.0))
        model = fit(data)
        # x ~ N(0,1) so sigma_f2 ~= 1: expect R2m ~ 1/(1+.25+.25) = 2/3
        assert model.r2_marginal == pytest.approx(2.0 / 3.0, abs=0.05)
        assert model.r2_conditional == pytest.approx(5.0 / 6.0, abs=0.05)


class TestProfileCI:
    def test_brackets_estimate_and_excludes_zero_for_huge_z(self):
        data = simulate(J=12, n_per=30, sigma_u=0.3, sigma_e=0.3, seed=31)
        model = fit(data)
        lo, hi = profile_ci(data, model, 1)
        assert lo <= model.beta[1] <= hi
        assert model.beta[1] / model.se[1] > 10
        assert lo > 0.0  # true coefficient 0.5, tiny noise

    def test_close_to_wald_on_well_conditioned_data(self):
        data = simulate(J=20, n_per=50, seed=37)
        model = fit(data)
        lo, hi = profile_ci(data, model, 2)
        half = (hi - lo) / 2.0
        wald_half = 1.959963984540054 * model.se[2]
        assert half == pytest.approx(wald_half, rel=0.10)

    def test_interval_widens_with_level(self):
        data = simulate(J=8, n_per=15, seed=41)
        model = fit(data)
        lo95, hi95 = profile_ci(data, model, 1, level=0.95)
        lo99, hi99 = profile_ci(data, model, 1, level=0.99)
        assert lo99 < lo95 and hi99 > hi95

    def test_index_and_level_validation(self):
        data = simulate(J=4, n_per=8, seed=2)
        model = fit(data)
        with pytest.raises(IndexError):
            profile_ci(data, model, 99)
        with pytest.raises(ValueError):
            profile_ci(data, model, 0, level=1.5)


class TestGroupVarianceSE:
    def test_tracks_replication_spread(self):
        # the reported SE should approximate the sampling sd of sigma_u2
        estimates = []
        for seed in range(120):
            data = simulate(J=12, n_per=12, sigma_u=0.6, sigma_e=0.4, seed=seed)
            estimates.append(fit(data).sigma_u2)
        data = simulate(J=12, n_per=12, sigma_u=0.6, sigma_e=0.4, seed=500)
        reported = group_variance_se(data, fit(data))
        assert reported == pytest.approx(np.std(estimates), rel=0.5)

    def test_positive_and_finite(self):
        data = simulate(seed=3)
        se = group_variance_se(data, fit(data))
        assert se > 0 and math.isfinite(se)


@pytest.fixture(scope="module")
def small_report():
    data = simulate(J=8, n_per=15, seed=43)
    model = fit(data)
    return data, model, coef_report(data, model)


class TestCoefReport:
    def test_z_and_p(self, small_report):
        _, model, report = small_report
        for j, row in enumerate(report.rows):
            assert row.z == pytest.approx(model.beta[j] / model.se[j])
            assert 0.0 <= row.p_value <= 1.0
            assert row.ci_low <= row.estimate <= row.ci_high

    def test_standardized_unit_variance_matches_raw(self):
        rng = np.random.default_rng(47)
        n, J = 1500, 10
        x = rng.normal(size=n)  # unit variance by construction
        x = (x - x.mean()) / x.std()
        X = np.column_stack([np.ones(n), x])
        groups = np.repeat(np.arange(J), n // J)
        y = 1.0 + 0.5 * x + rng.normal(0, 0.2, n)
        data = DesignData(y, X, groups, ["Intercept", "x"])
        model = fit(data)
        report = coef_report(data, model)
        assert report.rows[1].std_estimate == pytest.approx(report.rows[1].estimate,
                                                            abs=1e-6)

    def test_binary_columns_not_rescaled(self):
        rng = np.random.default_rng(53)
        n = 400
        flag = (rng.uniform(size=n) < 0.3).astype(float)
        X = np.column_stack([np.ones(n), flag, rng.normal(size=n)])
        y = 1.0 + 2.0 * flag + rng.normal(0, 0.3, n)
        groups = np.repeat(np.arange(8), n // 8)
        data = DesignData(y, X, groups, ["Intercept", "flag", "x"])
        model = fit(data)
        report = coef_report(data, model)
        assert report.rows[1].std_estimate == pytest.approx(model.beta[1], abs=1e-8)

    def test_stars_thresholds(self, small_report):
        *_, report = small_report
        for row in report.rows:
            if row.p_value < 0.001:
                assert row.stars == "***"
            elif row.p_value < 0.01:
                assert row.stars == "**"
            elif row.p_value < 0.05:
                assert row.stars == "*"
            else:
                assert row.stars == ""

    def test_render_contains_group_var_row(self, small_report):
        *_, report = small_report
        text = render_coef_table(report)
        assert "Group Var" in text
        assert "P>|z|" in text
        assert "Signif." in text

    def test_csv_round_trips(self, small_report):
        *_, report = small_report
        rows = list(csv.reader(io.StringIO(coef_csv(report))))
        assert rows[0][0] == "name"
        assert rows[-1][0] == "Group Var"
        assert float(rows[1][1]) == report.rows[0].estimate


class TestIsBinary:
    def test_flags(self):
        assert is_binary(np.array([0.0, 1.0, 1.0]))
        assert is_binary(np.zeros(4))
        assert not is_binary(np.array([0.0, 2.0]))
        assert not is_binary(np.array([0.5, 1.0]))
