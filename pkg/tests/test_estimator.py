from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccep import estimator as est_mod
from ccep.errors import InvalidConfig, RankDeficient, TooFewPeriods
from ccep.estimator import (EstimatorSpec, ccep_fit, ccep_fit_preset, compare_specs,
                            resolve_det)
from ccep.panel import PanelDataset
from ccep.proxy import Intercept, MeanX, MeanY, ProxySpec, Trend, build_proxy

from conftest import random_panel


def pooled_ols(Xs, ys):
    X = np.concatenate(Xs)
    y = np.concatenate(ys)
    return np.linalg.lstsq(X, y, rcond=None)[0]


def joint_oracle(ds, psi, D):
    """Stacked regression of M y_i on (M D, M X_i) with M from a pinv projector."""
    M = np.eye(ds.T) - psi @ np.linalg.pinv(psi)
    W = [np.hstack([M @ D, M @ ds.X[i]]) for i in range(ds.N)]
    theta = pooled_ols(W, [M @ ds.y[i] for i in range(ds.N)])
    r = D.shape[1]
    return theta[:r], theta[r:]


class TestOracles:
    def test_within_estimator(self, rng):
        for _ in range(20):
            ds = random_panel(rng, N=25, T=5, k=2)
            Xd = [ds.X[i] - ds.X[i].mean(axis=0) for i in range(ds.N)]
            yd = [ds.y[i] - ds.y[i].mean() for i in range(ds.N)]
            np.testing.assert_allclose(ccep_fit_preset(ds, "FE_WITHIN").beta_hat,
                                       pooled_ols(Xd, yd), rtol=1e-10, atol=1e-12)

    def test_unit_detrending(self, rng):
        for _ in range(20):
            ds = random_panel(rng, N=25, T=6, k=2)
            G = np.column_stack([np.ones(ds.T), np.arange(1.0, ds.T + 1)])

            def detrend(a):
                return a - G @ np.linalg.lstsq(G, a, rcond=None)[0]

            Xd = [detrend(ds.X[i]) for i in range(ds.N)]
            yd = [detrend(ds.y[i]) for i in range(ds.N)]
            np.testing.assert_allclose(ccep_fit_preset(ds, "DETREND").beta_hat,
                                       pooled_ols(Xd, yd), rtol=1e-10, atol=1e-12)

    def test_direct_formula_equals_two_step(self, rng):
        for _ in range(20):
            ds = random_panel(rng, N=30, T=7, k=2)
            Xbar = ds.X.mean(axis=0)
            M = np.eye(ds.T) - Xbar @ np.linalg.inv(Xbar.T @ Xbar) @ Xbar.T
            A = sum(ds.X[i].T @ M @ ds.X[i] for i in range(ds.N))
            b = sum(ds.X[i].T @ M @ ds.y[i] for i in range(ds.N))
            direct = np.linalg.solve(A, b)
            # unit-by-unit regression of x_it on x-bar_t, then pooled OLS of y on residuals
            xcheck = [ds.X[i] - Xbar @ np.linalg.lstsq(Xbar, ds.X[i], rcond=None)[0]
                      for i in range(ds.N)]
            two_step = pooled_ols(xcheck, list(ds.y))
            fitted = ccep_fit_preset(ds, "CCEP_X").beta_hat
            np.testing.assert_allclose(direct, two_step, rtol=1e-10)
            np.testing.assert_allclose(fitted, direct, rtol=1e-10)

    @pytest.mark.parametrize("proxy", [(MeanX(),), (Intercept(), MeanX()), (Intercept(),),
                                       (Intercept(), Trend(1))])
    def test_joint_regression_with_D(self, rng, proxy):
        for _ in range(10):
            ds = random_panel(rng, N=30, T=8, k=2)
            D = rng.normal(size=(ds.T, 2))
            res = ccep_fit(ds, EstimatorSpec(ProxySpec(proxy), D))
            psi = build_proxy(ds, ProxySpec(proxy)).psi_hat
            alpha, beta = joint_oracle(ds, psi, D)
            np.testing.assert_allclose(res.beta_hat, beta, rtol=1e-9, atol=1e-11)
            np.testing.assert_allclose(res.alpha_hat, alpha, rtol=1e-9, atol=1e-11)

    def test_residuals(self, rng):
        ds = random_panel(rng, N=12, T=6)
        D = rng.normal(size=(6, 1))
        res = ccep_fit(ds, EstimatorSpec(ProxySpec((MeanX(),)), D))
        expected = ds.y - D @ res.alpha_hat - ds.X @ res.beta_hat
        np.testing.assert_allclose(res.u_hat, expected, atol=1e-12)
        np.testing.assert_allclose(res.A_hat,
                                   sum(x.T @ x for x in res.X_ddot) / ds.N, atol=1e-12)


class TestDInvariance:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), r=st.integers(1, 3))
    def test_beta_invariant_to_D(self, seed, r):
        rng = np.random.default_rng(seed)
        ds = random_panel(rng, N=40, T=8, k=3)
        D = rng.normal(size=(8, r))
        for proxy in [(MeanX(),), (Intercept(), MeanX()), (MeanX(), MeanY())]:
            a = ccep_fit(ds, ProxySpec(proxy)).beta_hat
            b = ccep_fit(ds, EstimatorSpec(ProxySpec(proxy), D)).beta_hat
            np.testing.assert_allclose(b, a, rtol=1e-10)

    def test_alpha_zero_with_both_means(self, rng):
        ds = random_panel(rng, N=40, T=8, k=3)
        res = ccep_fit(ds, EstimatorSpec(ProxySpec((MeanX(), MeanY())), "time_dummies"))
        assert res.r == 8 - 4
        assert np.all(res.alpha_hat == 0.0)
        assert np.max(np.abs(res.diagnostics["alpha_numeric"])) < 1e-10

    def test_beta_depends_on_D_without_mean_x(self, rng):
        ds = random_panel(rng, N=40, T=8, k=2)
        D = rng.normal(size=(8, 1))
        a = ccep_fit_preset(ds, "FE_WITHIN").beta_hat
        b = ccep_fit(ds, EstimatorSpec(ProxySpec((Intercept(),)), D)).beta_hat
        assert not np.allclose(a, b)


class TestDeterministicBlock:
    def test_time_dummies_count(self, rng):
        ds = random_panel(rng, N=20, T=7, k=2)
        res = ccep_fit(ds, EstimatorSpec(ProxySpec((Intercept(), MeanX())), "time_dummies"))
        assert res.r == 7 - 3
        np.testing.assert_array_equal(res.D, np.eye(7)[:, :4])

    def test_trend_block(self):
        D = resolve_det("trend:2", 4)
        np.testing.assert_array_equal(D, [[1, 1], [2, 4], [3, 9], [4, 16]])

    def test_explicit_rows_checked(self):
        with pytest.raises(InvalidConfig):
            resolve_det(((1.0,), (2.0,)), 3)

    def test_D_spanned_by_proxy(self, rng):
        ds = random_panel(rng, N=20, T=6)
        with pytest.raises(RankDeficient):
            ccep_fit(ds, EstimatorSpec(ProxySpec((Intercept(), MeanX())), np.ones((6, 1))))

    def test_too_many_D(self, rng):
        ds = random_panel(rng, N=20, T=5, k=1)
        with pytest.raises(TooFewPeriods):
            ccep_fit(ds, EstimatorSpec(ProxySpec((MeanX(),)), rng.normal(size=(5, 5))))

    @pytest.mark.parametrize("bad", ["dummies", "trend:x", "trend:0"])
    def test_bad_det_strings(self, bad):
        with pytest.raises(InvalidConfig):
            EstimatorSpec(ProxySpec((MeanX(),)), bad)


class TestErrors:
    def test_periods_for_intercept_trend_means(self, rng):
        k = 2
        ds = random_panel(rng, N=20, T=k + 2, k=k)
        with pytest.raises(TooFewPeriods, match="TooFewPeriods"):
            ccep_fit_preset(ds, "CCEP_X_PLUS_TREND")
        ds = random_panel(rng, N=20, T=k + 3, k=k)
        ccep_fit_preset(ds, "CCEP_X_PLUS_TREND")

    def test_collinear_regressors(self, rng):
        X = rng.normal(size=(10, 5, 1))
        X = np.concatenate([X, 2 * X], axis=2)
        ds = PanelDataset(rng.normal(size=(10, 5)), X)
        with pytest.raises(RankDeficient, match="Xdd"):
            ccep_fit_preset(ds, "FE_WITHIN")

    def test_unknown_preset(self):
        with pytest.raises(InvalidConfig):
            EstimatorSpec.preset("CCEP_Z")


class TestInvariances:
    def test_scale_equivariance(self, rng):
        ds = random_panel(rng, N=30, T=6)
        a = ccep_fit_preset(ds, "CCEP_X_PLUS_INTERCEPT")
        b = ccep_fit_preset(ds.scaled(3.0), "CCEP_X_PLUS_INTERCEPT")
        np.testing.assert_allclose(b.beta_hat, 3.0 * a.beta_hat, rtol=1e-10)

    def test_unit_permutation_bitwise(self, rng):
        ds = random_panel(rng, N=30, T=6)
        perm = rng.permutation(30)
        ids = np.array(ds.unit_ids)
        shuffled = PanelDataset(ds.y[perm], ds.X[perm], tuple(ids[perm]))
        a = ccep_fit_preset(ds, "CCEP_XY")
        b = ccep_fit_preset(shuffled, "CCEP_XY")
        assert np.array_equal(a.beta_hat, b.beta_hat)

    def test_jobs_and_chunks_bitwise(self, rng, monkeypatch):
        ds = random_panel(rng, N=100, T=6)
        monkeypatch.setattr(est_mod, "CHUNK_UNITS", 16)
        a = ccep_fit_preset(ds, "CCEP_X", jobs=1)
        b = ccep_fit_preset(ds, "CCEP_X", jobs=4)
        assert np.array_equal(a.beta_hat, b.beta_hat)
        assert np.array_equal(a.A_hat, b.A_hat)
        assert np.array_equal(a.X_ddot, b.X_ddot)


class TestSpecs:
    @pytest.mark.parametrize("det", [None, "time_dummies", "trend:2", ((1.0, 0.0), (0.5, 1.0))])
    def test_round_trip(self, det):
        spec = EstimatorSpec(ProxySpec((Intercept(), Trend(1), MeanX())), det, "lab")
        assert EstimatorSpec.from_dict(spec.to_dict()) == spec

    def test_from_preset_document(self):
        spec = EstimatorSpec.from_dict({"preset": "ccep_xy", "det": {"values": [[1.0], [2.0]]}})
        assert spec.proxy.has(MeanY) and spec.det == ((1.0,), (2.0,))

    def test_compare_flags_failures(self, rng):
        ds = random_panel(rng, N=20, T=5, k=2)
        rows = compare_specs(ds, [EstimatorSpec.preset("CCEP_X"),
                                  EstimatorSpec.preset("CCEP_X", "trend:1"),
                                  EstimatorSpec(ProxySpec((Intercept(), Trend(2), MeanX())))])
        assert rows[0].ok and rows[1].ok and not rows[2].ok
        np.testing.assert_allclose(rows[0].beta_hat, rows[1].beta_hat, rtol=1e-10)
        assert "TooFewPeriods" in rows[2].flags
