from __future__ import annotations

import numpy as np
import pytest

from ccep import matops
from ccep.errors import InvalidConfig, RankDeficient, TooFewPeriods, TooManyProxies
from ccep.panel import PanelDataset
from ccep.proxy import (Deterministic, Intercept, MeanProduct, MeanX, MeanY, ProxySpec, Trend,
                        build_influence, build_proxy)

from conftest import random_panel


class TestProxySpec:
    def test_width(self):
        spec = ProxySpec((Intercept(), Trend(2), MeanX(), MeanY(), MeanProduct(0, 1)))
        assert spec.width(3) == 1 + 2 + 3 + 1 + 1

    def test_empty(self):
        with pytest.raises(InvalidConfig):
            ProxySpec(())

    def test_mean_x_once(self):
        with pytest.raises(InvalidConfig):
            ProxySpec((MeanX(), MeanX()))

    def test_bad_trend(self):
        with pytest.raises(InvalidConfig):
            Trend(0)

    def test_serialization_round_trip(self):
        spec = ProxySpec((Intercept(), Trend(2), MeanX(), MeanY(), MeanProduct(0, 1),
                          Deterministic((1.0, 2.0, 3.0), "w")))
        assert ProxySpec.from_list(spec.to_list()) == spec

    @pytest.mark.parametrize("bad", [[{"kind": "nope"}], [{"power": 1}],
                                     [{"kind": "mean_product", "indices": [1]}],
                                     [{"kind": "deterministic"}]])
    def test_bad_documents(self, bad):
        with pytest.raises(InvalidConfig):
            ProxySpec.from_list(bad)


class TestBuildProxy:
    def test_columns_in_order(self, rng):
        ds = random_panel(rng, N=10, T=8, k=2)
        spec = ProxySpec((Intercept(), Trend(1), MeanX(), MeanY(), MeanProduct(0, 1)))
        pm = build_proxy(ds, spec)
        t = np.arange(1.0, 9.0)
        expected = np.column_stack([np.ones(8), t, ds.X.mean(axis=0), ds.y.mean(axis=0),
                                    (ds.X[:, :, 0] * ds.X[:, :, 1]).mean(axis=0)])
        np.testing.assert_allclose(pm.psi_hat, expected, atol=1e-13)
        assert pm.column_labels == ("const", "t^1", "mean_x1", "mean_x2", "mean_y", "mean_x1x2")
        assert list(pm.is_stochastic) == [False, False, True, True, True, True]
        assert (pm.m, pm.T) == (6, 8)

    def test_annihilator_properties(self, rng):
        ds = random_panel(rng, N=10, T=6, k=2)
        pm = build_proxy(ds, ProxySpec((Intercept(), MeanX())))
        M = pm.annihilator
        np.testing.assert_allclose(M @ M, M, atol=1e-10)
        np.testing.assert_allclose(M @ pm.psi_hat, 0, atol=1e-10)
        np.testing.assert_allclose(pm.proj_coef, matops.projection_coefficients(pm.psi_hat))

    def test_too_many_proxies(self, rng):
        ds = random_panel(rng, N=10, T=4, k=2)
        spec = ProxySpec((Intercept(), Trend(1), MeanX()))
        with pytest.raises(TooFewPeriods) as err:
            build_proxy(ds, spec)
        assert isinstance(err.value, TooManyProxies)
        assert "TooFewPeriods" in str(err.value)

    def test_rank_deficient_names_matrix(self):
        X = np.ones((5, 4, 1))  # mean_x equals the intercept
        ds = PanelDataset(np.arange(20.0).reshape(5, 4), X)
        with pytest.raises(RankDeficient) as err:
            build_proxy(ds, ProxySpec((Intercept(), MeanX())))
        assert "Psi_hat" in str(err.value) and "condition number" in str(err.value)

    def test_deterministic_length(self, rng):
        ds = random_panel(rng, N=5, T=4)
        with pytest.raises(InvalidConfig):
            build_proxy(ds, ProxySpec((Deterministic((1.0, 2.0)),)))

    def test_product_index_range(self, rng):
        ds = random_panel(rng, N=5, T=4, k=1)
        with pytest.raises(InvalidConfig):
            build_proxy(ds, ProxySpec((MeanProduct(0, 1),)))


class TestInfluence:
    def test_layout_and_mean_zero(self, rng):
        ds = random_panel(rng, N=8, T=5, k=2)
        spec = ProxySpec((Intercept(), MeanX(), MeanY()))
        inf = build_influence(ds, spec)
        assert inf.q_hat.shape == (8, 5 * 4)
        np.testing.assert_allclose(inf.q_hat.mean(axis=0), 0, atol=1e-13)
        i = 3
        block = inf.block(i)
        np.testing.assert_array_equal(block[:, 0], 0.0)
        np.testing.assert_allclose(block[:, 1], ds.X[i, :, 0] - ds.X[:, :, 0].mean(axis=0), atol=1e-13)
        np.testing.assert_allclose(block[:, 3], ds.y[i] - ds.y.mean(axis=0), atol=1e-13)
        # column-major: entry (t, c) sits at c * T + t
        assert inf.q_hat[i, 2 * 5 + 4] == block[4, 2]

    def test_deterministic_only_is_zero(self, rng):
        ds = random_panel(rng, N=6, T=5)
        inf = build_influence(ds, ProxySpec((Intercept(), Trend(2))))
        assert not inf.q_hat.any()

    def test_reconstructs_proxy(self, rng):
        ds = random_panel(rng, N=6, T=5, k=2)
        spec = ProxySpec((MeanX(), MeanProduct(1, 1)))
        inf = build_influence(ds, spec)
        pm = build_proxy(ds, spec)
        # Psi_hat + deviation of unit i equals the unit statistic
        stat = pm.psi_hat + inf.block(2)
        np.testing.assert_allclose(stat[:, :2], ds.X[2], atol=1e-13)
        np.testing.assert_allclose(stat[:, 2], ds.X[2, :, 1] ** 2, atol=1e-12)
