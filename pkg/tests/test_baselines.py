import dataclasses

import numpy as np
import pytest

from ldpm.baselines import (LinearPanelModel, fit_lpm, fit_lpm_e, pmse,
                            predict_linear_h_step)
from ldpm.errors import BadRank, LengthMismatch
from ldpm.panel import month_pooled
from ldpm.synthgen import SimConfig, simulate_panel


def linear_panel_ds(seed=0, n_units=5, n_periods=30, slopes=(1.5, -0.8),
                    fe_scale=1.0, noise=0.0):
    """A dataset whose target is exactly linear in the macro covariates."""
    ds, _ = simulate_panel(SimConfig(
        n_units=n_units, n_periods=n_periods, posts_per_period=3,
        embed_dim=4, feature_dim=2, n_groups=1, seed=seed))
    rng = np.random.default_rng(seed + 1000)
    fe = rng.standard_normal(n_units) * fe_scale
    slopes = np.asarray(slopes, dtype=float)
    # swap in exogenous covariates so the lag column does not feed back into
    # the synthetic target
    z = rng.standard_normal((n_units, n_periods, len(slopes)))
    y = z @ slopes + fe[:, None]
    if noise:
        y = y + rng.standard_normal(y.shape) * noise
    return dataclasses.replace(ds, y=y, z=z), fe, slopes


class TestLpm:
    def test_noiseless_recovery(self):
        ds, fe, slopes = linear_panel_ds(seed=0)
        model = fit_lpm(ds, np.arange(ds.n_periods))
        np.testing.assert_allclose(model.slopes, slopes, atol=1e-8)
        np.testing.assert_allclose(model.fixed_effects, fe, atol=1e-8)

    def test_zero_covariates_give_unit_means(self):
        ds, fe, slopes = linear_panel_ds(seed=1)
        ds.z[:] = 0.0
        model = fit_lpm(ds, np.arange(ds.n_periods))
        np.testing.assert_allclose(model.fixed_effects,
                                   ds.y.mean(axis=1), atol=1e-10)

    def test_constant_shift_moves_one_fixed_effect(self):
        ds, fe, slopes = linear_panel_ds(seed=2)
        base = fit_lpm(ds, np.arange(ds.n_periods))
        ds.y[3] += 2.5
        shifted = fit_lpm(ds, np.arange(ds.n_periods))
        np.testing.assert_allclose(shifted.slopes, base.slopes, atol=1e-8)
        delta = shifted.fixed_effects - base.fixed_effects
        assert delta[3] == pytest.approx(2.5, abs=1e-8)
        np.testing.assert_allclose(np.delete(delta, 3), 0.0, atol=1e-8)

    def test_predict_matches_features_times_slopes(self):
        ds, fe, slopes = linear_panel_ds(seed=3, noise=0.3)
        model = fit_lpm(ds, np.arange(20))
        feats = model.features(ds, np.arange(20, 30))
        preds = model.predict(feats)
        want = ds.z[:, 20:30, :] @ model.slopes + model.fixed_effects[:, None]
        np.testing.assert_allclose(preds, want, atol=1e-12)


class TestLpmE:
    def test_full_rank_matches_raw_embedding_fit(self):
        ds, _ = simulate_panel(SimConfig(
            n_units=6, n_periods=40, posts_per_period=3, embed_dim=4,
            feature_dim=2, n_groups=2, seed=4))
        train_p = np.arange(30)
        model = fit_lpm_e(ds, r0=4, train_periods=train_p)
        # oracle: the same within-fit with unrotated pooled embeddings gives
        # the same fitted values because the SVD factor is a rotation
        pooled = month_pooled(ds)
        feats_raw = np.concatenate(
            [ds.z[:, train_p, :], pooled[:, train_p, :]], axis=2)
        from ldpm.baselines import _within_fit
        raw = _within_fit(feats_raw, ds.y[:, train_p])
        got = model.predict(model.features(ds, train_p))
        want = raw.predict(feats_raw)
        assert pmse(got, ds.y[:, train_p]) == pytest.approx(
            pmse(want, ds.y[:, train_p]), abs=1e-6)

    def test_rank_one_signal_beats_plain_lpm(self):
        # target driven by the leading embedding direction; LPM cannot see
        # it, LPM-E with r0 = 1 can
        ds, _ = simulate_panel(SimConfig(
            n_units=6, n_periods=40, posts_per_period=3, embed_dim=4,
            feature_dim=2, n_groups=1, seed=5))
        rng = np.random.default_rng(6)
        pooled = month_pooled(ds)
        direction = rng.standard_normal(4)
        y = (pooled @ direction) + 0.05 * rng.standard_normal(ds.y.shape)
        ds = dataclasses.replace(ds, y=y,
                                 z=rng.standard_normal(ds.z.shape))
        train_p, test_p = np.arange(30), np.arange(30, 40)
        lpm = fit_lpm(ds, train_p)
        lpm_e = fit_lpm_e(ds, r0=4, train_periods=train_p)
        err_lpm = pmse(lpm.predict(lpm.features(ds, test_p)),
                       ds.y[:, test_p])
        err_lpm_e = pmse(lpm_e.predict(lpm_e.features(ds, test_p)),
                         ds.y[:, test_p])
        assert err_lpm_e < err_lpm

    def test_bad_rank(self):
        ds, _ = simulate_panel(SimConfig(
            n_units=3, n_periods=10, posts_per_period=2, embed_dim=4,
            feature_dim=2, n_groups=1, seed=7))
        with pytest.raises(BadRank):
            fit_lpm_e(ds, r0=5, train_periods=np.arange(8))


class TestRecursiveForecast:
    def test_hand_recursion_oracle(self):
        ds, _ = simulate_panel(SimConfig(
            n_units=4, n_periods=20, posts_per_period=3, embed_dim=4,
            feature_dim=2, n_groups=2, seed=8))
        model = fit_lpm(ds, np.arange(16), y_lag_cols=[(0, 1)])
        test_p = np.arange(16, 20)
        got = predict_linear_h_step(model, ds, test_p)
        preds = np.zeros((4, 4))
        for h, t in enumerate(test_p):
            z_t = ds.z[:, t, :].copy()
            if h > 0:
                z_t[:, 0] = preds[:, h - 1]
            preds[:, h] = z_t @ model.slopes + model.fixed_effects
        np.testing.assert_allclose(got, preds, atol=1e-10)

    def test_no_lag_columns_is_static_prediction(self):
        ds, fe, slopes = linear_panel_ds(seed=9, noise=0.2)
        model = fit_lpm(ds, np.arange(24))
        test_p = np.arange(24, 30)
        got = predict_linear_h_step(model, ds, test_p)
        want = model.predict(model.features(ds, test_p))
        np.testing.assert_allclose(got, want, atol=1e-12)


class TestPmse:
    def test_perfect_predictions(self):
        assert pmse([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_constant_offset(self):
        assert pmse(np.zeros(7), np.full(7, 3.0)) == pytest.approx(9.0)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(10)
        p, t = rng.standard_normal(50), rng.standard_normal(50)
        want = sum((a - b) ** 2 for a, b in zip(p, t)) / 50
        assert pmse(p, t) == pytest.approx(want, abs=1e-12)

    def test_order_invariance(self):
        rng = np.random.default_rng(11)
        p, t = rng.standard_normal(20), rng.standard_normal(20)
        perm = rng.permutation(20)
        assert pmse(p, t) == pytest.approx(pmse(p[perm], t[perm]), abs=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            pmse([1.0], [1.0, 2.0])
        with pytest.raises(LengthMismatch):
            pmse([], [])
