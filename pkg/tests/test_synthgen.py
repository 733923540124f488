import numpy as np
import pytest

from ldpm.errors import DimMismatch, UsageError
from ldpm.synthgen import (RandomFeatureMap, SimConfig, gen_feature_map,
                           gen_group_coefficients, random_features,
                           simulate_panel, simulate_shortcut_stream)


class TestFeatureMap:
    def test_deterministic(self):
        a = gen_feature_map(8, 4, seed=3)
        b = gen_feature_map(8, 4, seed=3)
        np.testing.assert_array_equal(a.w, b.w)
        np.testing.assert_array_equal(a.phase, b.phase)

    def test_single_row(self):
        m = gen_feature_map(5, 1, seed=0)
        assert m.w.shape == (1, 5) and m.phase.shape == (1,)

    def test_weight_moments(self):
        # rows are scaled by 1/sqrt(p); undoing the scale recovers standard
        # normal moments
        p = 50
        m = gen_feature_map(p, 2000, seed=1)
        entries = m.w.ravel() * np.sqrt(p)
        assert abs(entries.mean()) < 0.02
        assert abs(entries.std() - 1.0) < 0.02
        assert np.all(m.phase >= 0) and np.all(m.phase < 2 * np.pi)

    def test_cos_map_trivial_values(self):
        fmap = RandomFeatureMap(w=np.zeros((3, 2)), phase=np.zeros(3))
        np.testing.assert_allclose(random_features(fmap, [1.0, 2.0]),
                                   np.ones(3), atol=1e-12)
        fmap2 = RandomFeatureMap(w=np.zeros((3, 2)),
                                 phase=np.full(3, np.pi / 2))
        np.testing.assert_allclose(random_features(fmap2, [1.0, 2.0]),
                                   np.zeros(3), atol=1e-12)

    def test_cos_map_scalar_oracle(self):
        rng = np.random.default_rng(4)
        fmap = gen_feature_map(6, 4, seed=5)
        x = rng.standard_normal(6)
        out = random_features(fmap, x)
        for j in range(4):
            acc = fmap.phase[j]
            for i in range(6):
                acc += fmap.w[j, i] * x[i]
            assert out[j] == pytest.approx(np.cos(acc), abs=1e-12)
        assert np.all(np.abs(out) <= 1.0)

    def test_dim_mismatch(self):
        fmap = gen_feature_map(6, 4, seed=5)
        with pytest.raises(DimMismatch):
            random_features(fmap, np.zeros(5))


class TestGroupCoefficients:
    def test_single_group_identical_rows(self):
        cfg = SimConfig(n_units=6, n_groups=1, posts_per_period=2)
        beta, theta, centers, _ = gen_group_coefficients(cfg, seed=0)
        for i in range(1, 6):
            np.testing.assert_array_equal(beta[i], beta[0])
            np.testing.assert_array_equal(theta[i], theta[0])

    def test_same_group_bitwise_equal(self):
        cfg = SimConfig(n_units=9, n_groups=3, posts_per_period=2)
        beta, _, centers, _ = gen_group_coefficients(cfg, seed=1)
        g = np.asarray(cfg.group_assignment)
        for i in range(9):
            np.testing.assert_array_equal(beta[i], centers[g[i]])

    def test_centers_distinct_over_seeds(self):
        cfg = SimConfig(n_units=9, n_groups=3, posts_per_period=2)
        for seed in range(100):
            _, _, centers, _ = gen_group_coefficients(cfg, seed=seed)
            d = np.linalg.norm(centers[:, None] - centers[None], axis=2)
            np.fill_diagonal(d, np.inf)
            assert d.min() > 0

    def test_separation_floor_enforced(self):
        cfg = SimConfig(n_units=6, n_groups=3, posts_per_period=2,
                        min_center_distance=2.5)
        _, _, centers, _ = gen_group_coefficients(cfg, seed=2)
        d = np.linalg.norm(centers[:, None] - centers[None], axis=2)
        np.fill_diagonal(d, np.inf)
        assert d.min() >= 2.5


class TestSimConfig:
    def test_rho_outside_psd_range(self):
        with pytest.raises(Exception):
            SimConfig(rho=2.0)

    def test_bad_assignment(self):
        with pytest.raises(UsageError):
            SimConfig(n_units=4, n_groups=2, group_assignment=(0, 0, 0, 0))

    def test_default_assignment_near_equal(self):
        cfg = SimConfig(n_units=30, n_groups=3)
        sizes = np.bincount(cfg.group_assignment)
        assert sizes.tolist() == [10, 10, 10]


class TestSimulatePanel:
    def test_noiseless_matches_structural_equation(self):
        cfg = SimConfig(n_units=4, n_periods=6, posts_per_period=3,
                        embed_dim=8, feature_dim=4, n_groups=2,
                        noise_scale=0.0, seed=7)
        ds, truth = simulate_panel(cfg)
        fmap = truth["feature_map"]
        for i in range(4):
            for t in range(6):
                x_month = ds.x_day[i][t].max(axis=0)
                want = random_features(fmap, x_month) @ truth["beta"][i]
                assert ds.y[i, t] == pytest.approx(want, abs=1e-12)

    def test_realized_error_correlation(self):
        cfg = SimConfig(n_units=50, n_periods=200, posts_per_period=4,
                        embed_dim=4, feature_dim=2, n_groups=2, rho=0.5,
                        seed=8)
        ds, truth = simulate_panel(cfg)
        eps = np.repeat(truth["eps"][:, :, None], 4, axis=2).ravel()
        eps_s = truth["eps_s"].ravel()
        r = np.corrcoef(eps, eps_s)[0, 1]
        assert abs(r - 0.5) < 0.02

    def test_bit_reproducible(self):
        cfg = SimConfig(n_units=3, n_periods=5, posts_per_period=2,
                        embed_dim=4, feature_dim=2, n_groups=2, seed=9)
        a, _ = simulate_panel(cfg)
        b, _ = simulate_panel(cfg)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.z, b.z)
        for i in range(3):
            for t in range(5):
                np.testing.assert_array_equal(a.x_day[i][t], b.x_day[i][t])
                np.testing.assert_array_equal(a.y_s[i][t], b.y_s[i][t])

    def test_lagged_target_covariate(self):
        cfg = SimConfig(n_units=3, n_periods=5, posts_per_period=2,
                        embed_dim=4, feature_dim=2, n_groups=2, seed=10)
        ds, _ = simulate_panel(cfg)
        np.testing.assert_array_equal(ds.z[:, 1:, 0], ds.y[:, :-1])
        np.testing.assert_array_equal(ds.z[:, 0, 0], np.zeros(3))


class TestShortcutStream:
    def test_shapes_and_centering(self):
        y, y_s, eps_s = simulate_shortcut_stream(5000, seed=1)
        assert y.shape == y_s.shape == eps_s.shape == (5000,)
        assert abs(y.mean()) < 1e-12 and abs(y_s.mean()) < 1e-12

    def test_shared_signal_dominates_at_high_rho(self):
        y, y_s, eps_s = simulate_shortcut_stream(20000, rho=0.9, seed=2)
        assert np.cov(y, y_s)[0, 1] > 4 * abs(np.cov(y, eps_s)[0, 1])
