"""Linear panel baselines and the PMSE evaluation protocol.

LPM is a unit fixed-effects (within-estimator) regression on the macro
covariates; LPM-E augments the covariates with an SVD-reduced version of
the month-pooled embeddings, with the projection fitted on training cells
only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadRank, LengthMismatch, MissingFeatures
from .numerics import ols_fit, truncated_svd
from .panel import month_pooled


@dataclass
class LinearPanelModel:
    """Unit fixed effects + pooled slopes over a declared feature block."""

    fixed_effects: np.ndarray
    slopes: np.ndarray
    svd_v: np.ndarray = None          # (d_x, r0) when embeddings are used
    y_lag_cols: list = field(default_factory=list)

    def features(self, ds, periods) -> np.ndarray:
        """(N, len(periods), p) feature tensor for the model's spec."""
        periods = np.asarray(periods)
        z = ds.z[:, periods, :]
        if self.svd_v is None:
            return z
        pooled = month_pooled(ds)[:, periods, :]
        reduced = pooled @ self.svd_v
        return np.concatenate([z, reduced], axis=2)

    def predict(self, feats: np.ndarray) -> np.ndarray:
        """(N, T_sel) predictions from an (N, T_sel, p) feature tensor."""
        return feats @ self.slopes + self.fixed_effects[:, None]


def _within_fit(feats: np.ndarray, y: np.ndarray) -> LinearPanelModel:
    """Within-transformation OLS: demean per unit, pool, recover fixed
    effects from unit means."""
    n, t, p = feats.shape
    fbar = feats.mean(axis=1, keepdims=True)
    ybar = y.mean(axis=1, keepdims=True)
    Xd = (feats - fbar).reshape(n * t, p)
    yd = (y - ybar).ravel()
    slopes = ols_fit(Xd, yd, ridge_fallback=True)
    fe = (ybar[:, 0] - fbar[:, 0, :] @ slopes)
    return LinearPanelModel(fixed_effects=fe, slopes=slopes)


def fit_lpm(ds, train_periods, y_lag_cols=None) -> LinearPanelModel:
    """Macro-covariates-only linear panel model."""
    train_periods = np.asarray(train_periods)
    model = _within_fit(ds.z[:, train_periods, :], ds.y[:, train_periods])
    model.y_lag_cols = list(y_lag_cols or [])
    return model


def fit_lpm_e(ds, r0: int, train_periods, y_lag_cols=None) -> LinearPanelModel:
    """Linear panel model on macro covariates plus rank-r0 reduced pooled
    embeddings; the SVD is fitted on training cells only."""
    train_periods = np.asarray(train_periods)
    pooled = month_pooled(ds)
    n = ds.n_units
    Xtr = pooled[:, train_periods, :].reshape(n * len(train_periods), -1)
    if r0 > min(Xtr.shape):
        raise BadRank(f"r0 = {r0} exceeds min dimension {min(Xtr.shape)}")
    v = truncated_svd(Xtr, r0).v
    feats = np.concatenate(
        [ds.z[:, train_periods, :], pooled[:, train_periods, :] @ v], axis=2
    )
    model = _within_fit(feats, ds.y[:, train_periods])
    model.svd_v = v
    model.y_lag_cols = list(y_lag_cols or [])
    return model


def predict_linear_h_step(model: LinearPanelModel, ds, test_periods) -> np.ndarray:
    """Recursive multi-step forecast for a linear panel model, replacing
    lagged-outcome z entries with prior predictions inside the window."""
    test_periods = np.asarray(test_periods)
    n = ds.n_units
    origin = test_periods[0]
    pooled = month_pooled(ds) if model.svd_v is not None else None
    preds = np.zeros((n, len(test_periods)))
    for hstep, t in enumerate(test_periods):
        z_t = ds.z[:, t, :].copy()
        for col, lag in model.y_lag_cols:
            src = t - lag
            if src >= origin:
                j = np.where(test_periods == src)[0]
                if len(j) == 0:
                    raise MissingFeatures(
                        f"recursion needs period {src} inside the test window"
                    )
                z_t[:, col] = preds[:, j[0]]
        f = z_t
        if model.svd_v is not None:
            f = np.hstack([z_t, pooled[:, t, :] @ model.svd_v])
        preds[:, hstep] = f @ model.slopes + model.fixed_effects
    return preds


def pmse(predictions, truths) -> float:
    """Mean squared prediction error over aligned arrays."""
    predictions = np.asarray(predictions, dtype=float).ravel()
    truths = np.asarray(truths, dtype=float).ravel()
    if predictions.shape != truths.shape or len(truths) == 0:
        raise LengthMismatch("predictions and truths must align and be nonempty")
    return float(np.mean((predictions - truths) ** 2))
