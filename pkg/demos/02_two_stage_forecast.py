"""Fit the two-stage forecaster on one panel and race the linear baselines.

Stage 1 fits a per-unit surrogate network on the day-level stream and
summarizes its residuals per month.  Stage 2 trains the shared backbone
with per-unit heads pulled toward group centers, then refits each group by
least squares.  Both linear baselines use the same chronological split.
"""

import numpy as np

from ldpm import (PipelineConfig, SimConfig, TrainConfig, experiment_split,
                  fit_ldpm, fit_lpm, fit_lpm_e, forecast_ldpm, pmse,
                  predict_linear_h_step, simulate_panel)
from ldpm.pipeline import LAG_COLS

HORIZON = 4

ds, truth = simulate_panel(SimConfig(
    n_units=10, n_periods=40, posts_per_period=5, embed_dim=8,
    feature_dim=4, n_groups=2, rho=0.5, noise_scale=0.5, seed=7))

fit_p, val_p, test_p = experiment_split(ds.n_periods, HORIZON, n_val=5)
train_all = np.concatenate([fit_p, val_p])
y_test = ds.y[:, test_p]

cfg = PipelineConfig(
    q=3,
    surrogate_hidden=(16,),
    surrogate_epochs=30,
    stage2=TrainConfig(hidden=(32,), d_h=8, k0=2, epochs=120,
                       warmup_epochs=40, patience=25),
    seed=1,
)
fit = fit_ldpm(ds, fit_p, val_p, cfg)
pred = forecast_ldpm(fit, ds, test_p)
print(f"stage-2 validation PMSE: {fit.report.validation_pmse:.4f}")
print(f"recovered group sizes:   {fit.report.group_sizes}")

lpm = fit_lpm(ds, train_all, y_lag_cols=LAG_COLS)
lpm_e = fit_lpm_e(ds, r0=4, train_periods=train_all, y_lag_cols=LAG_COLS)

print()
print(f"{HORIZON}-step test PMSE")
print(f"  ldpm   {pmse(pred, y_test):.4f}")
print(f"  lpm_e  {pmse(predict_linear_h_step(lpm_e, ds, test_p), y_test):.4f}")
print(f"  lpm    {pmse(predict_linear_h_step(lpm, ds, test_p), y_test):.4f}")
