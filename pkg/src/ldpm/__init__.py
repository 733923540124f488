"""Two-stage surrogate-augmented deep panel forecasting with latent-group
homogeneity pursuit, group-wise split conformal intervals, linear panel
baselines, and a synthetic panel generator."""

from .baselines import (LinearPanelModel, fit_lpm, fit_lpm_e, pmse,
                        predict_linear_h_step)
from .conformal import (ConformalCalibration, calibrate, conformal_quantile,
                        coverage, coverage_experiment, interval,
                        length_ratio_experiment)
from .deep_panel import (DeepPanelModel, TrainConfig, TrainReport,
                         apply_symmetry, assign_groups, build_inputs,
                         min_distance_penalty, penalized_loss, predict_h_step,
                         predict_one_step, product_penalty, refit_centers,
                         shortcut_diagnostic, train)
from .errors import LdpmError, NumericError, UsageError
from .mlp import Adam, FeedForwardNet, grad_check
from .numerics import (EquiCorrSpec, SvdResult, ols_fit, reduce_embeddings,
                       sample_equicorr, truncated_svd)
from .panel import (ChronoSplit, PanelDataset, chrono_split, load_dataset,
                    month_pooled, normalize_cpi, save_dataset)
from .pipeline import (LdpmFit, PipelineConfig, evaluate_methods,
                       experiment_split, fit_ldpm, forecast_ldpm,
                       run_comparison, summarize_comparison)
from .surrogate import (SurrogateModel, build_residual_features,
                        fit_all_surrogates, fit_surrogate, forecast_residuals,
                        residual_features, residuals)
from .synthgen import (RandomFeatureMap, SimConfig, gen_feature_map,
                       gen_group_coefficients, random_features, simulate_panel,
                       simulate_shortcut_stream)

__version__ = "0.1.0"
