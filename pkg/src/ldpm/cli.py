"""Command-line entry point.

Five subcommands (simulate, fit, evaluate, conformal, diagnose), each driven
by a single JSON config document.  Unknown config keys are rejected.  Exit
codes: 0 on success, 2 for user or configuration errors, 3 for numeric
failures.  All outputs are deterministic given (config, seed).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np
import pandas as pd

from . import conformal as conf
from .deep_panel import (DeepPanelModel, TrainConfig, apply_symmetry,
                         assign_groups, build_inputs, predict_h_step,
                         shortcut_diagnostic)
from .errors import ConfigError, NumericError, UsageError
from .mlp import FeedForwardNet, grad_check
from .panel import load_dataset, save_dataset
from .pipeline import (LAG_COLS, LdpmFit, PipelineConfig, experiment_split,
                       fit_ldpm, run_comparison, summarize_comparison,
                       write_outputs)
from .surrogate import SurrogateModel, build_residual_features
from .synthgen import SimConfig, simulate_panel, simulate_shortcut_stream


def _cap_threads() -> None:
    """Honor LDPM_THREADS by capping the numeric libraries' worker pools."""
    cap = os.environ.get("LDPM_THREADS")
    if not cap:
        return
    try:
        n = max(1, int(cap))
    except ValueError:
        raise ConfigError(f"LDPM_THREADS must be an integer, got {cap!r}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return cfg


def _check_keys(cfg: dict, allowed, where: str) -> None:
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown config keys {unknown}")


def _pop_common(cfg: dict, args) -> tuple:
    """Resolve out dir and seed, with CLI flags overriding the config."""
    out = args.out or cfg.get("out")
    if not out:
        raise ConfigError("an output directory is required (--out or 'out')")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    return out, int(seed)


_SIM_KEYS = ("n_units", "n_periods", "posts_per_period", "embed_dim",
             "feature_dim", "n_groups", "rho", "coefficient_scale",
             "noise_scale", "min_center_distance", "group_assignment", "seed")


def _sim_config(d: dict, seed: int, where: str) -> SimConfig:
    _check_keys(d, _SIM_KEYS, where)
    d = dict(d)
    if "group_assignment" in d and d["group_assignment"] is not None:
        d["group_assignment"] = tuple(d["group_assignment"])
    d.setdefault("seed", seed)
    return SimConfig(**d)


_STAGE2_KEYS = ("hidden", "d_h", "hidden_activation", "final_activation",
                "k0", "lam", "lam_ramp_epochs", "warmup_epochs", "epochs",
                "batch_size", "lr", "patience", "seed")
_PIPE_KEYS = ("q", "surrogate_hidden", "surrogate_epochs", "surrogate_patience")


def _pipeline_config(cfg: dict, seed: int) -> PipelineConfig:
    stage2_raw = dict(cfg.get("stage2", {}))
    _check_keys(stage2_raw, _STAGE2_KEYS, "stage2")
    if "hidden" in stage2_raw:
        stage2_raw["hidden"] = tuple(stage2_raw["hidden"])
    pipe = {k: cfg[k] for k in _PIPE_KEYS if k in cfg}
    if "surrogate_hidden" in pipe:
        pipe["surrogate_hidden"] = tuple(pipe["surrogate_hidden"])
    return PipelineConfig(stage2=TrainConfig(**stage2_raw), seed=seed, **pipe)


def _write_json(obj, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: dict, args) -> None:
    out, seed = _pop_common(cfg, args)
    _check_keys(cfg, _SIM_KEYS + ("out",), "simulate")
    sim = _sim_config({k: v for k, v in cfg.items() if k != "out"}, seed,
                      "simulate")
    if args.seed is not None:
        sim = dataclasses.replace(sim, seed=seed)
    ds, truth = simulate_panel(sim)
    save_dataset(ds, out)
    _write_json(
        {
            "beta": truth["beta"].tolist(),
            "theta_s": truth["theta_s"].tolist(),
            "centers": truth["centers"].tolist(),
            "centers_s": truth["centers_s"].tolist(),
            "feature_map": {
                "w": truth["feature_map"].w.tolist(),
                "phase": truth["feature_map"].phase.tolist(),
            },
            "groups": truth["groups"].tolist(),
            "seed": sim.seed,
        },
        os.path.join(out, "truth.json"),
    )
    print(f"simulate: wrote dataset for {ds.n_units} units x "
          f"{ds.n_periods} periods to {out}")


_FIT_KEYS = ("data", "out", "seed", "horizon", "n_val",
             "stage2") + _PIPE_KEYS


def cmd_fit(cfg: dict, args) -> None:
    _check_keys(cfg, _FIT_KEYS, "fit")
    out, seed = _pop_common(cfg, args)
    data_dir = cfg.get("data")
    if not data_dir:
        raise ConfigError("fit: 'data' directory is required")
    ds = load_dataset(data_dir)
    horizon = int(cfg.get("horizon", 8))
    n_val = int(cfg.get("n_val", 6))
    fit_p, val_p, _ = experiment_split(ds.n_periods, horizon, n_val)
    fit = fit_ldpm(ds, fit_p, val_p, _pipeline_config(cfg, seed))
    os.makedirs(out, exist_ok=True)
    _write_json(
        {
            "model": fit.model.to_dict(),
            "surrogates": [s.to_dict() for s in fit.surrogates],
        },
        os.path.join(out, "model.json"),
    )
    rep = fit.report
    _write_json(
        {
            "epochs_run": rep.epochs_run,
            "validation_pmse": rep.validation_pmse,
            "final_penalty": rep.final_penalty,
            "group_sizes": rep.group_sizes,
            "loss_trajectory": rep.loss_trajectory,
            "assignment": fit.model.assignment.tolist(),
        },
        os.path.join(out, "report.json"),
    )
    print(f"fit: validation PMSE {rep.validation_pmse:.6f}, "
          f"group sizes {rep.group_sizes}; bundle in {out}")


_EVAL_KEYS = ("sim", "out", "seed", "horizon", "rhos", "methods", "n_reps",
              "r0", "n_val", "stage2") + _PIPE_KEYS


def cmd_evaluate(cfg: dict, args) -> None:
    _check_keys(cfg, _EVAL_KEYS, "evaluate")
    out, seed = _pop_common(cfg, args)
    sim = _sim_config(cfg.get("sim", {}), seed, "evaluate.sim")
    results = run_comparison(
        sim,
        horizon=int(cfg.get("horizon", 8)),
        rhos=cfg.get("rhos", [sim.rho]),
        methods=cfg.get("methods", ["ldpm", "lpm", "lpm_e"]),
        n_reps=int(cfg.get("n_reps", 10)),
        seed=seed,
        pipeline_cfg=_pipeline_config(cfg, seed),
        r0=int(cfg.get("r0", 20)),
        n_val=int(cfg.get("n_val", 6)),
    )
    summary = summarize_comparison(results)
    write_outputs(summary, out)
    results.to_csv(os.path.join(out, "pmse_reps.csv"), index=False)
    print(summary.to_string(index=False))


def _load_bundle(path: str):
    if not os.path.exists(path):
        raise ConfigError(f"model bundle not found: {path}")
    with open(path) as fh:
        d = json.load(fh)
    model = DeepPanelModel.from_dict(d["model"])
    surrogates = [SurrogateModel.from_dict(s) for s in d["surrogates"]]
    return model, surrogates


_CONF_KEYS = ("data", "model", "out", "seed", "alpha", "horizon", "n_cal")


def cmd_conformal(cfg: dict, args) -> None:
    _check_keys(cfg, _CONF_KEYS, "conformal")
    out, seed = _pop_common(cfg, args)
    for key in ("data", "model"):
        if key not in cfg:
            raise ConfigError(f"conformal: '{key}' is required")
    ds = load_dataset(cfg["data"])
    model, surrogates = _load_bundle(cfg["model"])
    alpha = float(cfg.get("alpha", 0.1))
    horizon = int(cfg.get("horizon", 8))
    n_cal = int(cfg.get("n_cal", 6))

    resid_feat = build_residual_features(surrogates, ds)
    V = build_inputs(ds, resid_feat)
    test_p = np.arange(ds.n_periods - horizon, ds.n_periods)
    cal_p = np.arange(test_p[0] - 1 - n_cal, test_p[0] - 1)
    if cal_p[0] < 0:
        raise ConfigError("conformal: calibration window precedes the panel")

    n = ds.n_units
    ui, ti = np.meshgrid(np.arange(n), cal_p, indexing="ij")
    yhat_cal = model.predict_cells(V[ui.ravel(), ti.ravel()], ui.ravel())
    groups = model.assignment
    cal = conf.calibrate(
        yhat_cal, ds.y[ui.ravel(), ti.ravel()], groups[ui.ravel()], alpha
    )

    preds = predict_h_step(model, ds, resid_feat[:, test_p, :], test_p)
    rows = []
    for i in range(n):
        for h, t in enumerate(test_p):
            lo, hi = conf.interval(cal, preds[i, h], groups[i])
            truth = ds.y[i, t]
            rows.append((i, int(t), int(groups[i]), preds[i, h], lo, hi,
                         truth, bool(lo <= truth <= hi)))
    frame = pd.DataFrame(
        rows,
        columns=["unit", "period", "group", "yhat", "lo", "hi", "truth",
                 "covered"],
    )
    os.makedirs(out, exist_ok=True)
    frame.to_csv(os.path.join(out, "intervals.csv"), index=False)
    cov = frame["covered"].mean()
    print(f"conformal: {len(frame)} intervals at alpha={alpha:g}, "
          f"empirical coverage {cov:.3f}; wrote {out}/intervals.csv")


_DIAG_KEYS = ("model", "out", "seed", "n_inputs", "rho", "n_obs")


def cmd_diagnose(cfg: dict, args) -> None:
    _check_keys(cfg, _DIAG_KEYS, "diagnose")
    out, seed = _pop_common(cfg, args)
    rng = np.random.default_rng(seed)
    report = {}

    # reparametrization invariance of the fitted model (relu hidden layer)
    if "model" in cfg:
        model, _ = _load_bundle(cfg["model"])
        n_inputs = int(cfg.get("n_inputs", 1000))
        d_in = model.backbone.weights[0].shape[1]
        d_h = model.backbone.out_dim
        perm = rng.permutation(d_h)
        scales = (rng.uniform(0.5, 2.0, size=d_h)
                  if model.backbone.activations[-1] == "relu"
                  else np.ones(d_h))
        twin = apply_symmetry(model, perm, scales)
        Vq = rng.standard_normal((n_inputs, d_in))
        units = rng.integers(model.n_units, size=n_inputs)
        delta = np.max(np.abs(
            model.predict_cells(Vq, units) - twin.predict_cells(Vq, units)
        ))
        report["symmetry"] = {
            "max_prediction_delta": float(delta),
            "assignment_unchanged": bool(
                np.array_equal(model.assignment, assign_groups(twin))
            ),
        }

    # finite-difference check of the backprop gradients
    net = FeedForwardNet([5, 8, 4], hidden_activation="relu",
                         final_activation="sigmoid",
                         seed=int(rng.integers(2**63)))
    Xg = rng.standard_normal((16, 5))
    target = rng.standard_normal((16, 4))

    def loss(outp):
        r = outp - target
        return float(np.mean(r**2)), 2.0 * r / r.size

    report["gradient"] = {"max_rel_error": float(grad_check(net, Xg, loss))}

    # direct-surrogate vs residual channel gradient comparison
    rho = float(cfg.get("rho", 0.9))
    n_obs = int(cfg.get("n_obs", 20000))
    y, y_s, eps_s = simulate_shortcut_stream(
        n_obs, rho=rho, seed=int(rng.integers(2**63))
    )
    g_direct, g_resid = shortcut_diagnostic(y, y_s, eps_s)
    report["shortcut"] = {
        "rho": rho,
        "grad_direct": g_direct,
        "grad_residual": g_resid,
        "ratio": float(abs(g_direct) / max(abs(g_resid), 1e-300)),
    }

    os.makedirs(out, exist_ok=True)
    _write_json(report, os.path.join(out, "diagnose.json"))
    lines = [f"{k}: {json.dumps(v, sort_keys=True)}" for k, v in report.items()]
    print("\n".join(lines))


# ---------------------------------------------------------------------------


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "conformal": cmd_conformal,
    "diagnose": cmd_diagnose,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ldpm",
        description="Two-stage surrogate-augmented deep panel forecasting",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None,
                       help="root seed override")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _cap_threads()
        cfg = _load_config(args.config)
        _COMMANDS[args.command](cfg, args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
