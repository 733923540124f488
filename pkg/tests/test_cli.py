import filecmp
import json
import os

import numpy as np
import pandas as pd
import pytest

from ldpm.cli import main

SIM_SMALL = {
    "n_units": 4, "n_periods": 24, "posts_per_period": 3,
    "embed_dim": 4, "feature_dim": 2, "n_groups": 2, "seed": 3,
}

FAST_FIT = {
    "horizon": 4, "n_val": 4, "q": 2,
    "surrogate_hidden": [8], "surrogate_epochs": 5,
    "stage2": {"hidden": [8], "d_h": 4, "k0": 2, "epochs": 8,
               "warmup_epochs": 4},
}


def write_cfg(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh)
    return str(path)


def simulate_to(tmp_path, name="data", sim=None):
    cfg = write_cfg(tmp_path / f"{name}.json", dict(sim or SIM_SMALL))
    out = str(tmp_path / name)
    assert main(["simulate", "--config", cfg, "--out", out]) == 0
    return out


def fit_to(tmp_path, data_dir, name="bundle", extra=None):
    payload = dict(FAST_FIT, data=data_dir, **(extra or {}))
    cfg = write_cfg(tmp_path / f"{name}.json", payload)
    out = str(tmp_path / name)
    assert main(["fit", "--config", cfg, "--out", out, "--seed", "1"]) == 0
    return out


class TestSimulate:
    def test_artifacts_and_row_counts(self, tmp_path):
        sim = {"n_units": 2, "n_periods": 4, "posts_per_period": 1,
               "embed_dim": 3, "feature_dim": 2, "n_groups": 1, "seed": 0}
        out = simulate_to(tmp_path, sim=sim)
        panel = pd.read_csv(os.path.join(out, "panel.csv"))
        posts = pd.read_csv(os.path.join(out, "posts.csv"))
        assert len(panel) == 2 * 4
        assert len(posts) == 2 * 4 * 1
        truth = json.load(open(os.path.join(out, "truth.json")))
        assert set(truth) >= {"beta", "centers", "groups", "seed"}
        assert np.asarray(truth["beta"]).shape == (2, 2)

    def test_byte_identical_reruns(self, tmp_path):
        a = simulate_to(tmp_path, name="a")
        b = simulate_to(tmp_path, name="b")
        for fname in ("panel.csv", "posts.csv", "truth.json"):
            assert filecmp.cmp(os.path.join(a, fname),
                               os.path.join(b, fname), shallow=False)

    def test_invalid_rho_exits_2(self, tmp_path):
        cfg = write_cfg(tmp_path / "bad.json", dict(SIM_SMALL, rho=2.0))
        assert main(["simulate", "--config", cfg,
                     "--out", str(tmp_path / "o")]) == 2

    def test_unknown_key_exits_2(self, tmp_path):
        cfg = write_cfg(tmp_path / "bad.json", dict(SIM_SMALL, bogus=1))
        assert main(["simulate", "--config", cfg,
                     "--out", str(tmp_path / "o")]) == 2

    def test_missing_config_exits_2(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_malformed_json_exits_2(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{\n  'single': quotes\n}\n")
        assert main(["simulate", "--config", str(p),
                     "--out", str(tmp_path / "o")]) == 2


class TestFit:
    def test_bundle_and_report(self, tmp_path):
        data = simulate_to(tmp_path)
        out = fit_to(tmp_path, data)
        bundle = json.load(open(os.path.join(out, "model.json")))
        assert set(bundle) == {"model", "surrogates"}
        assert len(bundle["surrogates"]) == SIM_SMALL["n_units"]
        report = json.load(open(os.path.join(out, "report.json")))
        assert report["epochs_run"] > 0
        assert np.isfinite(report["validation_pmse"])
        assert len(report["assignment"]) == SIM_SMALL["n_units"]
        assert sum(report["group_sizes"]) == SIM_SMALL["n_units"]

    def test_byte_identical_reruns(self, tmp_path):
        data = simulate_to(tmp_path)
        a = fit_to(tmp_path, data, name="fa")
        b = fit_to(tmp_path, data, name="fb")
        for fname in ("model.json", "report.json"):
            assert filecmp.cmp(os.path.join(a, fname),
                               os.path.join(b, fname), shallow=False)

    def test_missing_data_dir_exits_2(self, tmp_path):
        cfg = write_cfg(tmp_path / "f.json",
                        dict(FAST_FIT, data=str(tmp_path / "absent")))
        assert main(["fit", "--config", cfg,
                     "--out", str(tmp_path / "o")]) == 2


class TestEvaluate:
    def test_tables_written(self, tmp_path):
        payload = dict(FAST_FIT)
        payload.pop("n_val")
        payload.update(sim=dict(SIM_SMALL), rhos=[0.2, 0.8],
                       methods=["lpm", "lpm_e"], n_reps=2, r0=3)
        cfg = write_cfg(tmp_path / "e.json", payload)
        out = str(tmp_path / "eval")
        assert main(["evaluate", "--config", cfg, "--out", out,
                     "--seed", "4"]) == 0
        table = pd.read_csv(os.path.join(out, "pmse_table.csv"))
        assert list(table.columns) == ["method", "horizon", "rho", "mean",
                                       "stderr", "n_reps"]
        assert len(table) == 2 * 2
        reps = pd.read_csv(os.path.join(out, "pmse_reps.csv"))
        assert len(reps) == 2 * 2 * 2
        assert os.path.exists(os.path.join(out, "summary.md"))


class TestConformal:
    def test_interval_table(self, tmp_path):
        data = simulate_to(tmp_path)
        bundle = fit_to(tmp_path, data)
        cfg = write_cfg(tmp_path / "c.json", {
            "data": data, "model": os.path.join(bundle, "model.json"),
            "alpha": 0.2, "horizon": 4, "n_cal": 6,
        })
        out = str(tmp_path / "conf")
        assert main(["conformal", "--config", cfg, "--out", out]) == 0
        frame = pd.read_csv(os.path.join(out, "intervals.csv"))
        assert list(frame.columns) == ["unit", "period", "group", "yhat",
                                       "lo", "hi", "truth", "covered"]
        assert len(frame) == SIM_SMALL["n_units"] * 4
        assert np.all(frame["lo"] <= frame["yhat"])
        assert np.all(frame["yhat"] <= frame["hi"])
        # covered column is consistent with the interval bounds
        want = (frame["truth"] >= frame["lo"]) & (frame["truth"] <= frame["hi"])
        assert (frame["covered"] == want).all()

    def test_calibration_window_underflow_exits_2(self, tmp_path):
        data = simulate_to(tmp_path)
        bundle = fit_to(tmp_path, data)
        cfg = write_cfg(tmp_path / "c.json", {
            "data": data, "model": os.path.join(bundle, "model.json"),
            "horizon": 4, "n_cal": 50,
        })
        assert main(["conformal", "--config", cfg,
                     "--out", str(tmp_path / "o")]) == 2


class TestDiagnose:
    def test_report_values(self, tmp_path):
        data = simulate_to(tmp_path)
        bundle = fit_to(tmp_path, data)
        cfg = write_cfg(tmp_path / "d.json", {
            "model": os.path.join(bundle, "model.json"),
            "rho": 0.9, "n_obs": 20000,
        })
        out = str(tmp_path / "diag")
        assert main(["diagnose", "--config", cfg, "--out", out,
                     "--seed", "2"]) == 0
        rep = json.load(open(os.path.join(out, "diagnose.json")))
        assert rep["symmetry"]["max_prediction_delta"] < 1e-10
        assert rep["symmetry"]["assignment_unchanged"] is True
        assert rep["gradient"]["max_rel_error"] < 1e-5
        assert rep["shortcut"]["ratio"] > 5.0


def test_thread_cap_env(tmp_path, monkeypatch):
    monkeypatch.setenv("LDPM_THREADS", "not-a-number")
    cfg = write_cfg(tmp_path / "s.json", dict(SIM_SMALL))
    assert main(["simulate", "--config", cfg,
                 "--out", str(tmp_path / "o")]) == 2
    monkeypatch.setenv("LDPM_THREADS", "1")
    assert main(["simulate", "--config", cfg,
                 "--out", str(tmp_path / "o")]) == 0
    assert os.environ["OMP_NUM_THREADS"] == "1"
