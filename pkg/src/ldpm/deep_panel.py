"""Stage 2: deep panel training with homogeneity pursuit.

A shared backbone network maps each cell's input vector (month-pooled
embedding, covariates, surrogate residual features) to a hidden
representation; per-unit linear heads produce the prediction.  A
min-distance penalty pulls the heads toward a small set of group centers,
group membership is read off by nearest center, and a per-group least
squares refit debiases the centers.

The hidden representation is z-scored with training-set statistics (frozen
after the warmup phase) so head distances are comparable across units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BadScale, MissingFeatures, NonFinite, UsageError
from .mlp import Adam, FeedForwardNet
from .numerics import ols_fit
from .panel import month_pooled

DIVERGENCE_FACTOR = 1e6


@dataclass
class TrainConfig:
    """Hyperparameters for stage-2 training."""

    hidden: tuple = (64,)
    d_h: int = 32
    hidden_activation: str = "relu"
    final_activation: str = "sigmoid"
    k0: int = 3
    lam: float = 1.0
    lam_ramp_epochs: int = 10
    warmup_epochs: int = 40
    epochs: int = 120
    batch_size: int = 64
    lr: float = 1e-3
    patience: int = 20
    seed: int = 0


@dataclass
class TrainReport:
    loss_trajectory: list = field(default_factory=list)
    final_penalty: float = 0.0
    group_sizes: list = field(default_factory=list)
    epochs_run: int = 0
    validation_pmse: float = float("nan")


@dataclass
class DeepPanelModel:
    """Shared backbone + per-unit heads + group centers.

    Heads and centers act on the normalized hidden representation:
    prediction for unit i is beta_i . h_norm + b_i.
    """

    backbone: FeedForwardNet
    heads_beta: np.ndarray
    heads_b: np.ndarray
    centers_eta: np.ndarray
    centers_phi: np.ndarray
    assignment: np.ndarray
    hidden_loc: np.ndarray
    hidden_scale: np.ndarray
    lam: float
    y_lag_cols: list = field(default_factory=list)

    @property
    def n_units(self) -> int:
        return self.heads_beta.shape[0]

    @property
    def n_groups(self) -> int:
        return self.centers_eta.shape[0]

    def hidden(self, V: np.ndarray) -> np.ndarray:
        """Normalized hidden representation for a batch of input vectors."""
        h = self.backbone.forward(V)
        return (h - self.hidden_loc) / self.hidden_scale

    def predict_cells(self, V: np.ndarray, unit_idx: np.ndarray) -> np.ndarray:
        """Predictions for cells given their input vectors and unit ids."""
        ht = self.hidden(V)
        return (
            np.einsum("nd,nd->n", ht, self.heads_beta[unit_idx])
            + self.heads_b[unit_idx]
        )

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "backbone": self.backbone.to_dict(),
            "heads_beta": self.heads_beta.tolist(),
            "heads_b": self.heads_b.tolist(),
            "centers_eta": self.centers_eta.tolist(),
            "centers_phi": self.centers_phi.tolist(),
            "assignment": self.assignment.tolist(),
            "hidden_loc": self.hidden_loc.tolist(),
            "hidden_scale": self.hidden_scale.tolist(),
            "lam": self.lam,
            "y_lag_cols": [list(c) for c in self.y_lag_cols],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeepPanelModel":
        return cls(
            backbone=FeedForwardNet.from_dict(d["backbone"]),
            heads_beta=np.asarray(d["heads_beta"], dtype=float),
            heads_b=np.asarray(d["heads_b"], dtype=float),
            centers_eta=np.asarray(d["centers_eta"], dtype=float),
            centers_phi=np.asarray(d["centers_phi"], dtype=float),
            assignment=np.asarray(d["assignment"], dtype=int),
            hidden_loc=np.asarray(d["hidden_loc"], dtype=float),
            hidden_scale=np.asarray(d["hidden_scale"], dtype=float),
            lam=float(d["lam"]),
            y_lag_cols=[tuple(c) for c in d["y_lag_cols"]],
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, s: str) -> "DeepPanelModel":
        return cls.from_dict(json.loads(s))


def build_inputs(ds, resid_feat: np.ndarray) -> np.ndarray:
    """(N, T, d_in) cell input tensor: pooled embedding | z | residual
    features."""
    pooled = month_pooled(ds)
    if resid_feat.shape[:2] != (ds.n_units, ds.n_periods):
        raise MissingFeatures("residual features must cover every (unit, period)")
    return np.concatenate([pooled, ds.z, resid_feat], axis=2)


def _head_matrix(beta: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.hstack([beta, b[:, None]])


def min_distance_penalty(beta, b, eta, phi, lam, n_units):
    """(lam / N) * sum_i min_k || center_k - head_i ||, plus per-unit argmins."""
    heads = _head_matrix(beta, b)
    centers = _head_matrix(eta, phi)
    diff = heads[:, None, :] - centers[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    kstar = dist.argmin(axis=1)
    return lam / n_units * dist[np.arange(len(heads)), kstar].sum(), kstar, dist


def product_penalty(model: DeepPanelModel) -> float:
    """The product-form grouping penalty, for monitoring only."""
    heads = _head_matrix(model.heads_beta, model.heads_b)
    centers = _head_matrix(model.centers_eta, model.centers_phi)
    dist = np.linalg.norm(heads[:, None, :] - centers[None, :, :], axis=2)
    return float(model.lam / model.n_units * dist.prod(axis=1).sum())


def penalized_loss(model: DeepPanelModel, V, unit_idx, y) -> float:
    """Batch MSE plus the min-distance penalty at the model's lambda."""
    pred = model.predict_cells(V, unit_idx)
    mse = float(np.mean((pred - y) ** 2))
    pen, _, _ = min_distance_penalty(
        model.heads_beta, model.heads_b, model.centers_eta, model.centers_phi,
        model.lam, model.n_units,
    )
    return mse + pen


def _kmeans_pp_once(points: np.ndarray, k: int, rng, n_iter: int = 50):
    n = len(points)
    centers = [points[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(
            [np.sum((points - c) ** 2, axis=1) for c in centers], axis=0
        )
        total = d2.sum()
        if total <= 0:
            centers.append(points[rng.integers(n)])
            continue
        centers.append(points[rng.choice(n, p=d2 / total)])
    centers = np.array(centers)
    for _ in range(n_iter):
        d = np.linalg.norm(points[:, None] - centers[None], axis=2)
        labels = d.argmin(axis=1)
        new = centers.copy()
        for j in range(k):
            if np.any(labels == j):
                new[j] = points[labels == j].mean(axis=0)
        if np.allclose(new, centers):
            break
        centers = new
    inertia = float(
        np.min(np.sum((points[:, None] - centers[None]) ** 2, axis=2), axis=1).sum()
    )
    return centers, inertia


def _kmeans_pp(points: np.ndarray, k: int, seed: int, n_iter: int = 50,
               n_restarts: int = 8):
    """Restarted k-means++ seeding plus Lloyd iterations; deterministic,
    keeps the restart with the lowest inertia."""
    rng = np.random.default_rng(seed)
    best = (np.inf, None)
    for _ in range(n_restarts):
        centers, inertia = _kmeans_pp_once(points, k, rng, n_iter)
        if inertia < best[0]:
            best = (inertia, centers)
    return best[1]


def train(ds, resid_feat, train_periods, val_periods, cfg: TrainConfig,
          y_lag_cols=None):
    """Two-phase stage-2 fit: warmup without penalty, then penalized joint
    training of backbone, heads and centers, followed by group assignment
    and debiasing refit.

    Returns (DeepPanelModel, TrainReport).
    """
    n, t = ds.n_units, ds.n_periods
    V = build_inputs(ds, resid_feat)
    d_in = V.shape[2]
    train_periods = np.asarray(train_periods)
    val_periods = np.asarray(val_periods)

    ui, ti = np.meshgrid(np.arange(n), train_periods, indexing="ij")
    V_tr = V[ui.ravel(), ti.ravel()]
    y_tr = ds.y[ui.ravel(), ti.ravel()]
    u_tr = ui.ravel()
    uv, tv = np.meshgrid(np.arange(n), val_periods, indexing="ij")
    V_val = V[uv.ravel(), tv.ravel()]
    y_val = ds.y[uv.ravel(), tv.ravel()]
    u_val = uv.ravel()

    rng = np.random.default_rng(cfg.seed)
    backbone = FeedForwardNet(
        [d_in, *cfg.hidden, cfg.d_h],
        hidden_activation=cfg.hidden_activation,
        final_activation=cfg.final_activation,
        seed=rng.integers(2**63),
    )
    beta = rng.standard_normal((n, cfg.d_h)) * 0.1
    b = np.full(n, y_tr.mean())
    eta = np.zeros((cfg.k0, cfg.d_h))
    phi = np.zeros(cfg.k0)
    loc = np.zeros(cfg.d_h)
    scale = np.ones(cfg.d_h)

    params = backbone.params() + [beta, b, eta, phi]
    opt = Adam(params, lr=cfg.lr)
    report = TrainReport()
    m_tr = len(y_tr)
    initial_loss = None

    def run_epoch(lam_now):
        nonlocal initial_loss
        order = rng.permutation(m_tr)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, m_tr, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            vb, yb, ub = V_tr[idx], y_tr[idx], u_tr[idx]
            h, cache = backbone.forward_cached(vb)
            ht = (h - loc) / scale
            pred = np.einsum("nd,nd->n", ht, beta[ub]) + b[ub]
            resid = pred - yb
            mse = float(np.mean(resid**2))
            d_pred = 2.0 * resid / len(yb)

            g_beta = np.zeros_like(beta)
            g_b = np.zeros_like(b)
            np.add.at(g_beta, ub, d_pred[:, None] * ht)
            np.add.at(g_b, ub, d_pred)
            d_ht = d_pred[:, None] * beta[ub]
            net_grads, _ = backbone.backward(cache, d_ht / scale)

            g_eta = np.zeros_like(eta)
            g_phi = np.zeros_like(phi)
            pen = 0.0
            if lam_now > 0:
                pen, kstar, dist = min_distance_penalty(
                    beta, b, eta, phi, lam_now, n
                )
                dmin = dist[np.arange(n), kstar]
                ok = dmin > 1e-12
                u = _head_matrix(beta, b) - _head_matrix(eta, phi)[kstar]
                g = np.zeros_like(u)
                g[ok] = (lam_now / n) * u[ok] / dmin[ok, None]
                g_beta += g[:, :-1]
                g_b += g[:, -1]
                np.subtract.at(g_eta, kstar, g[:, :-1])
                np.subtract.at(g_phi, kstar, g[:, -1])

            opt.step(params, net_grads + [g_beta, g_b, g_eta, g_phi])
            loss = mse + pen
            if initial_loss is None:
                initial_loss = max(loss, 1e-12)
            if not np.isfinite(loss) or loss > DIVERGENCE_FACTOR * initial_loss:
                raise NonFinite("stage-2 loss diverged; lower the learning rate")
            epoch_loss += loss
            n_batches += 1
        return epoch_loss / n_batches

    # phase 1: warmup with identity normalization and no penalty
    for _ in range(cfg.warmup_epochs):
        report.loss_trajectory.append(run_epoch(0.0))
        report.epochs_run += 1

    # freeze normalization from training statistics and move heads into the
    # normalized coordinate system
    h_all = backbone.forward(V_tr)
    loc = h_all.mean(axis=0)
    scale = np.maximum(h_all.std(axis=0, ddof=0), 1e-6)
    b += beta @ loc
    beta *= scale

    # seed the centers by k-means++ on the head vectors
    heads = _head_matrix(beta, b)
    cinit = _kmeans_pp(heads, cfg.k0, seed=int(rng.integers(2**63)))
    eta[:] = cinit[:, :-1]
    phi[:] = cinit[:, -1]
    opt = Adam(params, lr=cfg.lr)  # fresh moments after the reparametrization

    # phase 2: penalized joint training with early stopping on validation
    def val_pmse():
        h = backbone.forward(V_val)
        ht = (h - loc) / scale
        pred = np.einsum("nd,nd->n", ht, beta[u_val]) + b[u_val]
        return float(np.mean((pred - y_val) ** 2))

    best = (np.inf, None)
    stale = 0
    for epoch in range(cfg.epochs):
        lam_now = cfg.lam * min(1.0, (epoch + 1) / max(cfg.lam_ramp_epochs, 1))
        report.loss_trajectory.append(run_epoch(lam_now))
        report.epochs_run += 1
        v = val_pmse()
        if v < best[0] - 1e-10:
            best = (v, (
                [w.copy() for w in backbone.weights],
                [bb.copy() for bb in backbone.biases],
                beta.copy(), b.copy(), eta.copy(), phi.copy(),
            ))
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    if best[1] is not None:
        backbone.weights, backbone.biases = best[1][0], best[1][1]
        beta[:], b[:], eta[:], phi[:] = best[1][2:]
        report.validation_pmse = best[0]
    else:
        report.validation_pmse = val_pmse()

    model = DeepPanelModel(
        backbone=backbone,
        heads_beta=beta,
        heads_b=b,
        centers_eta=eta,
        centers_phi=phi,
        assignment=np.zeros(n, dtype=int),
        hidden_loc=loc,
        hidden_scale=scale,
        lam=cfg.lam,
        y_lag_cols=list(y_lag_cols or []),
    )
    model.assignment = assign_groups(model)
    refit_centers(model, V_tr, u_tr, y_tr)
    report.final_penalty = product_penalty(model)
    report.group_sizes = np.bincount(model.assignment, minlength=cfg.k0).tolist()
    return model, report


def assign_groups(model: DeepPanelModel) -> np.ndarray:
    """Nearest-center assignment over (beta_i, b_i); ties go to the lowest
    group index (argmin returns the first minimum)."""
    _, kstar, _ = min_distance_penalty(
        model.heads_beta, model.heads_b, model.centers_eta, model.centers_phi,
        model.lam, model.n_units,
    )
    return kstar


def refit_centers(model: DeepPanelModel, V_tr, unit_idx, y_tr) -> None:
    """Per-group least squares of y on the normalized hidden features with
    the backbone frozen; heads are overwritten by their group's center."""
    ht = model.hidden(V_tr)
    X = np.hstack([ht, np.ones((len(ht), 1))])
    for k in range(model.n_groups):
        rows = np.isin(unit_idx, np.where(model.assignment == k)[0])
        if not np.any(rows):
            continue
        coef = ols_fit(X[rows], y_tr[rows], ridge_fallback=True)
        model.centers_eta[k] = coef[:-1]
        model.centers_phi[k] = coef[-1]
    model.heads_beta = model.centers_eta[model.assignment].copy()
    model.heads_b = model.centers_phi[model.assignment].copy()


def predict_one_step(model: DeepPanelModel, V_t: np.ndarray) -> np.ndarray:
    """One-step predictions for all units from their (N, d_in) input rows."""
    if V_t.shape[0] != model.n_units:
        raise MissingFeatures("need one input row per unit")
    return model.predict_cells(V_t, np.arange(model.n_units))


def predict_h_step(model: DeepPanelModel, ds, resid_feat_test: np.ndarray,
                   test_periods) -> np.ndarray:
    """Recursive multi-step forecast over ``test_periods``.

    Lagged-outcome entries of z (declared in ``model.y_lag_cols`` as
    (column, lag) pairs) are replaced by prior predictions for periods at or
    after the forecast origin; embeddings and surrogate features at test
    periods are treated as observed.
    """
    test_periods = np.asarray(test_periods)
    n = ds.n_units
    pooled = month_pooled(ds)
    origin = test_periods[0]
    preds = np.zeros((n, len(test_periods)))
    for hstep, t in enumerate(test_periods):
        z_t = ds.z[:, t, :].copy()
        for col, lag in model.y_lag_cols:
            src = t - lag
            if src >= origin:
                preds_idx = np.where(test_periods == src)[0]
                if len(preds_idx) == 0:
                    raise MissingFeatures(
                        f"recursive forecast needs period {src} in the test window"
                    )
                z_t[:, col] = preds[:, preds_idx[0]]
        v = np.concatenate([pooled[:, t, :], z_t, resid_feat_test[:, hstep, :]], axis=1)
        preds[:, hstep] = predict_one_step(model, v)
    return preds


def apply_symmetry(model: DeepPanelModel, perm: np.ndarray,
                   scales: np.ndarray) -> DeepPanelModel:
    """Reparametrize the final hidden layer by a permutation and positive
    coordinate scaling, leaving the network function unchanged.

    New hidden coordinate j is scales[j] * old coordinate perm[j].  Requires
    a relu final activation unless all scales are 1.
    """
    perm = np.asarray(perm, dtype=int)
    scales = np.asarray(scales, dtype=float)
    d_h = model.backbone.out_dim
    if sorted(perm.tolist()) != list(range(d_h)):
        raise UsageError("perm must be a permutation of the hidden coordinates")
    if np.any(scales <= 0):
        raise BadScale("scaling factors must be strictly positive")
    if model.backbone.activations[-1] != "relu" and not np.allclose(scales, 1.0):
        raise UsageError(
            "positive scaling commutes only with a relu final activation"
        )
    new = DeepPanelModel.from_dict(model.to_dict())
    w = new.backbone.weights[-1]
    g = new.backbone.biases[-1]
    new.backbone.weights[-1] = scales[:, None] * w[perm]
    new.backbone.biases[-1] = scales * g[perm]
    new.hidden_loc = scales * model.hidden_loc[perm]
    new.hidden_scale = scales * model.hidden_scale[perm]
    new.heads_beta = model.heads_beta[:, perm].copy()
    new.centers_eta = model.centers_eta[:, perm].copy()
    return new


def shortcut_diagnostic(y: np.ndarray, y_s: np.ndarray,
                        eps_s: np.ndarray):
    """Initial-gradient comparison between the direct-surrogate channel and
    the residual channel.

    At a zero-initialized predictor the loss gradient for a direct
    coefficient on the surrogate outcome is -mean(y * y_s); for a
    coefficient on the surrogate residual it is -mean(y * eps_s).  Inputs
    are expected to be centered where a covariance reading is intended.
    """
    y = np.asarray(y, dtype=float).ravel()
    y_s = np.asarray(y_s, dtype=float).ravel()
    eps_s = np.asarray(eps_s, dtype=float).ravel()
    if not (len(y) == len(y_s) == len(eps_s)):
        raise UsageError("aligned inputs required")
    return -float(np.mean(y * y_s)), -float(np.mean(y * eps_s))
