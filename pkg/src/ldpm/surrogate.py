"""Stage 1: per-region surrogate models on the high-frequency stream.

Each region's day-level surrogate scores are regressed on the day-level
embedding plus q lagged scores with a small dense network.  The unexplained
part (the surrogate residual) is summarized per month into a fixed-length
feature vector that Stage 2 consumes.

The day-level observations of a region form one chronological stream across
months; lags run over that stream and are zero-padded at the start.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, NonFinite
from .mlp import Adam, FeedForwardNet

N_RESIDUAL_FEATURES = 3
LAST_CHUNK = 5


@dataclass
class SurrogateModel:
    """Trained per-region surrogate: net feature map + linear read-out."""

    region: int
    net: FeedForwardNet
    head_w: np.ndarray
    head_c: float
    n_lags: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.net.forward(X) @ self.head_w + self.head_c

    def to_dict(self) -> dict:
        return {
            "region": self.region,
            "net": self.net.to_dict(),
            "head_w": self.head_w.tolist(),
            "head_c": self.head_c,
            "n_lags": self.n_lags,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateModel":
        return cls(
            region=d["region"],
            net=FeedForwardNet.from_dict(d["net"]),
            head_w=np.asarray(d["head_w"], dtype=float),
            head_c=float(d["head_c"]),
            n_lags=int(d["n_lags"]),
        )


def _region_stream(ds, i: int, q: int):
    """Flatten region i's day-level data into one chronological stream.

    Returns (inputs, targets, period_of_row) where inputs stack the
    embedding with q zero-padded lagged scores.
    """
    xs, ss, per = [], [], []
    for t in range(ds.n_periods):
        block = ds.x_day[i][t]
        scores = ds.y_s[i][t]
        for k in range(len(scores)):
            xs.append(block[k])
            ss.append(scores[k])
            per.append(t)
    if not xs:
        return (
            np.zeros((0, ds.d_x + q)),
            np.zeros(0),
            np.zeros(0, dtype=int),
        )
    xs = np.asarray(xs)
    ss = np.asarray(ss)
    per = np.asarray(per, dtype=int)
    m = len(ss)
    lags = np.zeros((m, q))
    for l in range(1, q + 1):
        lags[l:, l - 1] = ss[:-l]
    return np.hstack([xs, lags]), ss, per


def fit_surrogate(
    ds,
    i: int,
    q: int = 7,
    train_periods=None,
    hidden=(32, 16),
    max_epochs: int = 200,
    batch_size: int = 64,
    lr: float = 1e-3,
    patience: int = 15,
    val_fraction: float = 0.15,
    seed: int = 0,
) -> SurrogateModel:
    """Train region i's surrogate net on its training-period stream.

    Minimizes squared error of the day-level score given (embedding, q lags)
    with Adam and chronological-tail early stopping.
    """
    if train_periods is None:
        train_periods = np.arange(ds.n_periods)
    train_periods = np.asarray(train_periods)
    X, s, per = _region_stream(ds, i, q)
    mask = np.isin(per, train_periods)
    X, s = X[mask], s[mask]
    if len(s) < q + 1:
        raise InsufficientData(
            f"region {i}: {len(s)} surrogate observations < q + 1 = {q + 1}"
        )

    n_val = max(1, int(round(val_fraction * len(s))))
    X_tr, s_tr = X[:-n_val], s[:-n_val]
    X_val, s_val = X[-n_val:], s[-n_val:]
    if len(s_tr) == 0:
        X_tr, s_tr = X, s

    rng = np.random.default_rng(seed)
    net = FeedForwardNet(
        [X.shape[1], *hidden],
        hidden_activation="relu",
        final_activation="relu",
        seed=rng.integers(2**63),
    )
    head_w = np.zeros(net.out_dim)
    head_c = np.array([s_tr.mean()])
    params = net.params() + [head_w, head_c]
    opt = Adam(params, lr=lr)

    best = (np.inf, None)
    stale = 0
    n_tr = len(s_tr)
    for epoch in range(max_epochs):
        order = rng.permutation(n_tr)
        for start in range(0, n_tr, batch_size):
            idx = order[start : start + batch_size]
            xb, sb = X_tr[idx], s_tr[idx]
            h, cache = net.forward_cached(xb)
            pred = h @ head_w + head_c[0]
            resid = pred - sb
            d_pred = 2.0 * resid / len(sb)
            g_w = h.T @ d_pred
            g_c = np.array([d_pred.sum()])
            d_h = np.outer(d_pred, head_w)
            net_grads, _ = net.backward(cache, d_h)
            opt.step(params, net_grads + [g_w, g_c])
        val_pred = net.forward(X_val) @ head_w + head_c[0]
        val_mse = float(np.mean((val_pred - s_val) ** 2))
        if not np.isfinite(val_mse):
            raise NonFinite(f"region {i}: surrogate training diverged")
        if val_mse < best[0] - 1e-10:
            best = (val_mse, ([w.copy() for w in net.weights],
                              [b.copy() for b in net.biases],
                              head_w.copy(), head_c.copy()))
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    if best[1] is not None:
        net.weights, net.biases, head_w, head_c = best[1]
    return SurrogateModel(
        region=i, net=net, head_w=head_w, head_c=float(head_c[0]), n_lags=q
    )


def residuals(model: SurrogateModel, ds, i: int, periods) -> list:
    """Day-level surrogate residuals for region i over ``periods``.

    Returns one array of length K_t per requested period.
    """
    periods = np.asarray(periods)
    X, s, per = _region_stream(ds, i, model.n_lags)
    out = []
    if len(s) > 0:
        pred = model.predict(X)
        res = s - pred
    for t in periods:
        out.append(res[per == t] if len(s) > 0 else np.zeros(0))
    return out


def residual_features(res: np.ndarray) -> np.ndarray:
    """3-summary of a month's residual vector: mean, std, and the mean of
    the last (up to) 5 within-month observations.  Empty months map to the
    zero vector."""
    res = np.asarray(res, dtype=float)
    if res.size == 0:
        return np.zeros(N_RESIDUAL_FEATURES)
    return np.array(
        [res.mean(), res.std(ddof=0), res[-LAST_CHUNK:].mean()]
    )


def forecast_residuals(model: SurrogateModel, ds, i: int, periods) -> np.ndarray:
    """Residual features at future periods, using the observed high-frequency
    stream.  Shape (len(periods), 3)."""
    res = residuals(model, ds, i, periods)
    return np.vstack([residual_features(r) for r in res])


def fit_all_surrogates(ds, q=7, train_periods=None, seed=0, **kwargs) -> list:
    """One surrogate model per region, with per-region seed streams."""
    seeds = np.random.SeedSequence(seed).spawn(ds.n_units)
    return [
        fit_surrogate(
            ds, i, q=q, train_periods=train_periods,
            seed=np.random.default_rng(seeds[i]).integers(2**63), **kwargs
        )
        for i in range(ds.n_units)
    ]


def build_residual_features(models, ds, periods=None) -> np.ndarray:
    """(N, T_sel, 3) residual-feature tensor over the selected periods."""
    if periods is None:
        periods = np.arange(ds.n_periods)
    return np.stack(
        [forecast_residuals(m, ds, m.region, periods) for m in models]
    )


def residual_panel_frame(models, ds):
    """Long-format (unit, period, day, residual) table for audit export."""
    import pandas as pd

    recs = []
    for m in models:
        res = residuals(m, ds, m.region, np.arange(ds.n_periods))
        for t, block in enumerate(res):
            for k, v in enumerate(block):
                recs.append((m.region, t, k, v))
    return pd.DataFrame(recs, columns=["unit", "period", "day", "residual"])
