"""Panel data containers, CPI standardization, intra-month aggregation, and
chronological splitting.

A panel holds N units observed over T low-frequency periods.  Each (unit,
period) cell additionally carries a ragged block of intra-period (day-level)
observations: an embedding vector and a surrogate score per day.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import BadSplit, EmptyGroup, UsageError, ZeroDispersion


@dataclass(frozen=True)
class PanelDataset:
    """Immutable panel of target outcomes, covariates and day-level signals.

    Attributes:
        y: (N, T) standardized target outcome.
        z: (N, T, d_z) low-frequency covariates.
        x_day: ragged day-level embeddings; ``x_day[i][t]`` is (K_t, d_x).
        y_s: ragged surrogate scores; ``y_s[i][t]`` is (K_t,), aligned with
            ``x_day`` cell by cell.
        unit_labels / period_labels: identifiers, defaulting to integers.
    """

    y: np.ndarray
    z: np.ndarray
    x_day: list
    y_s: list
    unit_labels: list = field(default=None)
    period_labels: list = field(default=None)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        z = np.asarray(self.z, dtype=float)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        if y.ndim != 2:
            raise UsageError("y must be an N x T matrix")
        n, t = y.shape
        if z.shape[:2] != (n, t) or z.ndim != 3:
            raise UsageError("z must be N x T x d_z")
        if not np.all(np.isfinite(y)):
            raise UsageError("y contains non-finite entries")
        if len(self.x_day) != n or len(self.y_s) != n:
            raise UsageError("ragged blocks must have N unit entries")
        d_x = None
        for i in range(n):
            if len(self.x_day[i]) != t or len(self.y_s[i]) != t:
                raise UsageError(f"unit {i}: ragged blocks must have T period entries")
            for tt in range(t):
                xb = np.asarray(self.x_day[i][tt], dtype=float)
                sb = np.asarray(self.y_s[i][tt], dtype=float)
                if xb.ndim != 2:
                    xb = xb.reshape(len(sb), -1)
                if xb.shape[0] != sb.shape[0]:
                    raise UsageError(
                        f"cell ({i},{tt}): embeddings and scores disagree on K_t"
                    )
                if d_x is None and xb.shape[0] > 0:
                    d_x = xb.shape[1]
                if xb.shape[0] > 0 and xb.shape[1] != d_x:
                    raise UsageError(f"cell ({i},{tt}): inconsistent embedding dim")
                self.x_day[i][tt] = xb
                self.y_s[i][tt] = sb
        if self.unit_labels is None:
            object.__setattr__(self, "unit_labels", list(range(n)))
        if self.period_labels is None:
            object.__setattr__(self, "period_labels", list(range(t)))

    @property
    def n_units(self) -> int:
        return self.y.shape[0]

    @property
    def n_periods(self) -> int:
        return self.y.shape[1]

    @property
    def d_z(self) -> int:
        return self.z.shape[2]

    @property
    def d_x(self) -> int:
        for row in self.x_day:
            for block in row:
                if block.shape[0] > 0:
                    return block.shape[1]
        return 0

    def n_posts(self, i: int, t: int) -> int:
        return len(self.y_s[i][t])


@dataclass(frozen=True)
class ChronoSplit:
    """Chronological partition: train = [0, train_end), calibration =
    [train_end, cal_end), test = [cal_end, cal_end + horizon).

    Periods are 0-based half-open index ranges.
    """

    train_end: int
    cal_end: int
    horizon: int

    @property
    def train(self) -> np.ndarray:
        return np.arange(0, self.train_end)

    @property
    def cal(self) -> np.ndarray:
        return np.arange(self.train_end, self.cal_end)

    @property
    def test(self) -> np.ndarray:
        return np.arange(self.cal_end, self.cal_end + self.horizon)


def normalize_cpi(raw: np.ndarray) -> np.ndarray:
    """Standardize an official index panel: subtract the 100 baseline and
    divide each unit's series by its own time-series standard deviation.

    Raises ZeroDispersion if any unit's series is constant.
    """
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise UsageError("raw index values must be finite")
    centered = raw - 100.0
    s = centered.std(axis=1, ddof=0)
    if np.any(s <= 0):
        bad = int(np.argmax(s <= 0))
        raise ZeroDispersion(f"unit {bad} has a constant series")
    return centered / s[:, None]


def pool_embeddings(posts) -> np.ndarray:
    """Coordinate-wise max over a non-empty list of equal-length vectors."""
    if len(posts) == 0:
        raise EmptyGroup("cannot pool an empty set of embeddings")
    arr = np.asarray(posts, dtype=float)
    return arr.max(axis=0)


def average_scores(posts) -> float:
    """Arithmetic mean of a non-empty list of scalar scores."""
    if len(posts) == 0:
        raise EmptyGroup("cannot average an empty set of scores")
    return float(np.mean(posts))


def month_features(ds: PanelDataset, i: int, t: int) -> np.ndarray:
    """Fixed-size month-level embedding for cell (i, t): the coordinate-wise
    max over that month's day-level embeddings."""
    block = ds.x_day[i][t]
    if block.shape[0] == 0:
        raise EmptyGroup(f"cell ({i},{t}) has no posts")
    return block.max(axis=0)


def chrono_split(T: int, train_end: int, cal_end: int, horizon: int) -> ChronoSplit:
    """Validated chronological split over T periods.

    Requires 0 < train_end < cal_end <= T - horizon and horizon >= 1.
    """
    if not (0 < train_end < cal_end):
        raise BadSplit(f"need 0 < train_end < cal_end, got {train_end}, {cal_end}")
    if horizon < 1:
        raise BadSplit("horizon must be at least 1")
    if cal_end + horizon > T:
        raise BadSplit(
            f"cal_end + horizon = {cal_end + horizon} exceeds T = {T}"
        )
    return ChronoSplit(train_end=train_end, cal_end=cal_end, horizon=horizon)


def month_pooled(ds: PanelDataset) -> np.ndarray:
    """(N, T, d_x) month-level pooled embeddings; zero vector for empty months."""
    n, t, d = ds.n_units, ds.n_periods, ds.d_x
    out = np.zeros((n, t, d))
    for i in range(n):
        for tt in range(t):
            if ds.x_day[i][tt].shape[0] > 0:
                out[i, tt] = ds.x_day[i][tt].max(axis=0)
    return out


# ---------------------------------------------------------------------------
# Dataset directory format: panel.csv (unit, period, y, z_1..z_dz) and
# posts.csv (unit, period, day, score, e_1..e_dx).


def save_dataset(ds: PanelDataset, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    n, t, dz = ds.n_units, ds.n_periods, ds.d_z
    rows = {
        "unit": np.repeat(np.arange(n), t),
        "period": np.tile(np.arange(t), n),
        "y": ds.y.ravel(),
    }
    for j in range(dz):
        rows[f"z_{j + 1}"] = ds.z[:, :, j].ravel()
    pd.DataFrame(rows).to_csv(os.path.join(out_dir, "panel.csv"), index=False)

    recs = []
    for i in range(n):
        for tt in range(t):
            scores = ds.y_s[i][tt]
            emb = ds.x_day[i][tt]
            for k in range(len(scores)):
                recs.append((i, tt, k, scores[k], *emb[k]))
    d_x = ds.d_x
    cols = ["unit", "period", "day", "score"] + [f"e_{j + 1}" for j in range(d_x)]
    pd.DataFrame(recs, columns=cols).to_csv(
        os.path.join(out_dir, "posts.csv"), index=False
    )


def load_dataset(data_dir: str) -> PanelDataset:
    """Load the directory format written by :func:`save_dataset`.

    Validates the panel invariants and names the first offending row on
    failure.
    """
    panel_path = os.path.join(data_dir, "panel.csv")
    posts_path = os.path.join(data_dir, "posts.csv")
    for path in (panel_path, posts_path):
        if not os.path.exists(path):
            raise UsageError(f"missing dataset file: {path}")
    panel = pd.read_csv(panel_path)
    posts = pd.read_csv(posts_path)
    for col in ("unit", "period", "y"):
        if col not in panel.columns:
            raise UsageError(f"panel.csv lacks required column '{col}'")
    for col in ("unit", "period", "day", "score"):
        if col not in posts.columns:
            raise UsageError(f"posts.csv lacks required column '{col}'")

    z_cols = sorted(
        [c for c in panel.columns if c.startswith("z_")],
        key=lambda c: int(c.split("_")[1]),
    )
    e_cols = sorted(
        [c for c in posts.columns if c.startswith("e_")],
        key=lambda c: int(c.split("_")[1]),
    )
    units = np.sort(panel["unit"].unique())
    periods = np.sort(panel["period"].unique())
    n, t = len(units), len(periods)
    if len(panel) != n * t:
        raise UsageError(
            f"panel.csv has {len(panel)} rows; expected one per (unit, period) "
            f"= {n * t}"
        )
    unit_idx = {u: i for i, u in enumerate(units)}
    period_idx = {p: i for i, p in enumerate(periods)}

    y = np.full((n, t), np.nan)
    z = np.zeros((n, t, len(z_cols)))
    for r, row in enumerate(panel.itertuples(index=False)):
        i, tt = unit_idx[row.unit], period_idx[row.period]
        if not np.isfinite(row.y):
            raise UsageError(f"panel.csv row {r}: non-finite y")
        if not np.isnan(y[i, tt]):
            raise UsageError(f"panel.csv row {r}: duplicate cell ({row.unit}, {row.period})")
        y[i, tt] = row.y
        for j, c in enumerate(z_cols):
            z[i, tt, j] = getattr(row, c)

    x_day = [[[] for _ in range(t)] for _ in range(n)]
    y_s = [[[] for _ in range(t)] for _ in range(n)]
    for r, row in enumerate(posts.itertuples(index=False)):
        if row.unit not in unit_idx or row.period not in period_idx:
            raise UsageError(
                f"posts.csv row {r}: unknown cell ({row.unit}, {row.period})"
            )
        i, tt = unit_idx[row.unit], period_idx[row.period]
        y_s[i][tt].append(float(row.score))
        x_day[i][tt].append([float(getattr(row, c)) for c in e_cols])

    d_x = len(e_cols)
    for i in range(n):
        for tt in range(t):
            x_day[i][tt] = np.asarray(x_day[i][tt], dtype=float).reshape(-1, d_x)
            y_s[i][tt] = np.asarray(y_s[i][tt], dtype=float)
    return PanelDataset(
        y=y,
        z=z,
        x_day=x_day,
        y_s=y_s,
        unit_labels=list(units),
        period_labels=list(periods),
    )
