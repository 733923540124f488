"""Group-wise split conformal prediction intervals.

Nonconformity is the absolute prediction residual on a chronologically held
out calibration set; the per-group cutoff is the ceil((m+1)(1-alpha))-th
order statistic.  When that rank exceeds the group's calibration count the
cutoff falls back to the maximum score and the calibration is flagged
width-degenerate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadSigma, EmptyGroup, LengthMismatch, UnknownGroup, UsageError


@dataclass(frozen=True)
class ConformalCalibration:
    alpha: float
    scores: dict          # group -> sorted score array
    quantiles: dict       # group -> cutoff q_k
    degenerate: dict      # group -> True when the rank overflowed

    def counts(self) -> dict:
        return {k: len(v) for k, v in self.scores.items()}


def conformal_quantile(scores: np.ndarray, alpha: float):
    """Cutoff and overflow flag for one group's sorted scores."""
    m = len(scores)
    rank = math.ceil((m + 1) * (1.0 - alpha))
    if rank > m:
        return float(scores[-1]), True
    return float(scores[rank - 1]), False


def calibrate(predictions, truths, group_labels, alpha: float) -> ConformalCalibration:
    """Per-group conformal calibration from aligned calibration-set arrays."""
    predictions = np.asarray(predictions, dtype=float).ravel()
    truths = np.asarray(truths, dtype=float).ravel()
    group_labels = np.asarray(group_labels).ravel()
    if not (len(predictions) == len(truths) == len(group_labels)):
        raise LengthMismatch("predictions, truths and groups must align")
    if not (0.0 < alpha < 1.0):
        raise UsageError("alpha must be in (0, 1)")
    if len(predictions) == 0:
        raise EmptyGroup("calibration set is empty")
    s = np.abs(truths - predictions)
    scores, quantiles, degenerate = {}, {}, {}
    for k in np.unique(group_labels):
        sk = np.sort(s[group_labels == k])
        if len(sk) == 0:
            raise EmptyGroup(f"group {k} has no calibration cells")
        q, flag = conformal_quantile(sk, alpha)
        scores[k] = sk
        quantiles[k] = q
        degenerate[k] = flag
    return ConformalCalibration(
        alpha=alpha, scores=scores, quantiles=quantiles, degenerate=degenerate
    )


def interval(cal: ConformalCalibration, yhat: float, group):
    """Symmetric prediction interval [yhat - q_k, yhat + q_k]."""
    if group not in cal.quantiles:
        raise UnknownGroup(f"group {group} was not calibrated")
    q = cal.quantiles[group]
    return (yhat - q, yhat + q)


def coverage(intervals, truths, group_labels=None):
    """Empirical coverage overall and, when labels are given, per group."""
    intervals = np.asarray(intervals, dtype=float)
    truths = np.asarray(truths, dtype=float).ravel()
    if intervals.shape != (len(truths), 2):
        raise LengthMismatch("need one (lo, hi) pair per truth")
    hit = (truths >= intervals[:, 0]) & (truths <= intervals[:, 1])
    overall = float(hit.mean())
    if group_labels is None:
        return overall, {}
    group_labels = np.asarray(group_labels).ravel()
    if len(group_labels) != len(truths):
        raise LengthMismatch("group labels must align with truths")
    per_group = {
        k: float(hit[group_labels == k].mean()) for k in np.unique(group_labels)
    }
    return overall, per_group


def coverage_experiment(m_k: int, alpha: float, n_reps: int, seed: int,
                        sigma: float = 1.0, n_test: int = 200):
    """Split conformal coverage on i.i.d. Gaussian residuals.

    Each replication draws a fresh calibration set of size m_k and measures
    empirical coverage on n_test fresh test points.  Returns the mean
    coverage over replications and the per-replication coverage array.
    """
    rng = np.random.default_rng(seed)
    cov = np.empty(n_reps)
    for r in range(n_reps):
        scores = np.sort(np.abs(rng.standard_normal(m_k) * sigma))
        q, _ = conformal_quantile(scores, alpha)
        cov[r] = np.mean(np.abs(rng.standard_normal(n_test) * sigma) <= q)
    return float(cov.mean()), cov


def length_ratio_experiment(sigma_eps: float, sigma_e: float, m_k: int,
                            alpha: float, n_reps: int, seed: int) -> float:
    """Monte Carlo mean ratio of joint-model vs target-only conformal
    interval widths under Gaussian oracle residuals.

    The limit as m_k grows is sigma_e / sigma_eps.
    """
    if not (0.0 < sigma_e <= sigma_eps):
        raise BadSigma("need 0 < sigma_e <= sigma_eps")
    rng = np.random.default_rng(seed)
    ratios = np.empty(n_reps)
    for r in range(n_reps):
        joint = np.sort(np.abs(rng.standard_normal(m_k) * sigma_e))
        target = np.sort(np.abs(rng.standard_normal(m_k) * sigma_eps))
        qj, _ = conformal_quantile(joint, alpha)
        qt, _ = conformal_quantile(target, alpha)
        ratios[r] = qj / qt
    return float(ratios.mean())
