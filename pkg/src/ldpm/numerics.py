"""Dense linear algebra and sampling primitives.

Random draws use numpy's PCG64 generator (``np.random.default_rng``); every
caller passes an explicit seed, so all sampling here is reproducible
bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadRank, NotPSD, RankDeficient, UsageError

COND_THRESHOLD = 1e12
RIDGE_FALLBACK = 1e-8


@dataclass(frozen=True)
class SvdResult:
    """Rank-r_0 truncated SVD: u (n, r_0), s descending, v (p, r_0)."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


@dataclass(frozen=True)
class EquiCorrSpec:
    """Equicorrelated Gaussian spec: dim-variate, unit variances, common
    off-diagonal correlation rho.  PSD requires rho in (-1/(dim-1), 1]."""

    dim: int
    rho: float

    def __post_init__(self):
        if self.dim < 2:
            raise UsageError("equicorrelated spec needs dim >= 2")
        lo = -1.0 / (self.dim - 1)
        if not (lo < self.rho <= 1.0):
            raise NotPSD(
                f"rho = {self.rho} outside PSD range ({lo:.6g}, 1] for dim {self.dim}"
            )

    def sigma(self) -> np.ndarray:
        m = np.full((self.dim, self.dim), self.rho)
        np.fill_diagonal(m, 1.0)
        return m


def ols_fit(X: np.ndarray, y: np.ndarray, ridge_fallback: bool = False) -> np.ndarray:
    """Least-squares coefficients via the normal equations.

    Raises RankDeficient when cond(X^T X) exceeds 1e12, unless
    ``ridge_fallback`` is set, in which case a 1e-8 ridge penalty is added.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise UsageError("X must be n x p with y of length n")
    n, p = X.shape
    if n < p and not ridge_fallback:
        raise RankDeficient(f"n = {n} < p = {p}")
    gram = X.T @ X
    cond = np.linalg.cond(gram) if n >= p else np.inf
    if cond > COND_THRESHOLD:
        if not ridge_fallback:
            raise RankDeficient(f"cond(X'X) = {cond:.3g} exceeds {COND_THRESHOLD:.0e}")
        gram = gram + RIDGE_FALLBACK * np.eye(p)
    return np.linalg.solve(gram, X.T @ y)


def truncated_svd(X: np.ndarray, r0: int) -> SvdResult:
    """Best rank-r0 factorization of X in Frobenius norm."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise UsageError("X must be a matrix")
    rmax = min(X.shape)
    if not (1 <= r0 <= rmax):
        raise BadRank(f"r0 = {r0} outside [1, {rmax}]")
    u, s, vt = np.linalg.svd(X, full_matrices=False)
    return SvdResult(u=u[:, :r0], s=s[:r0], v=vt[:r0].T)


def reduce_embeddings(X: np.ndarray, r0: int) -> np.ndarray:
    """Project X onto its top r0 right singular directions (X V)."""
    res = truncated_svd(X, r0)
    return np.asarray(X, dtype=float) @ res.v


def equicorr_factor(spec: EquiCorrSpec) -> np.ndarray:
    """Lower-triangular factor L with L L^T = Sigma.

    Cholesky when Sigma is positive definite; for the degenerate rho = 1
    boundary an eigenvalue-based factor with clipped negatives is used.
    """
    sigma = spec.sigma()
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        w, q = np.linalg.eigh(sigma)
        return q * np.sqrt(np.clip(w, 0.0, None))


def sample_equicorr(spec: EquiCorrSpec, n_draws: int, seed: int) -> np.ndarray:
    """(n_draws, dim) correlated standard-normal draws under ``spec``."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_draws, spec.dim))
    return z @ equicorr_factor(spec).T
