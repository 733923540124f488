"""Synthetic panel generator.

The data-generating process: day-level embeddings are i.i.d. standard normal
vectors, targets are linear in a shared random cosine feature map of the
month-pooled embedding, surrogate scores are linear in the same map applied
to day-level embeddings, and the target/surrogate noise block per cell is
equicorrelated Gaussian with common correlation rho.

All randomness descends from a single root seed through
``np.random.SeedSequence`` spawning, so datasets are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, UsageError
from .numerics import EquiCorrSpec, equicorr_factor
from .panel import PanelDataset

# stream ids for seed splitting: one stream per independent random component
_STREAM_MAP = 0
_STREAM_CENTERS = 1
_STREAM_EMBED = 2
_STREAM_NOISE = 3


@dataclass(frozen=True)
class RandomFeatureMap:
    """Cosine feature map nu -> cos(W nu + phase), applied element-wise."""

    w: np.ndarray
    phase: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.w.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class SimConfig:
    """Full description of one synthetic-panel draw."""

    n_units: int = 30
    n_periods: int = 60
    posts_per_period: int = 10
    embed_dim: int = 64
    feature_dim: int = 16
    n_groups: int = 3
    rho: float = 0.5
    coefficient_scale: float = 1.0
    noise_scale: float = 1.0
    min_center_distance: float = 0.0
    group_assignment: tuple = field(default=None)
    seed: int = 0

    def __post_init__(self):
        if self.posts_per_period < 1:
            raise UsageError("need at least one post per period")
        if self.n_groups < 1 or self.n_groups > self.n_units:
            raise UsageError("n_groups must be in [1, n_units]")
        # validates the PSD range for the (K+1)-dim error block
        EquiCorrSpec(dim=self.posts_per_period + 1, rho=self.rho)
        if self.group_assignment is None:
            # near-equal partition in unit order
            g = tuple(i * self.n_groups // self.n_units for i in range(self.n_units))
            object.__setattr__(self, "group_assignment", g)
        else:
            g = tuple(int(v) for v in self.group_assignment)
            if len(g) != self.n_units:
                raise UsageError("group_assignment must cover every unit")
            if set(g) != set(range(self.n_groups)):
                raise UsageError("group_assignment must be onto 0..n_groups-1")
            object.__setattr__(self, "group_assignment", g)


def _spawn_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(stream + 1)[stream])


def gen_feature_map(p: int, p_prime: int, seed: int) -> RandomFeatureMap:
    """Draw a random cosine feature map with p inputs and p_prime outputs.

    Weight rows are scaled by 1/sqrt(p) so that for standard-normal inputs
    the pre-cosine argument has unit variance; phases are uniform on
    [0, 2 pi).
    """
    if p < 1 or p_prime < 1:
        raise UsageError("feature map dimensions must be positive")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((p_prime, p)) / np.sqrt(p)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=p_prime)
    return RandomFeatureMap(w=w, phase=phase)


def random_features(fmap: RandomFeatureMap, x: np.ndarray) -> np.ndarray:
    """Apply the cosine map to a vector (p,) or a batch (n, p)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != fmap.in_dim:
        raise DimMismatch(
            f"input dim {x.shape[-1]} does not match map dim {fmap.in_dim}"
        )
    return np.cos(x @ fmap.w.T + fmap.phase)


def gen_group_coefficients(cfg: SimConfig, seed: int):
    """Per-unit target and surrogate coefficients with the latent group
    structure: units in the same group share identical rows.

    Returns (beta, theta_s, centers, centers_s) with beta, theta_s of shape
    (N, p_prime).
    """
    rng = np.random.default_rng(seed)
    k0, pp = cfg.n_groups, cfg.feature_dim
    scale = cfg.coefficient_scale
    for _ in range(1000):
        centers = rng.standard_normal((k0, pp)) * scale
        centers_s = rng.standard_normal((k0, pp)) * scale
        if k0 == 1 or cfg.min_center_distance <= 0:
            break
        d = np.linalg.norm(centers[:, None] - centers[None, :], axis=2)
        np.fill_diagonal(d, np.inf)
        if d.min() >= cfg.min_center_distance:
            break
    else:
        raise UsageError("could not draw centers at the requested separation")
    g = np.asarray(cfg.group_assignment)
    return centers[g], centers_s[g], centers, centers_s


def simulate_shortcut_stream(n_obs: int, embed_dim: int = 64,
                             feature_dim: int = 16, rho: float = 0.9,
                             coefficient_scale: float = 2.0, seed: int = 0):
    """Single-stream draw for the initial-gradient-imbalance diagnostic.

    The target is y = beta' Z(x) + eps and the surrogate is
    y_s = beta' Z(x) + eps_s: the surrogate's structural part is exactly the
    x-driven component of the target, and the noise pair (eps, eps_s) is
    equicorrelated with correlation rho.  Returns centered (y, y_s, eps_s).
    """
    ss = np.random.SeedSequence(seed).spawn(3)
    fmap = gen_feature_map(
        embed_dim, feature_dim, np.random.default_rng(ss[0]).integers(2**63)
    )
    rng = np.random.default_rng(ss[1])
    beta = rng.standard_normal(feature_dim) * coefficient_scale
    x = rng.standard_normal((n_obs, embed_dim))
    signal = random_features(fmap, x) @ beta
    rng_e = np.random.default_rng(ss[2])
    factor = equicorr_factor(EquiCorrSpec(dim=2, rho=rho))
    noise = rng_e.standard_normal((n_obs, 2)) @ factor.T
    y = signal + noise[:, 0]
    y_s = signal + noise[:, 1]
    eps_s = noise[:, 1]
    return y - y.mean(), y_s - y_s.mean(), eps_s - eps_s.mean()


def simulate_panel(cfg: SimConfig):
    """Generate one PanelDataset plus its ground truth.

    Returns (ds, truth) where truth holds the coefficient matrices, feature
    map, group labels and the realized error block.  The covariate z has a
    single column: the one-period-lagged target (zero in the first period),
    which makes recursive multi-step forecasting meaningful.
    """
    n, t, k = cfg.n_units, cfg.n_periods, cfg.posts_per_period
    fmap = gen_feature_map(cfg.embed_dim, cfg.feature_dim, _spawn_rng(cfg.seed, _STREAM_MAP).integers(2**63))
    beta, theta_s, centers, centers_s = gen_group_coefficients(
        cfg, _spawn_rng(cfg.seed, _STREAM_CENTERS).integers(2**63)
    )

    rng_x = _spawn_rng(cfg.seed, _STREAM_EMBED)
    x = rng_x.standard_normal((n, t, k, cfg.embed_dim))

    rng_e = _spawn_rng(cfg.seed, _STREAM_NOISE)
    spec = EquiCorrSpec(dim=k + 1, rho=cfg.rho)
    factor = equicorr_factor(spec)
    eps_block = (
        rng_e.standard_normal((n, t, k + 1)) @ factor.T
    ) * cfg.noise_scale
    eps = eps_block[:, :, 0]
    eps_s = eps_block[:, :, 1:]

    # month-level pooled embedding drives the target equation
    x_month = x.max(axis=2)
    z_month = random_features(fmap, x_month.reshape(n * t, -1)).reshape(n, t, -1)
    y = np.einsum("ntp,np->nt", z_month, beta) + eps

    z_day = random_features(fmap, x.reshape(n * t * k, -1)).reshape(n, t, k, -1)
    y_s = np.einsum("ntkp,np->ntk", z_day, theta_s) + eps_s

    z_cov = np.zeros((n, t, 1))
    z_cov[:, 1:, 0] = y[:, :-1]

    x_day = [[x[i, tt] for tt in range(t)] for i in range(n)]
    ys_list = [[y_s[i, tt] for tt in range(t)] for i in range(n)]
    ds = PanelDataset(y=y, z=z_cov, x_day=x_day, y_s=ys_list)
    truth = {
        "beta": beta,
        "theta_s": theta_s,
        "centers": centers,
        "centers_s": centers_s,
        "feature_map": fmap,
        "groups": np.asarray(cfg.group_assignment),
        "eps": eps,
        "eps_s": eps_s,
    }
    return ds, truth
