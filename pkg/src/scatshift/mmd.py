"""Kernel two-sample testing: RBF kernel, blockwise unbiased MMD (B-test).

The test statistic averages unbiased MMD estimates over disjoint blocks of
size B (default round(sqrt(n))), whose mean is asymptotically Gaussian under
both hypotheses; the z-score uses the empirical standard deviation of the
block statistics. The test is one-sided: a distribution shift can only push
the population MMD up.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import norm

from .rng import substream

P_VALUE_FLOOR = 1e-300  # Gaussian-tail underflow is reported as p <= this, never 0
FULL_MMD_CAP = 4096


@dataclass(frozen=True)
class KernelConfig:
    gamma: float | str = 1.0  # positive float, or "auto" for the median heuristic
    standardize: bool = True

    def __post_init__(self):
        if isinstance(self.gamma, str):
            if self.gamma != "auto":
                raise ValueError("gamma must be a positive number or 'auto'")
        elif self.gamma <= 0:
            raise ValueError("gamma must be positive")


def rbf_kernel(x: np.ndarray, y: np.ndarray, cfg: KernelConfig) -> float:
    """k(x, y) = exp(-gamma ||x - y||^2) for a single pair of vectors."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("dimension mismatch")
    return float(np.exp(-_resolve_gamma(cfg, x[None, :], y[None, :]) * np.sum((x - y) ** 2)))


def _kernel_matrix(xs: np.ndarray, ys: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * cdist(xs, ys, "sqeuclidean"))


def median_heuristic_gamma(xs: np.ndarray, ys: np.ndarray, cap: int = 1000) -> float:
    """1 / median squared distance over the pooled sample (subsampled at cap)."""
    pooled = np.vstack([np.atleast_2d(xs), np.atleast_2d(ys)])[:cap]
    d2 = cdist(pooled, pooled, "sqeuclidean")
    med = float(np.median(d2[np.triu_indices_from(d2, k=1)]))
    if med <= 0:
        return 1.0
    return 1.0 / med


def _resolve_gamma(cfg: KernelConfig, xs: np.ndarray, ys: np.ndarray) -> float:
    if cfg.gamma == "auto":
        return median_heuristic_gamma(xs, ys)
    return float(cfg.gamma)


def _standardize_pair(xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pooled = np.vstack([xs, ys])
    mean = pooled.mean(axis=0)
    std = np.maximum(pooled.std(axis=0), 1e-12)
    return (xs - mean) / std, (ys - mean) / std


def mmd_block_unbiased(xs: np.ndarray, ys: np.ndarray, cfg: KernelConfig) -> float:
    """Unbiased paired MMD estimate on one block of B samples per corpus.

    (1/(B(B-1))) sum_{a != b} [k(x_a,x_b) + k(y_a,y_b) - k(x_a,y_b) - k(x_b,y_a)]

    Operates on the vectors as given; standardization, when enabled, is
    applied once at the test level over the pooled corpora.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    b = xs.shape[0]
    if b < 2 or ys.shape[0] != b:
        raise ValueError("need two blocks of equal size B >= 2")
    if xs.shape[1] != ys.shape[1]:
        raise ValueError("dimension mismatch")
    gamma = _resolve_gamma(cfg, xs, ys)
    kxx = _kernel_matrix(xs, xs, gamma)
    kyy = _kernel_matrix(ys, ys, gamma)
    kxy = _kernel_matrix(xs, ys, gamma)
    off_xx = kxx.sum() - np.trace(kxx)
    off_yy = kyy.sum() - np.trace(kyy)
    off_xy = kxy.sum() - np.trace(kxy)
    return float((off_xx + off_yy - 2.0 * off_xy) / (b * (b - 1)))


@dataclass(frozen=True)
class BTestResult:
    statistic: float
    block_stats: tuple[float, ...]
    block_size: int
    n: int
    z: float
    p_value: float
    alpha: float
    reject: bool
    gamma: float
    seed: int

    @property
    def m(self) -> int:
        return len(self.block_stats)

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "z": self.z,
            "p_value": self.p_value,
            "B": self.block_size,
            "m": self.m,
            "n": self.n,
            "alpha": self.alpha,
            "reject": self.reject,
            "gamma": self.gamma,
            "seed": self.seed,
        }


def btest(
    x_feats: np.ndarray,
    y_feats: np.ndarray,
    cfg: KernelConfig = KernelConfig(),
    alpha: float = 0.05,
    B: int | None = None,
    seed: int = 0,
    shuffle: bool = True,
) -> BTestResult:
    """Two-sample B-test on feature matrices.

    Unequal corpus sizes are truncated to the minimum after a seeded
    shuffle. The data is partitioned into m = floor(n/B) disjoint
    consecutive (x-block, y-block) pairs; remainder samples are discarded.
    """
    xs = np.atleast_2d(np.asarray(x_feats, dtype=float))
    ys = np.atleast_2d(np.asarray(y_feats, dtype=float))
    if xs.shape[1] != ys.shape[1]:
        raise ValueError("dimension mismatch between corpora")
    if min(xs.shape[0], ys.shape[0]) < 4:
        raise ValueError("need at least 4 samples per corpus")
    n = min(xs.shape[0], ys.shape[0])
    if shuffle:
        xs = xs[substream(seed, "btest", "shuffle_x").permutation(xs.shape[0])]
        ys = ys[substream(seed, "btest", "shuffle_y").permutation(ys.shape[0])]
    xs, ys = xs[:n], ys[:n]
    if cfg.standardize:
        xs, ys = _standardize_pair(xs, ys)
    gamma = _resolve_gamma(cfg, xs, ys)
    block_cfg = KernelConfig(gamma=gamma, standardize=False)

    b = int(round(np.sqrt(n))) if B is None else int(B)
    if b < 2:
        raise ValueError("block size B must be >= 2")
    m = n // b
    if m < 2:
        raise ValueError(f"only {m} block(s) of size {b}; cannot estimate block variance")

    block_stats = [
        mmd_block_unbiased(xs[i * b : (i + 1) * b], ys[i * b : (i + 1) * b], block_cfg)
        for i in range(m)
    ]
    stats = np.asarray(block_stats)
    statistic = float(stats.mean())
    sd = float(stats.std(ddof=1))
    if sd == 0.0:
        z = 0.0 if statistic == 0.0 else float(np.sign(statistic)) * np.inf
    else:
        z = statistic / (sd / np.sqrt(m))
    p_value = float(max(norm.sf(z), P_VALUE_FLOOR))
    return BTestResult(
        statistic=statistic,
        block_stats=tuple(block_stats),
        block_size=b,
        n=n,
        z=float(z),
        p_value=p_value,
        alpha=alpha,
        reject=bool(p_value < alpha),
        gamma=gamma,
        seed=seed,
    )


def statistic_distributions(
    x_feats: np.ndarray,
    y_feats: np.ndarray,
    cfg: KernelConfig = KernelConfig(),
    B: int | None = None,
    draws: int = 200,
    seed: int = 0,
) -> dict[str, np.ndarray]:
    """Empirical block-MMD distributions under H0 and H1.

    h1_samples: block MMDs between resampled x-blocks and y-blocks.
    h0_samples: block MMDs between two blocks drawn from the pooled union
    (label permutation). Deterministic given (seed, draws).
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    xs = np.atleast_2d(np.asarray(x_feats, dtype=float))
    ys = np.atleast_2d(np.asarray(y_feats, dtype=float))
    if xs.shape[1] != ys.shape[1]:
        raise ValueError("dimension mismatch between corpora")
    if cfg.standardize:
        xs, ys = _standardize_pair(xs, ys)
    gamma = _resolve_gamma(cfg, xs, ys)
    block_cfg = KernelConfig(gamma=gamma, standardize=False)
    n = min(xs.shape[0], ys.shape[0])
    b = int(round(np.sqrt(n))) if B is None else int(B)
    if xs.shape[0] < b or ys.shape[0] < b or xs.shape[0] + ys.shape[0] < 2 * b:
        raise ValueError("corpora too small for block size B")
    pooled = np.vstack([xs, ys])

    h0 = np.empty(draws)
    h1 = np.empty(draws)
    for d in range(draws):
        rng1 = substream(seed, "dist", "h1", d)
        ia = rng1.choice(xs.shape[0], size=b, replace=False)
        ib = rng1.choice(ys.shape[0], size=b, replace=False)
        h1[d] = mmd_block_unbiased(xs[ia], ys[ib], block_cfg)
        rng0 = substream(seed, "dist", "h0", d)
        ip = rng0.choice(pooled.shape[0], size=2 * b, replace=False)
        h0[d] = mmd_block_unbiased(pooled[ip[:b]], pooled[ip[b:]], block_cfg)
    return {"h0_samples": h0, "h1_samples": h1, "B": b, "gamma": gamma, "seed": seed, "draws": draws}


def mmd_full_unbiased(
    x_feats: np.ndarray,
    y_feats: np.ndarray,
    cfg: KernelConfig = KernelConfig(),
    cap: int = FULL_MMD_CAP,
) -> float:
    """Oracle-grade O(n^2) unbiased MMD: single block over the full sample."""
    xs = np.atleast_2d(np.asarray(x_feats, dtype=float))
    ys = np.atleast_2d(np.asarray(y_feats, dtype=float))
    if xs.shape[0] != ys.shape[0]:
        raise ValueError("mmd_full_unbiased requires equal corpus sizes")
    if xs.shape[0] > cap:
        raise ValueError(f"n = {xs.shape[0]} exceeds cap {cap}; use btest for large corpora")
    if cfg.standardize:
        xs, ys = _standardize_pair(xs, ys)
    gamma = _resolve_gamma(cfg, xs, ys)
    return mmd_block_unbiased(xs, ys, KernelConfig(gamma=gamma, standardize=False))
