"""2D Morlet filter bank and translation-invariant scattering features.

The transform is a fixed cascade of complex wavelet convolutions and
modulus nonlinearities. Every emitted feature is a spatial sum, and all
convolutions are circular (FFT), so the features are exactly invariant to
circular shifts of the input.

Feature layout for a config (J, L, max_order):

  order 0:  sum of the low-pass response                 -> 1 entry
  order 1:  sum |x * psi_{j1,t1}|                        -> J*L entries
  order 2:  sum ||x * psi_{j1,t1}| * psi_{j2,t2}|,
            j2 > j1 (energy flows toward coarser scales) -> L^2 * J(J-1)/2

Wavelets: psi(u) = alpha (e^{i u.xi} - beta) e^{-|u|^2 / 2 sigma^2}, rotated
to angles t*pi/L and dilated by 2^j, with sigma_0 = 0.8, xi_0 = 3pi/4 and
orientation slant 4/L. beta is chosen per filter so the discrete spatial
mean is exactly zero; filters are L1-normalized in space so features are
comparable across scales.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as _fft

SIGMA0 = 0.8
XI0 = 3.0 * np.pi / 4.0


@dataclass(frozen=True)
class ScatteringConfig:
    J: int
    L: int
    max_order: int = 2
    side: int = 256

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("J must be >= 1")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.max_order not in (1, 2):
            raise ValueError("max_order must be 1 or 2")
        if 2**self.J > self.side:
            raise ValueError(f"2^J = {2**self.J} exceeds image side {self.side}")


def feature_count(J: int, L: int, max_order: int) -> int:
    """Number of scattering features for a (J, L, max_order) configuration."""
    if max_order not in (1, 2):
        raise ValueError("max_order must be 1 or 2")
    if J < 1 or L < 1:
        raise ValueError("J and L must be >= 1")
    n = 1 + J * L
    if max_order == 2:
        n += L * L * J * (J - 1) // 2
    return n


def scattering_paths(J: int, L: int, max_order: int) -> list[tuple[int, ...]]:
    """Ordered path index: () for order 0, (j1,t1), then (j1,t1,j2,t2)."""
    paths: list[tuple[int, ...]] = [()]
    paths += [(j1, t1) for j1 in range(J) for t1 in range(L)]
    if max_order == 2:
        paths += [
            (j1, t1, j2, t2)
            for j1 in range(J)
            for t1 in range(L)
            for j2 in range(j1 + 1, J)
            for t2 in range(L)
        ]
    return paths


def path_labels(J: int, L: int, max_order: int) -> list[str]:
    """Human-readable column names matching scattering_paths order."""
    labels = []
    for p in scattering_paths(J, L, max_order):
        if len(p) == 0:
            labels.append("s0")
        elif len(p) == 2:
            labels.append(f"s1_j{p[0]}t{p[1]}")
        else:
            labels.append(f"s2_j{p[0]}t{p[1]}_j{p[2]}t{p[3]}")
    return labels


def _centered_grid(side: int) -> tuple[np.ndarray, np.ndarray]:
    # Wrapped coordinates: the filter sits at pixel (0,0) of the periodic grid.
    c = np.arange(side, dtype=float)
    c[c > side // 2] -= side
    return np.meshgrid(c, c, indexing="ij")


def _morlet(side: int, sigma: float, theta: float, xi: float, slant: float) -> np.ndarray:
    gy, gx = _centered_grid(side)
    xr = gx * np.cos(theta) + gy * np.sin(theta)
    yr = -gx * np.sin(theta) + gy * np.cos(theta)
    envelope = np.exp(-(xr**2 + (slant * yr) ** 2) / (2.0 * sigma**2))
    gabor = envelope * np.exp(1j * xi * xr)
    beta = gabor.sum() / envelope.sum()
    psi = gabor - beta * envelope
    return psi / np.abs(psi).sum()


def _gaussian(side: int, sigma: float) -> np.ndarray:
    gy, gx = _centered_grid(side)
    phi = np.exp(-(gx**2 + gy**2) / (2.0 * sigma**2))
    return phi / phi.sum()


@dataclass(frozen=True)
class FilterBank:
    """Frequency-domain Morlet wavelets plus the terminal Gaussian low-pass."""

    psi_hat: dict[tuple[int, int], np.ndarray]
    phi_hat: np.ndarray
    config: ScatteringConfig

    @property
    def params(self) -> dict:
        """Construction parameters, recorded for reproducibility sidecars."""
        return {
            "sigma0": SIGMA0,
            "xi0": float(XI0),
            "slant": 4.0 / self.config.L,
            "angles": "t*pi/L",
            "normalization": "l1-space",
            "boundary": "periodic",
        }


def build_filter_bank(config: ScatteringConfig) -> FilterBank:
    """Build all J*L wavelets and the scale-2^J low-pass at full resolution."""
    slant = 4.0 / config.L
    psi_hat = {}
    for j in range(config.J):
        sigma = SIGMA0 * 2.0**j
        xi = XI0 / 2.0**j
        for t in range(config.L):
            theta = t * np.pi / config.L
            psi_hat[(j, t)] = _fft.fft2(_morlet(config.side, sigma, theta, xi, slant))
    phi_hat = _fft.fft2(_gaussian(config.side, SIGMA0 * 2.0**config.J))
    return FilterBank(psi_hat=psi_hat, phi_hat=phi_hat, config=config)


@dataclass(frozen=True)
class ScatteringFeatures:
    values: np.ndarray
    paths: list[tuple[int, ...]]
    config: ScatteringConfig


def scattering_transform(img: np.ndarray, bank: FilterBank) -> ScatteringFeatures:
    """Compute summed (translation-invariant) scattering features of one image."""
    cfg = bank.config
    x = np.asarray(img, dtype=float)
    if x.shape != (cfg.side, cfg.side):
        raise ValueError(f"image shape {x.shape} does not match bank side {cfg.side}")

    out = np.empty(feature_count(cfg.J, cfg.L, cfg.max_order))
    xhat = _fft.fft2(x)
    out[0] = _fft.ifft2(xhat * bank.phi_hat).real.sum()

    # First order, batched over all (j1, t1) wavelets at once.
    first = [(j1, t1) for j1 in range(cfg.J) for t1 in range(cfg.L)]
    psi_stack = np.stack([bank.psi_hat[p] for p in first])
    u1 = np.abs(_fft.ifft2(xhat[None, :, :] * psi_stack, axes=(-2, -1)))
    out[1 : 1 + len(first)] = u1.sum(axis=(-2, -1))

    if cfg.max_order == 2:
        k = 1 + len(first)
        u1_hat = _fft.fft2(u1[: (cfg.J - 1) * cfg.L], axes=(-2, -1))
        for i, (j1, t1) in enumerate(first):
            if j1 >= cfg.J - 1:
                break
            # Batch over every admissible (j2 > j1, t2) second-layer wavelet.
            tail = np.stack([bank.psi_hat[(j2, t2)] for j2 in range(j1 + 1, cfg.J) for t2 in range(cfg.L)])
            u2 = np.abs(_fft.ifft2(u1_hat[i][None, :, :] * tail, axes=(-2, -1)))
            out[k : k + len(tail)] = u2.sum(axis=(-2, -1))
            k += len(tail)

    return ScatteringFeatures(values=out, paths=scattering_paths(cfg.J, cfg.L, cfg.max_order), config=cfg)


def transform_corpus(images, bank: FilterBank) -> np.ndarray:
    """Stack scattering features of a corpus into an (n, features) matrix."""
    return np.stack([scattering_transform(im, bank).values for im in images])
