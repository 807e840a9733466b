"""Whitening + 2-component PCA embedding, binned densities, overlap, OOD.

The embedding is fit on the pooled union of the corpora under comparison so
their densities live on a shared basis. Density grids use half-open bins
with a closed last edge, so boundary samples are never dropped; samples
outside the grid rectangle are counted separately, never silently lost.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

VARIANCE_FLOOR = 1e-8
DEFAULT_RANGE = ((-4.0, 4.0), (-4.0, 4.0))
DEFAULT_BINS = 50


@dataclass(frozen=True)
class EmbeddingModel:
    mean: np.ndarray
    scale: np.ndarray
    components: np.ndarray  # (dim, 2), orthonormal columns
    fit_corpus_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "components": self.components.tolist(),
            "fit_corpus_ids": list(self.fit_corpus_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingModel":
        return cls(
            mean=np.asarray(d["mean"], dtype=float),
            scale=np.asarray(d["scale"], dtype=float),
            components=np.asarray(d["components"], dtype=float),
            fit_corpus_ids=tuple(d.get("fit_corpus_ids", ())),
        )


def fit_embedding(features: np.ndarray, corpus_ids: tuple[str, ...] = ()) -> EmbeddingModel:
    """Fit per-dimension whitening and the top-2 PCA loadings.

    Components are the leading eigenvectors of the correlation matrix of
    the input, with a deterministic sign convention (largest-magnitude
    loading made positive).
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ValueError("need at least 3 samples to fit the embedding")
    if x.shape[1] < 2:
        raise ValueError("need feature dimension >= 2")
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    if np.any(scale < VARIANCE_FLOOR):
        warnings.warn("zero-variance feature dimension(s); scale floored", RuntimeWarning)
        scale = np.maximum(scale, VARIANCE_FLOOR)
    z = (x - mean) / scale
    corr = (z.T @ z) / z.shape[0]
    eigvals, eigvecs = np.linalg.eigh(corr)
    components = eigvecs[:, [-1, -2]]  # descending variance
    for c in range(2):
        k = int(np.argmax(np.abs(components[:, c])))
        if components[k, c] < 0:
            components[:, c] = -components[:, c]
    return EmbeddingModel(mean=mean, scale=scale, components=components, fit_corpus_ids=tuple(corpus_ids))


def project(model: EmbeddingModel, features: np.ndarray) -> np.ndarray:
    """Whiten rows with the fitted stats and project onto the 2 components."""
    x = np.atleast_2d(np.asarray(features, dtype=float))
    if x.shape[1] != model.mean.shape[0]:
        raise ValueError(f"feature dimension {x.shape[1]} does not match model {model.mean.shape[0]}")
    return ((x - model.mean) / model.scale) @ model.components


@dataclass
class DensityGrid:
    counts: dict[str, np.ndarray]  # (bins, bins) int arrays, indexed [ix][iy]
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    bins: int
    out_of_range: dict[str, int] = field(default_factory=dict)


def _cell_indices(coords: np.ndarray, x_range, y_range, bins: int):
    """Cell index per sample plus an in-range mask (half-open, last closed)."""
    x = coords[:, 0]
    y = coords[:, 1]
    (x0, x1), (y0, y1) = x_range, y_range
    in_range = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
    ix = np.floor((x - x0) / (x1 - x0) * bins).astype(int)
    iy = np.floor((y - y0) / (y1 - y0) * bins).astype(int)
    ix = np.where(x == x1, bins - 1, ix)
    iy = np.where(y == y1, bins - 1, iy)
    return ix, iy, in_range


def estimate_density(
    coords: dict[str, np.ndarray],
    x_range: tuple[float, float] = DEFAULT_RANGE[0],
    y_range: tuple[float, float] = DEFAULT_RANGE[1],
    bins: int = DEFAULT_BINS,
) -> DensityGrid:
    """Count per-corpus samples in a bins x bins grid over the rectangle."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if x_range[1] <= x_range[0] or y_range[1] <= y_range[0]:
        raise ValueError("degenerate range")
    counts: dict[str, np.ndarray] = {}
    oor: dict[str, int] = {}
    for corpus, pts in coords.items():
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        grid = np.zeros((bins, bins), dtype=int)
        ix, iy, ok = _cell_indices(pts, x_range, y_range, bins)
        np.add.at(grid, (ix[ok], iy[ok]), 1)
        counts[corpus] = grid
        oor[corpus] = int((~ok).sum())
    return DensityGrid(counts=counts, x_range=x_range, y_range=y_range, bins=bins, out_of_range=oor)


def overlap_report(grid: DensityGrid) -> dict:
    """Bhattacharyya coefficient and per-corpus non-overlap mass."""
    if len(grid.counts) != 2:
        raise ValueError("overlap_report needs exactly 2 corpora")
    (name_a, ca), (name_b, cb) = grid.counts.items()
    na, nb = ca.sum(), cb.sum()
    if na == 0 or nb == 0:
        raise ValueError("a corpus has no in-range samples")
    pa = ca / na
    pb = cb / nb
    bhattacharyya = float(np.sqrt(pa * pb).sum())
    return {
        "bhattacharyya": bhattacharyya,
        "non_overlap_mass": {
            name_a: float(ca[cb == 0].sum() / na),
            name_b: float(cb[ca == 0].sum() / nb),
        },
    }


@dataclass(frozen=True)
class RectangleCriterion:
    x0: float
    x1: float
    y0: float
    y1: float

    def describe(self) -> dict:
        return {"kind": "rectangle", "x0": self.x0, "x1": self.x1, "y0": self.y0, "y1": self.y1}


@dataclass(frozen=True)
class NonOverlapCriterion:
    grid: DensityGrid
    other_corpus: str
    tau: int = 0

    def describe(self) -> dict:
        return {"kind": "non_overlap", "other_corpus": self.other_corpus, "tau": self.tau}


@dataclass(frozen=True)
class OodSelection:
    indices: tuple[int, ...]
    criterion: dict


def select_ood(coords: np.ndarray, criterion) -> OodSelection:
    """Indices of samples satisfying an OOD criterion, sorted ascending.

    Rectangle: closed containment in [x0,x1] x [y0,y1]. Non-overlap: the
    sample's grid cell holds at most tau samples of the other corpus
    (out-of-range samples are never selected).
    """
    pts = np.atleast_2d(np.asarray(coords, dtype=float))
    if isinstance(criterion, RectangleCriterion):
        mask = (
            (pts[:, 0] >= criterion.x0)
            & (pts[:, 0] <= criterion.x1)
            & (pts[:, 1] >= criterion.y0)
            & (pts[:, 1] <= criterion.y1)
        )
    elif isinstance(criterion, NonOverlapCriterion):
        g = criterion.grid
        other = g.counts[criterion.other_corpus]
        ix, iy, ok = _cell_indices(pts, g.x_range, g.y_range, g.bins)
        mask = np.zeros(len(pts), dtype=bool)
        mask[ok] = other[ix[ok], iy[ok]] <= criterion.tau
    else:
        raise TypeError(f"unknown criterion {criterion!r}")
    indices = tuple(int(i) for i in np.flatnonzero(mask))
    if not indices:
        warnings.warn("OOD criterion selected no samples", RuntimeWarning)
    return OodSelection(indices=indices, criterion=criterion.describe())
