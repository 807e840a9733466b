"""Classifier evaluation under shift: labels, metrics, abstention, reports.

Undefined rates (zero denominators, single-class AUC) are reported as None,
never as 0 or a silent NaN, so degenerate cohorts stay honest in reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.stats import rankdata

from . import embedding as emb
from . import mmd as mmdmod

DEFAULT_CONDITIONS = frozenset(
    {"Cardiomegaly", "Consolidation", "Edema", "Pleural Effusion", "Pneumonia", "Pneumothorax"}
)

EXCLUDED = "excluded"


@dataclass(frozen=True)
class LabelerOutput:
    """One labeler's read of one image: flagged conditions + No Finding."""

    conditions: frozenset[str] = frozenset()
    no_finding: bool = False


@dataclass(frozen=True)
class PredictionRecord:
    id: str
    score: float
    label: int

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


def merge_labels(a: LabelerOutput, b: LabelerOutput, conditions: frozenset[str] = DEFAULT_CONDITIONS):
    """Abnormal (1) if any tracked condition is flagged by BOTH labelers;
    normal (0) if both report No Finding; otherwise EXCLUDED."""
    if not conditions:
        raise ValueError("condition set must be nonempty")
    if a.conditions & b.conditions & conditions:
        return 1
    if a.no_finding and b.no_finding:
        return 0
    return EXCLUDED


@dataclass(frozen=True)
class MetricsReport:
    auc: float | None
    accuracy: float | None
    precision: float | None
    sensitivity: float | None
    specificity: float | None
    ppv: float | None
    npv: float | None
    n: int
    threshold: float
    abstention_fraction: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def auc_rank(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """AUC via the Mann-Whitney rank statistic; ties count one half."""
    n1 = int(labels.sum())
    n0 = len(labels) - n1
    if n1 == 0 or n0 == 0:
        return None
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def _rate(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


def metrics_report(
    preds: list[PredictionRecord],
    threshold: float = 0.5,
    abstention_fraction: float = 0.0,
) -> MetricsReport:
    """Confusion metrics at a threshold (score >= threshold is positive) plus AUC."""
    if not preds:
        raise ValueError("need at least one prediction")
    scores = np.array([p.score for p in preds])
    labels = np.array([p.label for p in preds])
    pos = scores >= threshold
    tp = int(np.sum(pos & (labels == 1)))
    fp = int(np.sum(pos & (labels == 0)))
    fn = int(np.sum(~pos & (labels == 1)))
    tn = int(np.sum(~pos & (labels == 0)))
    ppv = _rate(tp, tp + fp)
    return MetricsReport(
        auc=auc_rank(scores, labels),
        accuracy=(tp + tn) / len(preds),
        precision=ppv,
        sensitivity=_rate(tp, tp + fn),
        specificity=_rate(tn, tn + fp),
        ppv=ppv,
        npv=_rate(tn, tn + fn),
        n=len(preds),
        threshold=threshold,
        abstention_fraction=abstention_fraction,
    )


def abstain_by_confidence(preds: list[PredictionRecord], keep_fraction: float) -> list[PredictionRecord]:
    """Keep the ceil(keep_fraction * n) most confident predictions.

    Confidence is |score - 0.5|; ties break by ascending id so the retained
    set is independent of input order.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must be in (0, 1]")
    if not preds:
        return []
    ranked = sorted(preds, key=lambda p: (-abs(p.score - 0.5), p.id))
    return ranked[: math.ceil(keep_fraction * len(preds))]


@dataclass(frozen=True)
class ShiftHistogram:
    edges: np.ndarray
    counts: np.ndarray


def prediction_shift_histogram(
    preds_a: dict[str, float],
    preds_b: dict[str, float],
    bin_width: float = 0.05,
) -> ShiftHistogram:
    """Histogram of per-id score differences (a - b) over [-1, 1]."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    missing = sorted(set(preds_a) ^ set(preds_b))
    if missing:
        raise ValueError(f"id mismatch between prediction sets: {missing}")
    ids = sorted(preds_a)
    diffs = np.array([preds_a[i] - preds_b[i] for i in ids])
    nbins = int(np.ceil(2.0 / bin_width))
    edges = -1.0 + bin_width * np.arange(nbins + 1)
    edges[-1] = max(edges[-1], 1.0)
    idx = np.floor((diffs - edges[0]) / bin_width).astype(int)
    idx = np.clip(idx, 0, nbins - 1)  # +1 boundary falls in the closed last bin
    counts = np.bincount(idx, minlength=nbins)
    return ShiftHistogram(edges=edges, counts=counts)


def _pair_report(
    feats: np.ndarray,
    feats_target: np.ndarray,
    name: str,
    kernel_cfg: mmdmod.KernelConfig,
    x_range,
    y_range,
    bins: int,
    alpha: float,
    B: int | None,
    seed: int,
) -> dict:
    result = mmdmod.btest(feats, feats_target, kernel_cfg, alpha=alpha, B=B, seed=seed)
    model = emb.fit_embedding(np.vstack([feats, feats_target]), corpus_ids=(name, "target"))
    grid = emb.estimate_density(
        {name: emb.project(model, feats), "target": emb.project(model, feats_target)},
        x_range=x_range,
        y_range=y_range,
        bins=bins,
    )
    overlap = emb.overlap_report(grid)
    return {
        "statistic": result.statistic,
        "p_value": result.p_value,
        "z": result.z,
        "bhattacharyya": overlap["bhattacharyya"],
        "non_overlap_mass": overlap["non_overlap_mass"],
    }


def adaptation_report(
    features_src: np.ndarray,
    features_adapted: np.ndarray,
    features_target: np.ndarray,
    kernel_cfg: mmdmod.KernelConfig = mmdmod.KernelConfig(),
    x_range: tuple[float, float] = emb.DEFAULT_RANGE[0],
    y_range: tuple[float, float] = emb.DEFAULT_RANGE[1],
    bins: int = emb.DEFAULT_BINS,
    alpha: float = 0.05,
    B: int | None = None,
    seed: int = 0,
) -> dict:
    """Shift measurements before and after adaptation, against the target.

    Each row (source vs target, adapted vs target) carries the B-test
    statistic and p-value plus density overlap numbers; deltas summarize
    how much adaptation moved each measure.
    """
    fs = np.atleast_2d(np.asarray(features_src, dtype=float))
    fa = np.atleast_2d(np.asarray(features_adapted, dtype=float))
    ft = np.atleast_2d(np.asarray(features_target, dtype=float))
    if not (fs.shape[1] == fa.shape[1] == ft.shape[1]):
        raise ValueError("feature sets must share dimension")
    args = (kernel_cfg, x_range, y_range, bins, alpha, B, seed)
    source_row = _pair_report(fs, ft, "source", *args)
    adapted_row = _pair_report(fa, ft, "adapted", *args)
    return {
        "source_vs_target": source_row,
        "adapted_vs_target": adapted_row,
        "delta": {
            "statistic": adapted_row["statistic"] - source_row["statistic"],
            "bhattacharyya": adapted_row["bhattacharyya"] - source_row["bhattacharyya"],
            "p_value": adapted_row["p_value"] - source_row["p_value"],
        },
    }
