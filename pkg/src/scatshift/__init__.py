"""Distribution-shift detection for image corpora.

Wavelet scattering features, kernel two-sample B-test, PCA-density OOD
analysis, and abstention-aware classifier evaluation.
"""

from .corpus_io import (
    CorpusLoadError,
    CorpusManifest,
    ManifestEntry,
    load_corpus,
    load_image,
    normalize_dynamic_range,
    prepare_image,
    read_manifest,
    resample_image,
)
from .embedding import (
    DensityGrid,
    EmbeddingModel,
    NonOverlapCriterion,
    OodSelection,
    RectangleCriterion,
    estimate_density,
    fit_embedding,
    overlap_report,
    project,
    select_ood,
)
from .mmd import (
    BTestResult,
    KernelConfig,
    btest,
    median_heuristic_gamma,
    mmd_block_unbiased,
    mmd_full_unbiased,
    rbf_kernel,
    statistic_distributions,
)
from .scattering import (
    FilterBank,
    ScatteringConfig,
    ScatteringFeatures,
    build_filter_bank,
    feature_count,
    path_labels,
    scattering_paths,
    scattering_transform,
    transform_corpus,
)
from .shift_eval import (
    DEFAULT_CONDITIONS,
    EXCLUDED,
    LabelerOutput,
    MetricsReport,
    PredictionRecord,
    abstain_by_confidence,
    adaptation_report,
    auc_rank,
    merge_labels,
    metrics_report,
    prediction_shift_histogram,
)

__version__ = "0.1.0"
