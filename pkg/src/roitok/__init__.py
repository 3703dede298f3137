"""Region-based document image tokenization.

Pages are described by detected text and vision regions plus one
whole-image region. Each region yields a spatial token (its box geometry)
and pooled semantic tokens, so the token count follows page content rather
than pixel resolution.
"""

from .budget import (
    BudgetBand,
    EfficiencyReport,
    InfeasibleBudgetError,
    TokenBudget,
    count_tokens,
    efficiency_report,
    feasible_vision_sizes,
    solve_pooling,
)
from .ingestion import (
    AnnotationRecord,
    ConstructionCaps,
    CorpusError,
    CorpusStats,
    apply_construction_filters,
    corpus_stats,
    load_corpus,
    write_corpus,
)
from .metrics import (
    DetRecord,
    DetReport,
    F1Report,
    GoldBox,
    KieRecord,
    PredBox,
    iou,
    score_detection,
    score_kie,
)
from .pooling import (
    ConvReluLayer,
    LinearMap,
    PoolSpec,
    TokenizerParams,
    adaptive_avg_pool,
    backbone_stub,
    init_params,
    load_params,
    roi_align,
    save_params,
    spatial_embed,
    tokenize_document,
)
from .types import (
    BBox,
    Branch,
    FeatureMap,
    FeaturePyramid,
    PoolingConfig,
    RoI,
    RoiClass,
    RoiSet,
    Token,
    TokenSequence,
    finalize_roi_set,
    reading_order,
)

__version__ = "0.1.0"
