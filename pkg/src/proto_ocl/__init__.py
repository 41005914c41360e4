"""Non-exemplar online class-incremental learning on feature vectors.

A base session trains a projection into a high-dimensional space; each
later session absorbs a novel-class stream in a single pass, keeps only
per-class Gaussian statistics and unit prototypes, and re-optimizes
prototypes and projection on calibrated pseudo-features alone.
"""

__version__ = "0.1.0"

from .base_trainer import BaseTrainConfig, BaseTrainResult, train_base
from .calibration import (
    CalibrationConfig,
    ClassStats,
    power_transform,
    sample_pseudo_features,
    sample_pseudo_features_counts,
    update_stats,
)
from .checkpoint import (
    CheckpointBundle,
    load_checkpoint,
    pack_checkpoint,
    save_checkpoint,
    state_payload_bytes,
    unpack_checkpoint,
)
from .dataio import (
    FeatureSet,
    LabeledFeature,
    PartitionPlan,
    gen_synthetic,
    make_partition,
    parse_partition_spec,
    read_fvec,
    write_fvec,
)
from .evaluation import (
    Metrics,
    classify,
    classify_batch,
    compute_metrics,
    harmonic_accuracy,
    state_byte_account,
)
from .numerics import NumericFailure, Rng, check_finite
from .online_learner import (
    LearnerState,
    OnlineConfig,
    SessionRecord,
    absorb_stream,
    align_projection,
    bilevel_optimize,
    refine_prototypes,
    run_online_session,
)
from .projection import (
    AffineLayer,
    LossHead,
    ProjectionModule,
    init_head,
    init_projection,
    project,
    project_batch,
)
from .prototypes import PrototypeBank, unit
