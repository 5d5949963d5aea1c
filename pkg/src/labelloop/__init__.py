"""Cooperative machine-learning toolkit for frame-based audio annotation."""

from .annotations import (
    ClassDef,
    DiscreteAnnotation,
    FrameLabels,
    Scheme,
    Segment,
    frames_to_segments,
    load_annotation,
    save_annotation,
    segments_to_frames,
    split_at_last_label,
)
from .audio import AudioBuffer, load_audio, save_audio
from .engine import (
    CompletionConfig,
    SessionBundle,
    complete_session,
    evaluate_model,
    flagged_segments,
    train_pool_model,
    transfer_session,
)
from .features import (
    FeatureConfig,
    FeatureStream,
    compute_mfcc_dd,
    extract_session_features,
    load_features,
    pre_emphasis,
    run_pipeline,
    save_features,
    stack_context,
    temporal_average,
)
from .learner import (
    DEFAULT_SEED,
    LabeledFrameSet,
    LearnerConfig,
    LinearModel,
    ScalerParams,
    apply_scaler,
    balance_undersample,
    fit_scaler,
    load_model,
    loss_gradient,
    predict_labels,
    predict_proba,
    save_model,
    train_linear,
)
from .metrics import (
    ConfusionMatrix,
    cohens_kappa,
    confusion_and_recall,
    cronbachs_alpha,
    roc_auc_ovr,
)
from .simulation import SimulationConfig, SimulationReport, run_grid, run_simulation

__version__ = "0.1.0"
