"""Video-agnostic background subtraction.

The package pairs two temporal-median background references and semantic
foreground-probability maps with a fully convolutional encoder-decoder,
trained once per train/test split so that no test video influences its own
model.  See the README for the pipeline walkthrough.
"""

from .adam import AdamConfig, AdamState, adam_step, init_adam_state
from .augmentations import (
    AugmentationConfig,
    IlluminationShift,
    add_pixel_noise,
    apply_illumination,
    augment_stack,
    random_crop_joint,
    sample_illumination,
)
from .background import (
    BackgroundPair,
    StreamingMedian,
    empty_background,
    ptz_backgrounds,
    recent_background,
    temporal_median,
)
from .evaluation import (
    ConfusionCounts,
    MetricVector,
    RankingScores,
    aggregate,
    confusion,
    metrics,
    rankings,
    video_metrics,
)
from .frames import (
    AutoFirst100,
    BinaryMask,
    ColorFrame,
    Label,
    LabelMap,
    ManualFrameList,
    NetworkInput,
    PTZ,
    ProbabilityMap,
    VideoDescriptor,
    assemble_input,
    decode_label_map,
    decode_mask,
    encode_label_map,
    encode_mask,
)
from .dataset import CacheLayout
from .losses import LossConfig, jaccard_loss, relaxed_jaccard, training_target
from .network import (
    CropRecord,
    NetworkConfig,
    SegmentationNetwork,
    binarize,
    build_model,
    forward_map,
    input_to_tensor,
    load_checkpoint,
    pad_for_network,
    parameter_count,
    parameter_manifest,
    save_checkpoint,
)
from .pipeline import (
    AblationFlags,
    apply_ablation,
    assemble_stack,
    build_backgrounds_for_video,
    build_fpms_for_video,
    evaluated_frames,
    infer_video,
)
from .semantics import (
    ClassProbabilityField,
    ExternalSegmenterAdapter,
    ForegroundClassSet,
    StubSegmenter,
    compute_fpm,
    decode_fpm,
    encode_fpm,
    fpm_threshold_bgs,
)
from .splits import (
    SplitSpec,
    SplitTable,
    bundled_manifest_path,
    category_coverage_report,
    load_splits,
)
from .train import TrainConfig, fit_batch, select_training_frames, train

__version__ = "0.1.0"
