"""fieldlabel: a real-time human-in-the-loop annotation toolkit for YOLO
datasets — label parsing/serialization, dataset preparation, augmentation,
detection post-processing, evaluation metrics, statistical comparison, a
live annotation session engine, and a browser gateway.
"""

from .labels import (
    ClassMap,
    DatasetConfig,
    DatasetConfigError,
    LabelFileError,
    LabeledImage,
    NormalizedBox,
    load_class_map,
    load_dataset_config,
    parse_label_file,
    read_label_file,
    serialize_dataset_config,
    serialize_labels,
    write_label_file,
)
from .prep import (
    Dataset,
    SmallStratumWarning,
    collapse_classes,
    load_image_dir,
    resize_stretch,
    save_image_dir,
    stratified_split,
)
from .augment import AugmentSpec, Rotation, augment_dataset, color_jitter
from .detect import (
    BackendDescriptor,
    BackendError,
    Detection,
    DetectorConfig,
    InferenceTimeout,
    MockBackend,
    detect,
    filter_confidence,
    iou,
    load_backend,
    nms,
    register_backend,
)
from .metrics import (
    EvalReport,
    MatchOutcome,
    UndefinedMetricError,
    average_precision,
    build_eval_report,
    f1,
    map_50_95,
    match_predictions,
)
from .stats import (
    BoxSummary,
    DegenerateSamplesError,
    MetricSeries,
    TestResult,
    box_summary,
    compare_configs,
    format_p_value,
    histogram,
    ingest_training_log,
    student_t_sf,
    t_test,
)
from .session import (
    EndOfStream,
    FrameRecord,
    Session,
    SessionConfig,
    SessionStats,
    SourceSpec,
    StaleFrameError,
    recover_session_dir,
    start_session,
)

__version__ = "0.1.0"
