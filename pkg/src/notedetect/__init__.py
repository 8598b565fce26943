"""Currency-note detection toolkit: dataset handling, augmentation,
evaluation metrics, a pluggable detector pipeline, and an HTTP service.
"""

from .augment import (
    AffineTransform,
    AugmentationSpec,
    AugmentedDataset,
    AugmentedRecord,
    DegenerateTransformError,
    GenerationError,
    Provenance,
    augment_dataset,
    augment_record,
    compose_affine,
    read_provenance,
    resample_image,
    transform_box,
    write_provenance,
)
from .detector import (
    EMPTY_RESULT_MESSAGE,
    BackendInfo,
    BackendPool,
    DetectionResult,
    DetectorBackend,
    FixtureError,
    InferenceError,
    InferenceTiming,
    RawDetections,
    ScaleInfo,
    StubBackend,
    TFLiteBackend,
    fixture_from_dataset,
    infer,
    label_to_phrase,
    load_stub_fixture,
    nms,
    postprocess,
    preprocess,
    stub_detect,
    write_stub_fixture,
)
from .metrics import (
    DEFAULT_VARIANT_ROWS,
    IOU_THRESHOLDS,
    RECALL_GRID,
    Detection,
    EvaluationError,
    EvaluationReport,
    InterchangeError,
    MatchResult,
    MetricsError,
    ModelVariantRow,
    PRCurve,
    TrainingLogRecord,
    TrainingSummary,
    VariantSelection,
    average_precision,
    evaluate,
    iou,
    match_detections,
    mean_average_precision,
    precision_recall_curve,
    read_detections_file,
    read_training_log,
    read_variant_table,
    select_backend_variant,
    summarize_training_log,
    write_detections_file,
    write_report,
    write_training_log,
    write_variant_table,
)
from .voc import (
    CLASS_LABELS,
    CLASS_NAMES,
    BoundingBox,
    BoxValidationError,
    ClassLabel,
    Dataset,
    DatasetError,
    GroundTruthObject,
    ImageRecord,
    LabelError,
    Violation,
    VocError,
    VocParseError,
    emit_voc_annotation,
    label_from_id,
    label_from_name,
    load_dataset,
    lookup_label,
    parse_voc_annotation,
    save_dataset,
    scan_dataset,
    split_dataset,
    validate_dataset,
)

__version__ = "0.1.0"
