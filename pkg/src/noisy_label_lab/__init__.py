"""Residual label cleaning and multi-label classification on synthetic structured noise."""

__version__ = "0.1.0"

from .config import ExperimentConfig, build_config, load_config
from .datagen import (
    DatasetSplit,
    GeneratorConfig,
    NoiseSpec,
    Sample,
    Vocabulary,
    annotation_quality,
    false_positive_rate,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from .errors import (
    ConfigurationError,
    FormatError,
    NoisyLabelLabError,
    TrainingDivergedError,
    UsageError,
)
from .metrics import (
    MetricsReport,
    RankedPredictions,
    average_precision,
    build_report,
    decile_breakdown,
    mean_average_precision,
    pr_curve,
)
from .model import (
    ModelDims,
    ModelParams,
    clean_labels,
    features,
    init_params,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .training import VARIANTS, TrainConfig, train

__all__ = [
    "ConfigurationError",
    "DatasetSplit",
    "ExperimentConfig",
    "FormatError",
    "GeneratorConfig",
    "MetricsReport",
    "ModelDims",
    "ModelParams",
    "NoiseSpec",
    "NoisyLabelLabError",
    "RankedPredictions",
    "Sample",
    "TrainConfig",
    "TrainingDivergedError",
    "UsageError",
    "VARIANTS",
    "Vocabulary",
    "annotation_quality",
    "average_precision",
    "build_config",
    "build_report",
    "clean_labels",
    "decile_breakdown",
    "false_positive_rate",
    "features",
    "generate_dataset",
    "init_params",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "mean_average_precision",
    "pr_curve",
    "predict",
    "save_checkpoint",
    "save_dataset",
    "train",
    "__version__",
]
