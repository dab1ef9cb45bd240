"""Windowed functional connectivity networks and cognitive-state decoding.

The pipeline: region-averaged time series are cut into fixed-length windows;
a network (edge-weight matrix) is estimated per window by gradient descent
(directed or weight-shared undirected), closed-form ridge regression, or
Pearson correlation; edge weights become feature vectors for a linear SVM
evaluated under within-subject or across-subject cross-validation.
"""

from .classify import (
    CVReport,
    FeatureVector,
    LinearSVMModel,
    PipelineError,
    SVMConfig,
    kfold_split,
    predict,
    run_experiment,
    train_linear_svm,
    vectorize,
)
from .estimators import (
    AdjacencyMatrix,
    DegenerateRegionWarning,
    DivergenceError,
    EstimatorConfig,
    NetworkProvenance,
    TrainingTrace,
    estimate_network,
    fit_dabn,
    fit_uabn,
    load_adjacency,
    node_loss,
    node_loss_gradient,
    pearson_network,
    ridge_closed_form,
    safe_step_size,
    save_adjacency,
)
from .synth import (
    GroundTruthNetwork,
    SynthConfig,
    build_synthetic_dataset,
    generate_ground_truth,
    simulate_scan,
)
from .timeseries import (
    Chunk,
    DatasetManifest,
    ManifestEntry,
    ManifestError,
    RegionSeries,
    ScanFormatError,
    ScanRecord,
    interpolate_temporal,
    load_manifest,
    load_scan,
    partition_into_chunks,
    zscore_chunk,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyMatrix",
    "CVReport",
    "Chunk",
    "DatasetManifest",
    "DegenerateRegionWarning",
    "DivergenceError",
    "EstimatorConfig",
    "FeatureVector",
    "GroundTruthNetwork",
    "LinearSVMModel",
    "ManifestEntry",
    "ManifestError",
    "NetworkProvenance",
    "PipelineError",
    "RegionSeries",
    "SVMConfig",
    "ScanFormatError",
    "ScanRecord",
    "SynthConfig",
    "TrainingTrace",
    "build_synthetic_dataset",
    "estimate_network",
    "fit_dabn",
    "fit_uabn",
    "generate_ground_truth",
    "interpolate_temporal",
    "kfold_split",
    "load_adjacency",
    "load_manifest",
    "load_scan",
    "node_loss",
    "node_loss_gradient",
    "partition_into_chunks",
    "pearson_network",
    "predict",
    "ridge_closed_form",
    "run_experiment",
    "safe_step_size",
    "save_adjacency",
    "simulate_scan",
    "train_linear_svm",
    "vectorize",
    "zscore_chunk",
]
