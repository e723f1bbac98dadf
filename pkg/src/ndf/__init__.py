"""Neural dependence fields.

Compact learned representations of two-point statistical dependence
(Pearson correlation, mutual information) over 3D simulation ensembles,
with ground-truth estimators, a training pipeline, and a batched
reconstruction service.
"""

from .ensemble import (
    EnsembleField,
    GridDomain,
    LinearMixKernel,
    SquaredExponentialKernel,
    WhiteNoiseKernel,
    generate_synthetic,
    load_ensemble,
    sample_at,
    sample_many,
    save_ensemble,
)
from .measures import (
    CorrelationMeasure,
    FieldGrid,
    gaussian_mi_analytic,
    ground_truth_field,
    ksg_mi,
    load_field_grid,
    pearson,
    save_field_grid,
)
from .model import ModelSpec, NdfModel, load_model, save_model
from .service import (
    Registry,
    benchmark,
    compare_to_ground_truth,
    create_app,
    difference_field,
    matrix_reconstruct,
    reconstruct_field,
)
from .training import TrainedArtifact, TrainingConfig, psnr, sweep, train

__version__ = "0.1.0"

__all__ = [
    "CorrelationMeasure",
    "EnsembleField",
    "FieldGrid",
    "GridDomain",
    "LinearMixKernel",
    "ModelSpec",
    "NdfModel",
    "Registry",
    "SquaredExponentialKernel",
    "TrainedArtifact",
    "TrainingConfig",
    "WhiteNoiseKernel",
    "benchmark",
    "compare_to_ground_truth",
    "create_app",
    "difference_field",
    "gaussian_mi_analytic",
    "generate_synthetic",
    "ground_truth_field",
    "ksg_mi",
    "load_ensemble",
    "load_field_grid",
    "load_model",
    "matrix_reconstruct",
    "pearson",
    "psnr",
    "reconstruct_field",
    "sample_at",
    "sample_many",
    "save_ensemble",
    "save_field_grid",
    "save_model",
    "sweep",
    "train",
]
