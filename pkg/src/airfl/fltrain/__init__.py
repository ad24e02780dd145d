"""Federated training with over-the-air gradient aggregation on MNIST."""

from .data import (
    Dataset,
    IdxFormatError,
    holdout_split,
    load_bundled_mnist,
    load_mnist_idx,
    partition_iid,
    write_idx,
)
from .model import N_PARAMS, evaluate, local_loss_grad, loss_grad
from .train import (
    FADING,
    METRIC_COLUMNS,
    PDD,
    SCHEMES,
    STATIC,
    DataPaths,
    RoundMetrics,
    TrainConfig,
    ideal_trajectory,
    prepare_data,
    run_rounds,
    train,
    write_metrics,
)

__all__ = [
    "FADING", "METRIC_COLUMNS", "N_PARAMS", "PDD", "SCHEMES", "STATIC", "DataPaths", "Dataset",
    "IdxFormatError", "RoundMetrics", "TrainConfig", "evaluate", "holdout_split",
    "ideal_trajectory", "load_bundled_mnist", "load_mnist_idx", "local_loss_grad", "loss_grad",
    "partition_iid", "prepare_data", "run_rounds", "train", "write_metrics",
]
