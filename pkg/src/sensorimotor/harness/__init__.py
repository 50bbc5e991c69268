"""Experiment harness: datasets, servo episodes, CSV logs and the CLI."""

from .config import ExperimentConfig, config_from_dict, load_config
from .data import Dataset, collect_dataset, load_dataset, save_dataset
from .episode import (
    OracleJacobian,
    TrajectoryLog,
    build_estimator,
    compare,
    export_csv,
    read_csv,
    run_servo_episode,
)

__all__ = [
    "Dataset",
    "ExperimentConfig",
    "OracleJacobian",
    "TrajectoryLog",
    "build_estimator",
    "collect_dataset",
    "compare",
    "config_from_dict",
    "export_csv",
    "load_config",
    "load_dataset",
    "read_csv",
    "run_servo_episode",
    "save_dataset",
]
