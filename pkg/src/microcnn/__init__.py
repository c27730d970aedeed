"""Tiny, Fire and SmallFire CNNs for 96x96 sonar images, in plain numpy."""

from .architectures import (
    NetworkSpec,
    baseline_cnn,
    count_flops,
    count_params,
    fire_baseline,
    smallfirenet,
    tinynet,
)
from .benchmark import bench, compare
from .dataset import load_directory, synth_generate
from .model_store import load, parse_descriptor, save
from .network import Network
from .trainer import TrainConfig, gradient_check, kfold_evaluate, train

__all__ = [
    "NetworkSpec", "Network", "TrainConfig",
    "tinynet", "smallfirenet", "fire_baseline", "baseline_cnn",
    "count_params", "count_flops",
    "train", "kfold_evaluate", "gradient_check",
    "bench", "compare",
    "load_directory", "synth_generate",
    "save", "load", "parse_descriptor",
]

__version__ = "0.1.0"
