"""Soft-prompt tuning of frozen vision, text and time-series transformer stacks."""

__version__ = "0.1.0"

from .data import SeriesCollection, SplitSpec, WindowPair, load_collection, prepare  # noqa: E402
from .errors import (  # noqa: E402
    ConfigError,
    ContractError,
    DimensionError,
    DivergenceError,
    InputError,
    NumericFault,
    PromptcastError,
)
from .evaluation import ArchSpec, count_trainable, efficiency_report, evaluate, run_ablation  # noqa: E402
from .model import ModelConfig, build_model, forecast_window  # noqa: E402
from .tensor import Tensor  # noqa: E402
from .training import TrainConfig, train  # noqa: E402

__all__ = [
    "ArchSpec",
    "ConfigError",
    "ContractError",
    "DimensionError",
    "DivergenceError",
    "InputError",
    "ModelConfig",
    "NumericFault",
    "PromptcastError",
    "SeriesCollection",
    "SplitSpec",
    "Tensor",
    "TrainConfig",
    "WindowPair",
    "build_model",
    "count_trainable",
    "efficiency_report",
    "evaluate",
    "load_collection",
    "prepare",
    "run_ablation",
    "train",
    "forecast_window",
]
