"""Parking availability forecasting with a spectral spatial block and causal temporal attention."""
from .model import DeepPA, ModelConfig
from .training import TrainConfig, evaluate, train

__all__ = ["DeepPA", "ModelConfig", "TrainConfig", "evaluate", "train"]
__version__ = "0.1.0"
