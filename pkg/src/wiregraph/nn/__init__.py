from .autodiff import Tensor
from .model import AttentionKind, ModelConfig, WireTransformer
from .optim import OptState, adam_step, cosine_lr
from .train import TrainResult, evaluate, normalized_rmse, predict, train

__all__ = [
    "Tensor",
    "AttentionKind",
    "ModelConfig",
    "WireTransformer",
    "OptState",
    "adam_step",
    "cosine_lr",
    "TrainResult",
    "train",
    "predict",
    "evaluate",
    "normalized_rmse",
]
