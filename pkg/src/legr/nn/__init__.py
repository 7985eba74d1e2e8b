from legr.nn.functional import ShapeError, conv2d
from legr.nn.model import LayerParams, Model, Param, TapeError, init_params
from legr.nn.optim import BatchStream, TrainConfig, evaluate, lr_at, sgd_step, train_steps

__all__ = [
    "BatchStream",
    "LayerParams",
    "Model",
    "Param",
    "ShapeError",
    "TapeError",
    "TrainConfig",
    "conv2d",
    "evaluate",
    "init_params",
    "lr_at",
    "sgd_step",
    "train_steps",
]
