from fringedet.model.network import GridDetector, ModelConfig
from fringedet.model.optim import AdamW, OneCycle
from fringedet.model.train import (
    Frames,
    History,
    TrainConfig,
    TrainState,
    infer,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)

__all__ = [
    "AdamW",
    "Frames",
    "GridDetector",
    "History",
    "ModelConfig",
    "OneCycle",
    "TrainConfig",
    "TrainState",
    "infer",
    "load_checkpoint",
    "predict",
    "save_checkpoint",
    "train",
]
