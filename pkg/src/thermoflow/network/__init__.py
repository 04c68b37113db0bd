"""The flow classifier: model, training loop and checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    PARAM_ORDER,
    SWARM_BATCH,
    DetectionVerdict,
    ForwardArtifacts,
    HiddenTrajectory,
    Hyper,
    ModelParams,
    backward,
    focal_loss,
    forward,
    forward_batch,
    infer_batch,
    init_params,
    loss_and_grads,
    predict,
    total_loss,
)
from .train import AdamW, TrainConfig, TrainResult, calibrate_on, train

__all__ = [
    "PARAM_ORDER", "SWARM_BATCH", "DetectionVerdict", "ForwardArtifacts", "HiddenTrajectory", "Hyper",
    "ModelParams", "backward", "focal_loss", "forward", "forward_batch", "infer_batch", "init_params",
    "loss_and_grads", "predict", "total_loss", "load_checkpoint", "save_checkpoint", "AdamW",
    "TrainConfig", "TrainResult", "calibrate_on", "train",
]
