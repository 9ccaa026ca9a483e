from .cells import (
    DecoderCellParams,
    GruCellParams,
    gru_decoder_step,
    gru_encoder_step,
    sparse_mix,
)
from .head import FusionHead, HeadTrainConfig, project_and_fuse, train_fused_classifier
from .model import EnsembleModel, ModelConfig, TrainingDiverged, ensemble_loss, reconstruction_objective
from .optim import Adam
from .train import TrainConfig, TrainResult, learning_rate_schedule, train

__all__ = [
    "Adam",
    "DecoderCellParams",
    "EnsembleModel",
    "FusionHead",
    "GruCellParams",
    "HeadTrainConfig",
    "ModelConfig",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "ensemble_loss",
    "gru_decoder_step",
    "gru_encoder_step",
    "learning_rate_schedule",
    "project_and_fuse",
    "reconstruction_objective",
    "sparse_mix",
    "train",
    "train_fused_classifier",
]
