"""Subband eigenvector CSI feedback with a quantized transformer autoencoder."""

__version__ = "0.1.0"

from .augment import AugmentConfig
from .channelgen import (
    ChannelParams,
    CsiSample,
    Dataset,
    FreqChannel,
    build_dataset,
    dominant_eigenvector,
    extract_csi,
    synth_freq_channel,
)
from .codebook import CodebookConfig
from .ensemble import EnsembleConfig
from .metrics import EvalReport, sgcs
from .model import ModelConfig, ModelWeights, count_flops, count_params, init_model
from .quantizer import Bitstream
from .training import StageConfig, TrainConfig, staged_train, train_run

__all__ = [
    "AugmentConfig",
    "Bitstream",
    "ChannelParams",
    "CodebookConfig",
    "CsiSample",
    "Dataset",
    "EnsembleConfig",
    "EvalReport",
    "FreqChannel",
    "ModelConfig",
    "ModelWeights",
    "StageConfig",
    "TrainConfig",
    "build_dataset",
    "count_flops",
    "count_params",
    "dominant_eigenvector",
    "extract_csi",
    "init_model",
    "sgcs",
    "staged_train",
    "synth_freq_channel",
    "train_run",
]
