"""Attention-guided CNN speaker counting (0-3 speakers) in numpy."""

from spkcount.corpus import ClassLabel, DatasetConfig, build_dataset
from spkcount.dsp import AudioSegment, DspConfig, extract_lmfb
from spkcount.config import ExperimentConfig, desk_config
from spkcount.evaluation import ConfusionMatrix, compute_metrics, evaluate_model
from spkcount.nn import ModelConfig, SpeakerCounter, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AudioSegment",
    "ClassLabel",
    "ConfusionMatrix",
    "DatasetConfig",
    "DspConfig",
    "ExperimentConfig",
    "ModelConfig",
    "SpeakerCounter",
    "TrainConfig",
    "build_dataset",
    "compute_metrics",
    "desk_config",
    "evaluate_model",
    "extract_lmfb",
    "train",
]
