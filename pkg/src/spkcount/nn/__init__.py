from spkcount.nn import functional
from spkcount.nn.init import kaiming_init
from spkcount.nn.model import DESK_CONFIG, ModelConfig, Parameter, SpeakerCounter
from spkcount.nn.optim import Action, NumericalError, SchedulerState, scheduler_step, sgd_step
from spkcount.nn.train import EpochRecord, TrainConfig, TrainResult, train
from spkcount.nn.checkpoint import (
    Checkpoint,
    CheckpointError,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
)

__all__ = [
    "functional",
    "kaiming_init",
    "DESK_CONFIG",
    "ModelConfig",
    "Parameter",
    "SpeakerCounter",
    "Action",
    "NumericalError",
    "SchedulerState",
    "scheduler_step",
    "sgd_step",
    "EpochRecord",
    "TrainConfig",
    "TrainResult",
    "train",
    "Checkpoint",
    "CheckpointError",
    "load_checkpoint",
    "read_checkpoint",
    "save_checkpoint",
]
