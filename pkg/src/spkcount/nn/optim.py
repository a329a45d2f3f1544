"""Plain SGD and the plateau learning-rate schedule with early stopping."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class NumericalError(FloatingPointError):
    """Non-finite values reached the optimizer."""


def sgd_step(params, grads, lr: float):
    """In-place ``p -= lr * g`` for matching lists/dicts of arrays."""
    if isinstance(params, dict):
        names = list(params)
        params, grads = [params[n] for n in names], [grads[n] for n in names]
    else:
        names = [str(i) for i in range(len(params))]
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for name, p, g in zip(names, params, grads):
        if p.shape != g.shape:
            raise ValueError(f"{name}: param shape {p.shape} != grad shape {g.shape}")
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise NumericalError(f"non-finite gradient in {name}: {bad} of {g.size} entries")
    for p, g in zip(params, grads):
        p -= lr * g
    return params


class Action(enum.Enum):
    CONTINUE = "continue"
    DECAY_LR = "decay_lr"
    STOP = "stop"


@dataclass
class SchedulerState:
    initial_lr: float = 0.01
    best_cv_loss: float = math.inf
    epochs_since_improve: int = 0
    decay_count: int = 0
    factor: float = 0.7
    threshold: float = 0.001
    patience: int = 2
    max_decays: int = 6

    @property
    def lr(self) -> float:
        # recomputed from the decay count so that lr == initial_lr * factor**k exactly
        return self.initial_lr * self.factor**self.decay_count

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 < self.factor < 1:
            raise ValueError("factor must be in (0, 1)")


def scheduler_step(state: SchedulerState, cv_loss: float) -> Action:
    """Advance the schedule by one epoch; mutates ``state`` and returns the action.

    An epoch counts as an improvement when the CV loss drops by at least
    ``threshold`` below the best loss so far. After ``patience`` consecutive
    non-improving epochs the learning rate is multiplied by ``factor``; once
    ``max_decays`` decays have happened, the next exhausted patience stops
    training instead.
    """
    if not math.isfinite(cv_loss):
        raise NumericalError(f"cross-validation loss is not finite: {cv_loss}")
    if state.best_cv_loss - cv_loss >= state.threshold:
        state.best_cv_loss = cv_loss
        state.epochs_since_improve = 0
        return Action.CONTINUE
    state.epochs_since_improve += 1
    if state.epochs_since_improve < state.patience:
        return Action.CONTINUE
    state.epochs_since_improve = 0
    if state.decay_count >= state.max_decays:
        return Action.STOP
    state.decay_count += 1
    return Action.DECAY_LR
