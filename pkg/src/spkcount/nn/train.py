"""Mini-batch SGD training with plateau LR decay and early stopping."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from spkcount.nn import functional as F
from spkcount.nn.model import SpeakerCounter
from spkcount.nn.optim import Action, NumericalError, SchedulerState, scheduler_step, sgd_step

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "train_loss", "cv_loss", "train_acc", "cv_acc", "lr")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    batch_size: int = 128
    max_epochs: int = 500
    lr_factor: float = 0.7
    lr_threshold: float = 0.001
    lr_patience: int = 2
    max_decays: int = 6
    seed: int = 0
    # keep the parameters of the epoch with the lowest CV loss
    restore_best: bool = True
    # fit the model's scalar input standardisation on the training set
    normalize_input: bool = True

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("lr, batch_size and max_epochs must be positive")

    def scheduler(self) -> SchedulerState:
        return SchedulerState(
            initial_lr=self.lr,
            factor=self.lr_factor,
            threshold=self.lr_threshold,
            patience=self.lr_patience,
            max_decays=self.max_decays,
        )


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    cv_loss: float
    train_acc: float
    cv_acc: float
    lr: float


@dataclass
class TrainResult:
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = "max_epochs"
    scheduler: SchedulerState | None = None

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.history])


def evaluate_loss(model: SpeakerCounter, x, y, batch_size=128) -> tuple[float, float]:
    """(mean NLL, accuracy) over a dataset, in batches."""
    total, correct = 0.0, 0
    for start in range(0, len(x), batch_size):
        lp = model.forward(x[start : start + batch_size])
        yb = y[start : start + batch_size]
        total += F.nll_loss(lp, yb) * len(yb)
        correct += int((lp.argmax(axis=1) == yb).sum())
    model._cache = None
    return total / len(x), correct / len(x)


def fit_input_normalization(model: SpeakerCounter, x) -> None:
    x = np.asarray(x, dtype=np.float64)
    model.input_mean = float(x.mean())
    model.input_std = float(x.std()) or 1.0


def train(model: SpeakerCounter, train_x, train_y, cv_x=None, cv_y=None,
          config: TrainConfig = TrainConfig(), on_epoch=None) -> TrainResult:
    """Train ``model`` in place.

    Without a CV set the training loss drives the scheduler. ``on_epoch`` is
    called with each :class:`EpochRecord`.
    """
    train_x = np.asarray(train_x, dtype=model.dtype)
    train_y = np.asarray(train_y, dtype=np.int64)
    if len(train_x) == 0:
        raise ValueError("training set is empty")
    if len(train_x) != len(train_y):
        raise ValueError("train_x and train_y differ in length")
    if cv_x is not None:
        cv_x = np.asarray(cv_x, dtype=model.dtype)
        cv_y = np.asarray(cv_y, dtype=np.int64)
        if len(cv_x) == 0:
            cv_x = cv_y = None

    if config.normalize_input:
        fit_input_normalization(model, train_x)
    rng = np.random.default_rng(config.seed)
    sched = config.scheduler()
    result = TrainResult(scheduler=sched)
    best_loss, best_params = math.inf, None

    for epoch in range(1, config.max_epochs + 1):
        lr = sched.lr
        order = rng.permutation(len(train_x))
        loss_sum, correct = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb = train_x[idx], train_y[idx]
            lp = model.forward(xb)
            loss = F.nll_loss(lp, yb)
            if not math.isfinite(loss):
                raise NumericalError(f"training loss became {loss} at epoch {epoch}")
            loss_sum += loss * len(idx)
            correct += int((lp.argmax(axis=1) == yb).sum())
            model.zero_grad()
            model.backward(F.nll_loss_backward(lp, yb))
            names = list(model.params)
            sgd_step([model.params[n].data for n in names], [model.params[n].grad for n in names], lr)

        train_loss, train_acc = loss_sum / len(train_x), correct / len(train_x)
        if cv_x is not None:
            cv_loss, cv_acc = evaluate_loss(model, cv_x, cv_y, config.batch_size)
        else:
            cv_loss, cv_acc = train_loss, train_acc
        rec = EpochRecord(epoch, train_loss, cv_loss, train_acc, cv_acc, lr)
        result.history.append(rec)
        log.info("epoch %d train_loss %.4f cv_loss %.4f train_acc %.3f cv_acc %.3f lr %.5g",
                 epoch, train_loss, cv_loss, train_acc, cv_acc, lr)
        if on_epoch is not None:
            on_epoch(rec)

        if cv_loss < best_loss:
            best_loss, result.best_epoch = cv_loss, epoch
            if config.restore_best:
                best_params = {n: p.data.copy() for n, p in model.params.items()}

        if scheduler_step(sched, cv_loss) is Action.STOP:
            result.stop_reason = "early_stop"
            break

    if best_params is not None:
        for n, p in model.params.items():
            p.data[...] = best_params[n]
    return result


def write_history_csv(path, history) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(HISTORY_FIELDS)
        for rec in history:
            d = asdict(rec)
            w.writerow([d["epoch"]] + [repr(float(d[k])) for k in HISTORY_FIELDS[1:]])


def read_history_csv(path) -> list[EpochRecord]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [EpochRecord(int(r["epoch"]), *(float(r[k]) for k in HISTORY_FIELDS[1:])) for r in rows]

