"""Desk-scale experiments: the overfit sanity run and the duration trend.

Both use the small conv stack (:data:`DESK_CONFIG`) because the published
8x128 model costs minutes per epoch on one CPU core.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from spkcount.corpus import DatasetConfig, build_dataset, featurize_manifest
from spkcount.dsp import DspConfig
from spkcount.evaluation import evaluate_model
from spkcount.nn import DESK_CONFIG, ModelConfig, SpeakerCounter, TrainConfig, train

log = logging.getLogger(__name__)

METHODS = ("attention", "avgpool")

# 800 / 160 / 160 segments over 4 classes
TREND_DATA = DatasetConfig(train_per_class=200, cv_per_class=40, test_per_class=40)
TREND_TRAIN = TrainConfig(batch_size=32, max_epochs=100)
# model used for the overfit sanity run
TOY_MODEL = DESK_CONFIG


@dataclass
class OverfitResult:
    method: str
    train_acc: float
    epochs: int
    seconds: float
    model: SpeakerCounter | None = field(default=None, repr=False)


def overfit_toy(method: str, per_class: int = 10, frames: int = 20, max_epochs: int = 200,
                target: float = 0.95, seed: int = 0, model: ModelConfig = TOY_MODEL,
                batch_size: int = 8) -> OverfitResult:
    """Train on a tiny set until training accuracy reaches ``target``."""
    cfg = DatasetConfig(train_per_class=per_class, segment_frames=frames, seed=seed)
    ds = build_dataset(cfg, splits=("train",))["train"]
    x = featurize_manifest(ds).astype(np.float32)
    y = ds.labels
    m = SpeakerCounter(replace(model, aggregation=method), seed=seed)
    t0 = time.perf_counter()

    class _Reached(Exception):
        pass

    def stop_when_fit(rec):
        if rec.train_acc >= target:
            raise _Reached

    # constant lr: the plateau scheduler is irrelevant to memorisation
    tcfg = TrainConfig(batch_size=batch_size, max_epochs=max_epochs, seed=seed, lr_patience=max_epochs + 1,
                       restore_best=False)
    history = []
    try:
        train(m, x, y, config=tcfg, on_epoch=lambda r: (history.append(r), stop_when_fit(r)))
    except _Reached:
        pass
    # re-measure with the final parameters (the epoch figure is a running average)
    acc = float((m.predict(x) == y).mean())
    return OverfitResult(method, acc, len(history), time.perf_counter() - t0, m)


@dataclass
class TrendRun:
    seed: int
    frames: int
    method: str
    weighted_accuracy: float
    epochs: int
    seconds: float


@dataclass
class TrendResult:
    runs: list[TrendRun] = field(default_factory=list)

    def mean(self, frames: int, method: str) -> float:
        return float(np.mean([r.weighted_accuracy for r in self.runs if r.frames == frames and r.method == method]))

    def per_seed(self, frames: int, method: str) -> dict[int, float]:
        return {r.seed: r.weighted_accuracy for r in self.runs if r.frames == frames and r.method == method}

    def checks(self, short: int = 20, long: int = 100, tol: float = 0.01) -> dict[str, bool]:
        att, avg = self.per_seed(short, "attention"), self.per_seed(short, "avgpool")
        wins = sum(att[s] > avg[s] for s in att)
        return {
            "longer_better_attention": self.mean(long, "attention") > self.mean(short, "attention"),
            "longer_better_avgpool": self.mean(long, "avgpool") > self.mean(short, "avgpool"),
            "attention_not_worse": self.mean(short, "attention") >= self.mean(short, "avgpool") - tol,
            "attention_wins_majority": wins >= 2,
        }

    def to_csv(self) -> str:
        lines = ["seed,frames,method,weighted_accuracy,epochs,seconds"]
        lines += [f"{r.seed},{r.frames},{r.method},{r.weighted_accuracy!r},{r.epochs},{r.seconds:.1f}"
                  for r in self.runs]
        return "\n".join(lines) + "\n"


def trend_experiment(seeds=(0, 1, 2), frame_list=(20, 100), data: DatasetConfig = TREND_DATA,
                     model: ModelConfig = DESK_CONFIG, train_cfg: TrainConfig = TREND_TRAIN,
                     dsp: DspConfig = DspConfig(), on_run=None) -> TrendResult:
    """Weighted test accuracy for each (seed, frames, method) cell."""
    result = TrendResult()
    for seed in seeds:
        for frames in frame_list:
            ds = build_dataset(replace(data, seed=seed, segment_frames=frames), dsp)
            x = {k: featurize_manifest(v, dsp).astype(np.float32) for k, v in ds.items()}
            y = {k: v.labels for k, v in ds.items()}
            for method in METHODS:
                t0 = time.perf_counter()
                m = SpeakerCounter(replace(model, aggregation=method), seed=seed)
                hist = train(m, x["train"], y["train"], x["cv"], y["cv"], replace(train_cfg, seed=seed))
                report, _ = evaluate_model(m, x["test"], y["test"], frames)
                run = TrendRun(seed, frames, method, report.weighted_accuracy, len(hist.history),
                               time.perf_counter() - t0)
                log.info("%s", run)
                if on_run is not None:
                    on_run(run)
                result.runs.append(run)
    return result
