"""Experiment configuration as an INI file with one section per component.

Every field has its published default, so an empty file reproduces the
original recipe (Table-1-sized corpus, 8x128 conv stack, SGD at 0.01,
batch 128, at most 500 epochs).
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from spkcount.corpus import DatasetConfig
from spkcount.dsp import DspConfig
from spkcount.nn.model import DESK_CONFIG, ModelConfig
from spkcount.nn.train import TrainConfig


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    dsp: DspConfig = field(default_factory=DspConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    out_dir: str = "runs"

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(
            self,
            seed=seed,
            dataset=replace(self.dataset, seed=seed),
            train=replace(self.train, seed=seed),
        )

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["experiment"] = {"seed": str(self.seed), "out_dir": self.out_dir}
        for section in _SECTIONS:
            obj = getattr(self, section)
            cp[section] = {f.name: _format(getattr(obj, f.name)) for f in fields(obj)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_string(text)
        known = {"experiment", *_SECTIONS}
        unknown = set(cp.sections()) - known
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        base = cls()
        kwargs = {}
        for section in _SECTIONS:
            default = getattr(base, section)
            if cp.has_section(section):
                kwargs[section] = _update(default, cp[section], section)
        exp = cp["experiment"] if cp.has_section("experiment") else {}
        for key in exp:
            if key not in ("seed", "out_dir"):
                raise ValueError(f"unknown key [experiment] {key}")
        cfg = cls(**kwargs)
        if "seed" in exp:
            cfg = replace(cfg, seed=int(exp["seed"]))
        if "out_dir" in exp:
            cfg = replace(cfg, out_dir=exp["out_dir"])
        return cfg

    def save(self, path) -> None:
        Path(path).write_text(self.to_ini())

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_ini(Path(path).read_text())


_SECTIONS = ("dataset", "dsp", "model", "train")


def desk_config(**overrides) -> ExperimentConfig:
    """Desk-scale preset: small conv stack that trains on one CPU core."""
    return ExperimentConfig(model=DESK_CONFIG, **overrides)


def _format(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    return str(v)


def _parse(text: str, default):
    text = text.strip()
    if isinstance(default, bool):
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {text!r}")
        return text.lower() in ("true", "1", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        items = [s for s in (p.strip() for p in text.split(",")) if s]
        proto = default[0] if default else 0.0
        return tuple(_parse(s, proto) for s in items)
    if default is None:
        return text or None
    return text


def _update(obj, section, name):
    valid = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, raw in section.items():
        if key not in valid:
            raise ValueError(f"unknown key [{name}] {key}")
        changes[key] = _parse(raw, getattr(obj, key))
    return replace(obj, **changes)
