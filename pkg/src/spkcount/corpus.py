"""Simulated 4-class overlapping-speech corpus.

Each entry is a short segment holding 0-3 concurrent talkers. Talkers are
mixed at a random signal-to-interference ratio relative to the first one,
and the label counts the sources that are actually active inside the
segment (energy VAD on each clean source), so a talker that is silent over
the cropped window does not count. Non-speech entries are digital silence
or band-limited noise.

At desk scale the talkers are synthetic harmonic sources; a directory of
real 16 kHz mono WAVs can be used instead.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import signal

from spkcount.dsp import (
    SAMPLE_RATE,
    AudioSegment,
    DspConfig,
    extract_lmfb,
    frame_signal,
    read_wav,
    samples_for_frames,
)

SPLITS = ("train", "cv", "test")


class ClassLabel(enum.IntEnum):
    NON_SPEECH = 0
    ONE_SPEAKER = 1
    TWO_SPEAKERS = 2
    THREE_SPEAKERS = 3


class CorpusError(ValueError):
    pass


# ------------------------------------------------------------------ mixing


def _power(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x)) if x.size else 0.0


def sir_gains(sources, sir_db) -> list[float]:
    """Amplitude gain per source so that P(s0) / P(g_i s_i) = 10^(sir_i / 10)."""
    sources = [s.samples if isinstance(s, AudioSegment) else np.asarray(s, float) for s in sources]
    sir_db = list(sir_db)
    if not sources:
        raise CorpusError("need at least one source to mix")
    if len(sir_db) != len(sources) - 1:
        raise CorpusError(f"{len(sources)} sources need {len(sources) - 1} SIR values, got {len(sir_db)}")
    if any(len(s) != len(sources[0]) for s in sources):
        raise CorpusError("all sources must have the same length")
    p0 = _power(sources[0])
    gains = [1.0]
    for i, (s, sir) in enumerate(zip(sources[1:], sir_db), start=1):
        p = _power(s)
        if p == 0.0:
            raise CorpusError(f"interferer {i} has zero power; SIR is undefined")
        if p0 == 0.0:
            raise CorpusError("target source has zero power; SIR is undefined")
        gains.append(math.sqrt(p0 / (p * 10.0 ** (sir / 10.0))))
    return gains


def mix_sources(sources, sir_db) -> AudioSegment:
    """Sum sources at the requested SIRs, peak-normalising only if it would clip."""
    arrays = [s.samples if isinstance(s, AudioSegment) else np.asarray(s, float) for s in sources]
    gains = sir_gains(arrays, sir_db)
    mix = np.zeros_like(arrays[0])
    for g, s in zip(gains, arrays):
        mix += g * s
    peak = float(np.max(np.abs(mix))) if mix.size else 0.0
    if peak > 1.0:
        mix /= peak
    return AudioSegment(mix)


# -------------------------------------------------------------- labeling


def frame_energies(x, cfg: DspConfig = DspConfig()) -> np.ndarray:
    frames = frame_signal(x, cfg)
    return np.einsum("tn,tn->t", frames, frames)


def energy_vad(x, cfg: DspConfig = DspConfig(), rel_threshold_db: float = -30.0) -> np.ndarray:
    """Frame is active iff its energy exceeds peak frame energy * 10^(thr/10)."""
    if rel_threshold_db >= 0:
        raise ValueError("rel_threshold_db must be negative")
    e = frame_energies(x, cfg)
    if e.size == 0:
        return np.zeros(0, dtype=bool)
    peak = e.max()
    if peak <= 0:
        return np.zeros(e.shape, dtype=bool)
    return e > peak * 10.0 ** (rel_threshold_db / 10.0)


def label_segment(masks, min_active_frames: int) -> ClassLabel:
    masks = [np.asarray(m, dtype=bool) for m in masks]
    if masks and any(len(m) != len(masks[0]) for m in masks):
        raise ValueError("activity masks must share one frame count")
    active = sum(int(m.sum() >= min_active_frames) for m in masks)
    return ClassLabel(min(active, len(ClassLabel) - 1))


# ------------------------------------------------------------- synthesis


def synth_voice(f0: float, duration_frames: int, seed, cfg: DspConfig = DspConfig()) -> AudioSegment:
    """Voiced-speech stand-in: a harmonic source with a wandering pitch,
    formant-like spectral shaping and syllable-like bursts separated by
    silent gaps. Same (f0, duration, seed) gives bit-identical output.
    """
    if not 60 <= f0 <= 400:
        raise ValueError("f0 must be within [60, 400] Hz")
    rng = np.random.default_rng(seed)
    n = samples_for_frames(duration_frames, cfg)
    sr = cfg.sample_rate
    t = np.arange(n) / sr

    # slow pitch wander, at most about +-4%
    rates = rng.uniform(0.3, 3.0, 3)
    phases = rng.uniform(0, 2 * np.pi, 3)
    depth = rng.uniform(0.005, 0.013, 3)
    f0_t = f0 * (1.0 + (depth[:, None] * np.sin(2 * np.pi * rates[:, None] * t + phases[:, None])).sum(0))
    phase = 2 * np.pi * np.cumsum(f0_t) / sr

    tilt = rng.uniform(1.0, 1.5)
    f1, f2 = rng.uniform(300, 900), rng.uniform(900, 2500)
    n_harm = max(1, int(7000 // (f0 * 1.05)))
    h = np.arange(1, n_harm + 1)
    hf = h * f0
    amp = h**-tilt * (1 + 0.8 * np.exp(-(((hf - f1) / 150.0) ** 2)) + 0.5 * np.exp(-(((hf - f2) / 250.0) ** 2)))
    amp[0] = h[0] ** -tilt  # keep the fundamental dominant
    voice = np.zeros(n)
    for k, a in zip(h, amp):
        voice += a * np.sin(k * phase + rng.uniform(0, 2 * np.pi))

    env = np.zeros(n)
    pos = int(rng.uniform(0.0, 0.15) * sr)
    while pos < n:
        burst = int(rng.uniform(0.10, 0.35) * sr)
        ramp = max(1, min(int(0.02 * sr), burst // 2))
        shape = np.ones(burst)
        shape[:ramp] = np.sin(0.5 * np.pi * np.arange(ramp) / ramp) ** 2
        shape[-ramp:] = shape[:ramp][::-1]
        end = min(n, pos + burst)
        env[pos:end] = rng.uniform(0.4, 1.0) * shape[: end - pos]
        pos = end + int(rng.uniform(0.03, 0.25) * sr)
    out = voice * env
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= 0.5 / peak
    return AudioSegment(out)


def synth_noise(duration_frames: int, seed, cfg: DspConfig = DspConfig()) -> AudioSegment:
    """Band-limited, slowly modulated Gaussian noise (environmental noise stand-in)."""
    rng = np.random.default_rng(seed)
    n = samples_for_frames(duration_frames, cfg)
    lo = rng.uniform(50, 1000)
    hi = rng.uniform(2000, 7500)
    sos = signal.butter(4, [lo, hi], btype="bandpass", fs=cfg.sample_rate, output="sos")
    x = signal.sosfilt(sos, rng.standard_normal(n))
    t = np.arange(n) / cfg.sample_rate
    x *= 1.0 + 0.5 * np.sin(2 * np.pi * rng.uniform(0.5, 4.0) * t + rng.uniform(0, 2 * np.pi))
    return AudioSegment(x / np.max(np.abs(x)))


# -------------------------------------------------------------- manifest


@dataclass(frozen=True)
class SourceSpec:
    kind: str  # "synth" or "file"
    seed: int = 0
    f0: float = 0.0
    frames: int = 0  # length of a synthetic utterance
    offset: int = 0  # samples into the utterance where the segment starts
    path: str = ""


@dataclass(frozen=True)
class MixSpec:
    sources: tuple[SourceSpec, ...] = ()
    sir_db: tuple[float, ...] = ()
    seed: int = 0
    segment_frames: int = 20

    def __post_init__(self):
        if len(self.sources) > 3:
            raise ValueError("at most 3 sources per mixture")
        if self.sources and len(self.sir_db) != len(self.sources) - 1:
            raise ValueError("need one SIR per interfering source")

    @property
    def source_ids(self) -> tuple[int, ...]:
        return tuple(s.seed for s in self.sources)


@dataclass(frozen=True)
class NoiseSpec:
    kind: str  # "silence" or "noise"
    seed: int = 0


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    split: str
    label: ClassLabel
    mix: MixSpec
    gain_db: float = 0.0
    noise: NoiseSpec | None = None
    audio: str = ""

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "split": self.split,
            "label": int(self.label),
            "seed": self.mix.seed,
            "segment_frames": self.mix.segment_frames,
            "sources": [asdict(s) for s in self.mix.sources],
            "sir_db": list(self.mix.sir_db),
            "gain_db": self.gain_db,
            "noise": asdict(self.noise) if self.noise else None,
            "audio": self.audio,
        }

    @classmethod
    def from_record(cls, r: dict) -> "ManifestEntry":
        mix = MixSpec(
            sources=tuple(SourceSpec(**s) for s in r["sources"]),
            sir_db=tuple(r["sir_db"]),
            seed=r["seed"],
            segment_frames=r["segment_frames"],
        )
        noise = NoiseSpec(**r["noise"]) if r.get("noise") else None
        return cls(r["id"], r["split"], ClassLabel(r["label"]), mix, r["gain_db"], noise, r.get("audio", ""))


@dataclass
class DatasetManifest:
    split: str
    entries: list[ManifestEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def counts(self) -> dict[int, int]:
        out = {int(c): 0 for c in ClassLabel}
        for e in self.entries:
            out[int(e.label)] += 1
        return out

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(e.label) for e in self.entries], dtype=np.int64)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_record(), sort_keys=True) + "\n" for e in self.entries)

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        entries = []
        for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                entries.append(ManifestEntry.from_record(json.loads(line)))
            except (KeyError, TypeError, ValueError) as e:
                raise CorpusError(f"{path}:{n}: malformed manifest record ({e})") from e
        split = entries[0].split if entries else Path(path).stem
        return cls(split, entries)

    def checksum(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()


# --------------------------------------------------------------- builder


@dataclass(frozen=True)
class DatasetConfig:
    train_per_class: int = 5000
    cv_per_class: int = 500
    test_per_class: int = 500
    classes: tuple[int, ...] = (0, 1, 2, 3)
    segment_frames: int = 20
    seed: int = 0
    sir_db_range: tuple[float, float] = (0.0, 5.0)
    rel_threshold_db: float = -30.0
    # fraction of the segment a source must be active to count as a talker
    min_active_fraction: float = 0.25
    max_sources: int = 3
    # utterances are this many frames longer than the segment; the crop offset is uniform
    utterance_extra_frames: int = 50
    f0_range: tuple[float, float] = (80.0, 280.0)
    silence_fraction: float = 0.5
    gain_db_range: tuple[float, float] = (-20.0, -1.0)
    source_dir: str | None = None
    max_attempts: int = 500

    def __post_init__(self):
        for name in ("classes", "sir_db_range", "f0_range", "gain_db_range"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not set(self.classes) <= {0, 1, 2, 3} or not self.classes:
            raise ValueError("classes must be a non-empty subset of 0..3")
        if self.segment_frames < 1:
            raise ValueError("segment_frames must be >= 1")

    def per_class(self, split: str) -> int:
        return {"train": self.train_per_class, "cv": self.cv_per_class, "test": self.test_per_class}[split]

    @property
    def min_active_frames(self) -> int:
        return max(1, math.ceil(self.min_active_fraction * self.segment_frames))

    def scaled(self, scale: float) -> "DatasetConfig":
        return replace(
            self,
            train_per_class=round(self.train_per_class * scale),
            cv_per_class=round(self.cv_per_class * scale),
            test_per_class=round(self.test_per_class * scale),
        )


def _seed_int(*entropy) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1, np.uint64)[0] >> 1)


def list_source_files(source_dir) -> list[str]:
    files = sorted(str(p) for p in Path(source_dir).glob("*.wav"))
    if not files:
        raise CorpusError(f"no .wav files in {source_dir}")
    return files


_FILE_CACHE: dict[str, np.ndarray] = {}


def _file_samples(path: str) -> np.ndarray:
    if path not in _FILE_CACHE:
        _FILE_CACHE[path] = read_wav(path).samples
    return _FILE_CACHE[path]


def render_source(spec: SourceSpec, segment_frames: int, dsp: DspConfig = DspConfig()) -> np.ndarray:
    """Clean, unscaled samples of one source over the segment window."""
    n = samples_for_frames(segment_frames, dsp)
    if spec.kind == "synth":
        utt = synth_voice(spec.f0, spec.frames, spec.seed, dsp).samples
    elif spec.kind == "file":
        utt = _file_samples(spec.path)
    else:
        raise CorpusError(f"unknown source kind {spec.kind!r}")
    seg = utt[spec.offset : spec.offset + n]
    if len(seg) != n:
        raise CorpusError(f"source {spec} too short for a {segment_frames}-frame segment")
    return seg


def render_sources(entry: ManifestEntry, dsp: DspConfig = DspConfig()) -> list[np.ndarray]:
    return [render_source(s, entry.mix.segment_frames, dsp) for s in entry.mix.sources]


def render_entry(entry: ManifestEntry, dsp: DspConfig = DspConfig()) -> tuple[AudioSegment, list[np.ndarray]]:
    """(mixture, clean sources) for a manifest entry."""
    frames = entry.mix.segment_frames
    gain = 10.0 ** (entry.gain_db / 20.0)
    if entry.mix.sources:
        sources = render_sources(entry, dsp)
        mix = mix_sources(sources, entry.mix.sir_db).samples
        mix = mix * (gain / np.max(np.abs(mix)))
        return AudioSegment(mix), sources
    if entry.noise is None or entry.noise.kind == "silence":
        return AudioSegment(np.zeros(samples_for_frames(frames, dsp))), []
    noise = synth_noise(frames, entry.noise.seed, dsp).samples * gain
    return AudioSegment(noise), []


def relabel(entry: ManifestEntry, cfg: DatasetConfig = DatasetConfig(), dsp: DspConfig = DspConfig()) -> ClassLabel:
    """Recompute an entry's label from the activity of its stored sources."""
    sources = render_sources(entry, dsp)
    masks = [energy_vad(s, dsp, cfg.rel_threshold_db) for s in sources]
    return label_segment(masks, cfg.min_active_frames)


def _draw_entry(cfg: DatasetConfig, dsp: DspConfig, split: str, label: int, index: int,
                files: list[str] | None) -> ManifestEntry:
    entry_id = f"{split}-{label}-{index:05d}"
    split_code = SPLITS.index(split)
    n = samples_for_frames(cfg.segment_frames, dsp)
    for attempt in range(cfg.max_attempts):
        seed = _seed_int(cfg.seed, split_code, label, index, attempt)
        rng = np.random.default_rng(seed)
        gain_db = float(rng.uniform(*cfg.gain_db_range))
        if label == 0:
            kind = "silence" if rng.random() < cfg.silence_fraction else "noise"
            noise = NoiseSpec(kind, _seed_int(seed, 1))
            return ManifestEntry(entry_id, split, ClassLabel(0), MixSpec((), (), seed, cfg.segment_frames),
                                 gain_db, noise)
        sources = []
        if files is None:
            max_offset = cfg.utterance_extra_frames * dsp.hop
            for k in range(label):
                sources.append(SourceSpec(
                    "synth",
                    seed=_seed_int(seed, 2, k),
                    f0=float(rng.uniform(*cfg.f0_range)),
                    frames=cfg.segment_frames + cfg.utterance_extra_frames,
                    offset=int(rng.integers(0, max_offset + 1)),
                ))
        else:
            for k in rng.choice(len(files), size=label, replace=False):
                length = len(_file_samples(files[k]))
                if length < n:
                    continue
                sources.append(SourceSpec("file", offset=int(rng.integers(0, length - n + 1)), path=files[k]))
            if len(sources) != label:
                continue
        sir = tuple(float(v) for v in rng.uniform(*cfg.sir_db_range, size=label - 1))
        entry = ManifestEntry(entry_id, split, ClassLabel(label), MixSpec(tuple(sources), sir, seed, cfg.segment_frames),
                              gain_db)
        if relabel(entry, cfg, dsp) == label:
            return entry
    raise CorpusError(
        f"could not draw a {label}-speaker segment for {entry_id} in {cfg.max_attempts} attempts; "
        "sources may be too sparse for the activity threshold"
    )


def build_split(cfg: DatasetConfig, split: str, dsp: DspConfig = DspConfig()) -> DatasetManifest:
    files = list_source_files(cfg.source_dir) if cfg.source_dir else None
    for c in cfg.classes:
        limit = len(files) if files is not None else cfg.max_sources
        if c > limit:
            raise CorpusError(f"class {c} needs {c} distinct sources but only {limit} are available")
    entries = [
        _draw_entry(cfg, dsp, split, c, i, files)
        for c in cfg.classes
        for i in range(cfg.per_class(split))
    ]
    return DatasetManifest(split, entries)


def build_dataset(cfg: DatasetConfig = DatasetConfig(), dsp: DspConfig = DspConfig(),
                  splits=SPLITS) -> dict[str, DatasetManifest]:
    """Balanced manifests for each split; deterministic in ``cfg.seed``."""
    return {split: build_split(cfg, split, dsp) for split in splits}


def featurize_manifest(manifest: DatasetManifest, dsp: DspConfig = DspConfig()) -> np.ndarray:
    """(N, T, n_mels) LMFB stack rendered straight from the specs (no WAV round trip)."""
    return np.stack([extract_lmfb(render_entry(e, dsp)[0], dsp) for e in manifest])
