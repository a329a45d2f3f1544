"""Sliding-window speaker counting over an audio stream.

Samples arrive in chunks; each window is featurised from scratch as soon as
its last sample is available, then classified on its own.
"""

from __future__ import annotations

import io
import sys
import time
import wave
from dataclasses import dataclass

import numpy as np

from spkcount.dsp import DspConfig, AudioFormatError, SAMPLE_RATE, extract_lmfb, samples_for_frames


@dataclass
class StreamResult:
    start_frame: int
    label: int
    posterior: np.ndarray  # (4,), sums to 1
    latency_ms: float

    def to_line(self) -> str:
        probs = ",".join(f"{p:.6f}" for p in self.posterior)
        return f"{self.start_frame},{self.label},{probs},{self.latency_ms:.3f}"


def window_starts(n_samples: int, window_frames: int, hop_frames: int, dsp: DspConfig = DspConfig()) -> list[int]:
    """Start frames of every complete window in a signal of ``n_samples``."""
    win = samples_for_frames(window_frames, dsp)
    if n_samples < win:
        return []
    return list(range(0, (n_samples - win) // dsp.hop + 1, hop_frames))


def window_features(samples, window_frames: int, hop_frames: int, dsp: DspConfig = DspConfig()) -> np.ndarray:
    """(n_windows, window_frames, n_mels) features for batch evaluation."""
    samples = np.asarray(samples, dtype=np.float64)
    win = samples_for_frames(window_frames, dsp)
    starts = window_starts(len(samples), window_frames, hop_frames, dsp)
    if not starts:
        return np.zeros((0, window_frames, dsp.n_mels))
    return np.stack([extract_lmfb(samples[s * dsp.hop : s * dsp.hop + win], dsp) for s in starts])


def stream_predict(chunks, model, window_frames: int = 20, hop_frames: int | None = None,
                   dsp: DspConfig = DspConfig()):
    """Yield a :class:`StreamResult` per window from an iterable of sample chunks."""
    hop_frames = window_frames if hop_frames is None else hop_frames
    if window_frames < 1 or hop_frames < 1:
        raise ValueError("window_frames and hop_frames must be positive")
    win = samples_for_frames(window_frames, dsp)
    step = hop_frames * dsp.hop
    buf = np.zeros(0)
    consumed = 0  # absolute sample index of buf[0]
    next_start = 0  # absolute sample index of the next window
    for chunk in chunks:
        buf = np.concatenate([buf, np.asarray(chunk, dtype=np.float64)])
        while next_start + win <= consumed + len(buf):
            t0 = time.perf_counter()
            lo = next_start - consumed
            feats = extract_lmfb(buf[lo : lo + win], dsp)
            log_probs = model.predict_log_proba(feats[None])[0].astype(np.float64)
            posterior = np.exp(log_probs)
            posterior /= posterior.sum()
            latency = (time.perf_counter() - t0) * 1000.0
            yield StreamResult(next_start // dsp.hop, int(np.argmax(log_probs)), posterior, latency)
            next_start += step
        drop = min(max(0, next_start - consumed), len(buf))
        buf = buf[drop:]
        consumed += drop


def iter_wav_chunks(fileobj, chunk_samples: int = 1600):
    """Chunks of float samples from a 16 kHz mono 16-bit WAV or raw s16le stream."""
    head = fileobj.read(4)
    if head == b"RIFF":
        data = io.BytesIO(head + fileobj.read())
        try:
            w = wave.open(data, "rb")
        except wave.Error as e:
            raise AudioFormatError(f"bad WAV stream: {e}") from e
        if w.getnchannels() != 1 or w.getsampwidth() != 2 or w.getframerate() != SAMPLE_RATE:
            raise AudioFormatError("stream must be 16 kHz mono 16-bit PCM")
        read = w.readframes
        pending = b""
    else:
        def read(n):
            return fileobj.read(2 * n)
        pending = head
    while True:
        raw = pending + read(chunk_samples)
        pending = b""
        if len(raw) % 2:
            pending, raw = raw[-1:], raw[:-1]
        if not raw:
            break
        yield np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def open_input(path: str):
    if path == "-":
        return sys.stdin.buffer
    return open(path, "rb")
