"""Log mel filterbank (LMFB) front end.

Chain: pre-emphasis, 25 ms / 10 ms framing at 16 kHz, 512-point one-sided
power spectrum, 40 triangular mel filters, log with a floor.
"""

from __future__ import annotations

import struct
import wave
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SAMPLE_RATE = 16000

LMFB_MAGIC = b"LMFB"
LMFB_VERSION = 1
_LMFB_HEADER = struct.Struct("<4sIII")
_CRC = struct.Struct("<I")


class InsufficientSamplesError(ValueError):
    """Raised when a segment is shorter than one analysis frame."""


class AudioFormatError(ValueError):
    """Raised for WAV files that are not 16 kHz mono 16-bit PCM."""


class ArchiveError(ValueError):
    """Raised when an LMFB archive is truncated, corrupted or of the wrong kind."""


@dataclass(frozen=True)
class AudioSegment:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise AudioFormatError(f"sample rate must be {SAMPLE_RATE}, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioSegment samples must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioSegment samples must be finite")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class DspConfig:
    sample_rate: int = SAMPLE_RATE
    pre_emphasis_coeff: float = 0.97
    frame_len: int = 400
    hop: int = 160
    nfft: int = 512
    n_mels: int = 40
    log_floor: float = 1e-10
    window: str = "rect"

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"sample_rate is fixed at {SAMPLE_RATE}")
        if min(self.frame_len, self.hop, self.nfft, self.n_mels) < 1 or self.log_floor <= 0:
            raise ValueError("frame_len, hop, nfft, n_mels and log_floor must be positive")
        if self.frame_len > self.nfft:
            raise ValueError("frame_len must not exceed nfft")
        if self.hop > self.frame_len:
            raise ValueError("hop must not exceed frame_len")
        if not 0 <= self.pre_emphasis_coeff < 1:
            raise ValueError("pre_emphasis_coeff must be in [0, 1)")
        if self.window not in ("rect", "hamming"):
            raise ValueError(f"unknown window {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.nfft // 2 + 1


def _as_samples(x) -> np.ndarray:
    if isinstance(x, AudioSegment):
        return x.samples
    return np.asarray(x, dtype=np.float64)


def samples_for_frames(n_frames: int, cfg: DspConfig = DspConfig()) -> int:
    """Number of samples that yields exactly ``n_frames`` frames."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    return cfg.frame_len + (n_frames - 1) * cfg.hop


def num_frames(n_samples: int, cfg: DspConfig = DspConfig()) -> int:
    if n_samples < cfg.frame_len:
        return 0
    return (n_samples - cfg.frame_len) // cfg.hop + 1


def pre_emphasize(x, coeff: float = 0.97) -> np.ndarray:
    """y[t] = x[t] - coeff * x[t-1], with y[0] = x[0]."""
    if not 0 <= coeff < 1:
        raise ValueError("coeff must be in [0, 1)")
    x = _as_samples(x)
    y = x.copy()
    y[1:] -= coeff * x[:-1]
    return y


def frame_signal(x, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Split into overlapping frames; incomplete trailing frames are dropped.

    Returns an array of shape (T, frame_len) (a copy, not a view).
    """
    x = _as_samples(x)
    n = num_frames(len(x), cfg)
    if n == 0:
        return np.zeros((0, cfg.frame_len))
    windows = np.lib.stride_tricks.sliding_window_view(x, cfg.frame_len)
    return windows[:: cfg.hop][:n].copy()


def magnitude_spectrum(frame, nfft: int = 512) -> np.ndarray:
    """One-sided |DFT| (bins 0..nfft/2) of a zero-padded frame.

    Works on a single frame or a (T, frame_len) stack.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] > nfft:
        raise ValueError("frame longer than nfft")
    return np.abs(np.fft.rfft(frame, n=nfft, axis=-1))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_bins(cfg: DspConfig = DspConfig()) -> np.ndarray:
    """FFT bin of each filter edge/center: n_mels + 2 points, 0 Hz to Nyquist."""
    mels = np.linspace(hz_to_mel(0.0), hz_to_mel(cfg.sample_rate / 2), cfg.n_mels + 2)
    bins = np.rint(mel_to_hz(mels) * cfg.nfft / cfg.sample_rate).astype(int)
    if np.any(np.diff(bins) <= 0):
        raise ValueError("too many mel filters for this FFT size: filter centers collide")
    return bins


def mel_filterbank(cfg: DspConfig = DspConfig()) -> np.ndarray:
    """(n_mels, nfft/2 + 1) matrix of unit-peak triangular filters.

    Neighbouring triangles share edges, and each falling slope is built as
    one minus the next filter's rising slope so that interior columns sum to
    exactly 1.
    """
    pts = mel_center_bins(cfg)
    fb = np.zeros((cfg.n_mels, cfg.n_bins))
    k = np.arange(cfg.n_bins)
    # rising slopes of filters 0..n_mels (the last one is virtual)
    rising = []
    for i in range(cfg.n_mels + 1):
        lo, hi = pts[i], pts[i + 1]
        seg = k[lo : hi + 1]
        rising.append((seg - lo) / (hi - lo))
    for i in range(cfg.n_mels):
        lo, c, hi = pts[i], pts[i + 1], pts[i + 2]
        fb[i, lo : c + 1] = rising[i]
        fb[i, c : hi + 1] = 1.0 - rising[i + 1]
    return fb


def _window(cfg: DspConfig) -> np.ndarray | None:
    if cfg.window == "hamming":
        return np.hamming(cfg.frame_len)
    return None


def power_spectrogram(x, cfg: DspConfig = DspConfig()) -> np.ndarray:
    frames = frame_signal(pre_emphasize(x, cfg.pre_emphasis_coeff), cfg)
    win = _window(cfg)
    if win is not None:
        frames = frames * win
    return magnitude_spectrum(frames, cfg.nfft) ** 2


def extract_lmfb(x, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """(T, n_mels) log mel filterbank energies of a segment."""
    samples = _as_samples(x)
    if num_frames(len(samples), cfg) == 0:
        raise InsufficientSamplesError(
            f"insufficient samples: need at least {cfg.frame_len}, got {len(samples)}"
        )
    energies = power_spectrogram(samples, cfg) @ _filterbank_cached(cfg).T
    return np.log(np.maximum(energies, cfg.log_floor))


_FB_CACHE: dict[DspConfig, np.ndarray] = {}


def _filterbank_cached(cfg: DspConfig) -> np.ndarray:
    fb = _FB_CACHE.get(cfg)
    if fb is None:
        fb = mel_filterbank(cfg)
        fb.setflags(write=False)
        _FB_CACHE[cfg] = fb
    return fb


# --------------------------------------------------------------------- I/O


def read_wav(path) -> AudioSegment:
    """Read a 16 kHz mono 16-bit PCM WAV into [-1, 1) floats."""
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            if w.getcomptype() != "NONE":
                raise AudioFormatError(f"{path}: compressed WAV is not supported")
            raw = w.readframes(w.getnframes())
    except wave.Error as e:
        raise AudioFormatError(f"{path}: {e}") from e
    if channels != 1:
        raise AudioFormatError(f"{path}: expected mono, got {channels} channels")
    if width != 2:
        raise AudioFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if rate != SAMPLE_RATE:
        raise AudioFormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz (no resampling)")
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioSegment(pcm.astype(np.float64) / 32768.0)


def write_wav(path, seg) -> None:
    samples = _as_samples(seg)
    pcm = np.clip(np.rint(samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(SAMPLE_RATE)
        w.writeframes(pcm.tobytes())


def encode_lmfb(values: np.ndarray) -> bytes:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("LMFB matrix must be 2-D (T, n_mels)")
    data = np.ascontiguousarray(values, dtype="<f4").tobytes()
    header = _LMFB_HEADER.pack(LMFB_MAGIC, LMFB_VERSION, values.shape[0], values.shape[1])
    return header + data + _CRC.pack(zlib.crc32(header + data))


def decode_lmfb(blob: bytes) -> np.ndarray:
    if len(blob) < _LMFB_HEADER.size:
        raise ArchiveError("LMFB archive truncated: incomplete header")
    magic, version, t, n_mels = _LMFB_HEADER.unpack_from(blob)
    if magic != LMFB_MAGIC:
        raise ArchiveError(f"not an LMFB archive (magic {magic!r})")
    if version != LMFB_VERSION:
        raise ArchiveError(f"unsupported LMFB archive version {version}")
    body_end = _LMFB_HEADER.size + 4 * t * n_mels
    if len(blob) != body_end + _CRC.size:
        raise ArchiveError(
            f"LMFB archive size mismatch: expected {body_end + _CRC.size} bytes, got {len(blob)}"
        )
    (crc,) = _CRC.unpack_from(blob, body_end)
    if crc != zlib.crc32(blob[:body_end]):
        raise ArchiveError("LMFB archive checksum mismatch (corrupted data)")
    values = np.frombuffer(blob, dtype="<f4", count=t * n_mels, offset=_LMFB_HEADER.size)
    return values.reshape(t, n_mels).astype(np.float32)


def save_lmfb(path, values: np.ndarray) -> None:
    Path(path).write_bytes(encode_lmfb(values))


def load_lmfb(path) -> np.ndarray:
    return decode_lmfb(Path(path).read_bytes())
