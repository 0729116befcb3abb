"""Log-mel spectrogram features for segment classification.

A 10 s segment at 44.1 kHz becomes a 431 x 128 matrix: centered STFT
(2048-sample frames, hop 1024, Hann window), a 128-band triangular mel
filterbank, dB scaling with an 80 dB floor and per-spectrogram min-max
normalization to [0, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioBuffer

FRAME_SIZE = 2048
HOP = 1024
N_MELS = 128
DB_RANGE = 80.0
_POWER_FLOOR = 1e-10

_CACHE_MAGIC = b"TKMS"
_CACHE_VERSION = 1


@dataclass
class MelSpectrogram:
    """T x n_mels matrix of normalized log-mel magnitudes plus its geometry."""

    values: np.ndarray
    sample_rate: int = 44100
    frame_size: int = FRAME_SIZE
    hop: int = HOP

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]


@dataclass
class MelFilterbank:
    """Triangular mel filters: rows map the power spectrum to mel bands."""

    weights: np.ndarray
    fmin: float
    fmax: float
    centers_hz: np.ndarray = field(repr=False, default=None)


def _frame_signal(x: np.ndarray, frame_size: int, hop: int) -> np.ndarray:
    """Centered framing: reflect-pad frame_size/2 on both ends.

    Yields 1 + floor(len(x) / hop) frames; frame t is centered on sample
    t * hop.  Inputs too short to reflect fall back to zero padding.
    """
    half = frame_size // 2
    if len(x) > half:
        padded = np.pad(x, half, mode="reflect")
    else:
        padded = np.pad(x, half, mode="constant")
    n_frames = 1 + len(x) // hop
    frames = np.lib.stride_tricks.sliding_window_view(padded, frame_size)[::hop]
    return frames[:n_frames]


def stft_power(buffer: AudioBuffer, frame_size: int = FRAME_SIZE, hop: int = HOP) -> np.ndarray:
    """Per-frame power spectrum, shape (1 + floor(n/hop), frame_size/2 + 1)."""
    window = np.hanning(frame_size + 1)[:-1]  # periodic Hann
    frames = _frame_signal(buffer.samples, frame_size, hop)
    spectrum = np.fft.rfft(frames * window, axis=1)
    return np.abs(spectrum) ** 2


def hz_to_mel(f: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int = N_MELS,
    n_fft: int = FRAME_SIZE,
    sr: int = 44100,
    fmin: float = 0.0,
    fmax: float | None = None,
) -> MelFilterbank:
    """Triangular filters with centers equally spaced on the mel scale."""
    if n_mels < 1:
        raise ValueError(f"n_mels must be >= 1, got {n_mels}")
    if fmax is None:
        fmax = sr / 2.0

    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * sr / n_fft

    weights = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(n_mels):
        left, center, right = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        up = (bin_hz - left) / (center - left)
        down = (right - bin_hz) / (right - center)
        weights[m] = np.clip(np.minimum(up, down), 0.0, None)
    return MelFilterbank(weights=weights, fmin=fmin, fmax=fmax, centers_hz=edges_hz[1:-1])


_FILTERBANK_CACHE: dict[tuple, MelFilterbank] = {}


def _cached_filterbank(n_mels: int, n_fft: int, sr: int) -> MelFilterbank:
    key = (n_mels, n_fft, sr)
    if key not in _FILTERBANK_CACHE:
        _FILTERBANK_CACHE[key] = mel_filterbank(n_mels, n_fft, sr)
    return _FILTERBANK_CACHE[key]


def mel_power(buffer: AudioBuffer, n_mels: int = N_MELS) -> np.ndarray:
    """Mel-band power per frame (filterbank applied, no scaling)."""
    power = stft_power(buffer)
    fb = _cached_filterbank(n_mels, FRAME_SIZE, buffer.sample_rate)
    return power @ fb.weights.T


def melspectrogram(buffer: AudioBuffer, n_mels: int = N_MELS) -> MelSpectrogram:
    """Normalized log-mel spectrogram in [0, 1].

    Pipeline: mel power -> 10*log10(p + 1e-10) -> clamp to [max - 80, max]
    -> min-max normalize.  A zero dynamic range (silence) maps to all zeros.
    """
    db = 10.0 * np.log10(mel_power(buffer, n_mels) + _POWER_FLOOR)
    top = float(db.max())
    db = np.clip(db, top - DB_RANGE, top)
    span = top - float(db.min())
    if span == 0.0:
        values = np.zeros_like(db)
    else:
        values = (db - db.min()) / span
    return MelSpectrogram(values=values, sample_rate=buffer.sample_rate)


def save_spectrogram(spec: MelSpectrogram, path: str | Path) -> None:
    """Write the binary cache format.

    Layout (little-endian): magic "TKMS", uint32 version, uint32 n_frames,
    uint32 n_mels, uint32 sample_rate, uint32 frame_size, uint32 hop, then
    n_frames * n_mels float32 values, row-major.
    """
    header = _CACHE_MAGIC + struct.pack(
        "<IIIIII",
        _CACHE_VERSION,
        spec.values.shape[0],
        spec.values.shape[1],
        spec.sample_rate,
        spec.frame_size,
        spec.hop,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(spec.values.astype("<f4").tobytes())


def load_spectrogram(path: str | Path) -> MelSpectrogram:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CACHE_MAGIC:
            raise ValueError(f"{path}: not a tunekit spectrogram cache")
        version, n_frames, n_mels, sr, frame_size, hop = struct.unpack("<IIIIII", fh.read(24))
        if version != _CACHE_VERSION:
            raise ValueError(f"{path}: unsupported cache version {version}")
        values = np.frombuffer(fh.read(n_frames * n_mels * 4), dtype="<f4")
    return MelSpectrogram(
        values=values.reshape(n_frames, n_mels).astype(np.float64),
        sample_rate=sr,
        frame_size=frame_size,
        hop=hop,
    )
