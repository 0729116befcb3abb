"""Mono audio container, WAV I/O, resampling, padding and segmentation.

Everything downstream works on 44.1 kHz mono buffers; this module is the
only place where files, sample rates and channel layouts are touched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 44100
DEFAULT_SEGMENT_SECONDS = 10.0
DEFAULT_ENERGY_GATE_RATIO = 2e-5  # 0.002% of the loudest segment

_INT16_SCALE = 32768.0  # symmetric scaling keeps -32768 -> -1.0 exact


class AudioFormatError(ValueError):
    """Raised for WAV encodings outside PCM16 / IEEE float32."""


@dataclass
class AudioBuffer:
    """Mono audio: float64 samples in [-1, 1] plus a sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain NaN or Inf")
        peak = float(np.max(np.abs(self.samples))) if self.samples.size else 0.0
        if peak > 1.0 + 1e-9:
            raise ValueError(f"samples exceed [-1, 1] (peak {peak:.6f})")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)

    def copy(self) -> "AudioBuffer":
        return AudioBuffer(self.samples.copy(), self.sample_rate)


@dataclass
class Segment:
    """Fixed-length window of a source track.

    ``energy`` is the sum of squared samples; the energy gate compares it
    against the loudest segment of the same track.
    """

    buffer: AudioBuffer
    index: int
    source_id: str
    energy: float


def _clipped(samples: np.ndarray, sample_rate: int) -> AudioBuffer:
    return AudioBuffer(np.clip(samples, -1.0, 1.0), sample_rate)


def load_wav(path: str | Path) -> AudioBuffer:
    """Read a PCM16 or float32 WAV file as a mono buffer scaled to [-1, 1].

    Stereo files are downmixed by channel averaging.  Other encodings
    (8-bit, 24/32-bit PCM, float64) raise :class:`AudioFormatError`.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such audio file: {path}")
    try:
        rate, data = wavfile.read(str(path))
    except AudioFormatError:
        raise
    except ValueError as exc:
        raise AudioFormatError(f"{path}: unsupported or corrupt WAV ({exc})") from exc

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / _INT16_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(
            f"{path}: unsupported WAV encoding {data.dtype}; expected int16 or float32"
        )

    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise AudioFormatError(f"{path}: {samples.shape[1]} channels, expected 1-2")
        samples = samples.mean(axis=1)
    return _clipped(samples, rate)


def save_wav(buffer: AudioBuffer, path: str | Path, encoding: str = "float32") -> None:
    """Write a mono WAV file as IEEE float32 (default) or PCM16."""
    path = Path(path)
    if encoding == "float32":
        wavfile.write(str(path), buffer.sample_rate, buffer.samples.astype(np.float32))
    elif encoding == "pcm16":
        scaled = np.round(buffer.samples * _INT16_SCALE)
        data = np.clip(scaled, -32768, 32767).astype(np.int16)
        wavfile.write(str(path), buffer.sample_rate, data)
    else:
        raise ValueError(f"unknown encoding {encoding!r}; use 'float32' or 'pcm16'")


_SINC_TAPS = 64


def sinc_interpolate(x: np.ndarray, ratio: float, n_out: int) -> np.ndarray:
    """Band-limited read of ``x`` at positions k * ratio, k < n_out.

    64-tap Kaiser-windowed sinc kernel, low-passed at the smaller of the
    two Nyquist frequencies.  Shared by the resampler and the speed-change
    augmentation.
    """
    if n_out <= 0 or len(x) == 0:
        return np.zeros(0)
    half = _SINC_TAPS // 2
    # Low-pass at the smaller Nyquist, slightly rolled off to tame ringing.
    cutoff = 0.9475 * min(1.0, 1.0 / ratio)
    window = np.kaiser(_SINC_TAPS + 1, 8.6)

    positions = np.arange(n_out) * ratio
    base = np.floor(positions).astype(np.int64)
    frac = positions - base

    xpad = np.concatenate([np.zeros(half), x, np.zeros(half + 1)])
    offsets = np.arange(-half, half + 1)
    # Gather matrix of shape (n_out, taps+1): neighbours of each output point.
    idx = np.clip(base[:, None] + offsets[None, :] + half, 0, len(xpad) - 1)
    neighbours = xpad[idx]
    t = offsets[None, :] - frac[:, None]
    kernel = cutoff * np.sinc(cutoff * t) * window[None, :]
    return np.sum(neighbours * kernel, axis=1)


def resample(buffer: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Resample with a 64-tap Kaiser-windowed sinc interpolator.

    Output length is ``round(n * target / source)``.  Equal rates are a
    no-op returning an identical copy.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    src_rate = buffer.sample_rate
    if target_rate == src_rate:
        return buffer.copy()
    n_out = int(round(len(buffer) * target_rate / src_rate))
    out = sinc_interpolate(buffer.samples, src_rate / target_rate, n_out)
    return _clipped(out, target_rate)


def pad_or_trim(buffer: AudioBuffer, duration_s: float) -> AudioBuffer:
    """Force a buffer to exactly ``round(duration_s * sr)`` samples.

    Longer inputs are truncated at the end, shorter ones zero-padded.
    """
    if duration_s <= 0:
        raise ValueError(f"duration_s must be positive, got {duration_s}")
    n_target = int(round(duration_s * buffer.sample_rate))
    x = buffer.samples
    if len(x) >= n_target:
        out = x[:n_target].copy()
    else:
        out = np.concatenate([x, np.zeros(n_target - len(x))])
    return AudioBuffer(out, buffer.sample_rate)


def segment(
    buffer: AudioBuffer,
    duration_s: float = DEFAULT_SEGMENT_SECONDS,
    source_id: str = "",
) -> list[Segment]:
    """Cut a track into consecutive non-overlapping fixed-length segments.

    A trailing partial window is kept (zero-padded) only when it holds at
    least 50% of ``duration_s`` worth of content; shorter tails are dropped.
    """
    if duration_s <= 0:
        raise ValueError(f"duration_s must be positive, got {duration_s}")
    seg_len = int(round(duration_s * buffer.sample_rate))
    x = buffer.samples
    if len(x) == 0:
        return []

    segments = []
    n_full = len(x) // seg_len
    for i in range(n_full):
        chunk = x[i * seg_len : (i + 1) * seg_len].copy()
        segments.append(
            Segment(
                buffer=AudioBuffer(chunk, buffer.sample_rate),
                index=i,
                source_id=source_id,
                energy=float(np.sum(chunk**2)),
            )
        )
    remainder = len(x) - n_full * seg_len
    if remainder * 2 >= seg_len:
        chunk = np.zeros(seg_len)
        chunk[:remainder] = x[n_full * seg_len :]
        segments.append(
            Segment(
                buffer=AudioBuffer(chunk, buffer.sample_rate),
                index=n_full,
                source_id=source_id,
                energy=float(np.sum(chunk**2)),
            )
        )
    return segments


def energy_gate(
    segments: list[Segment], ratio: float = DEFAULT_ENERGY_GATE_RATIO
) -> list[Segment]:
    """Drop segments whose energy falls below ``ratio`` times the track max.

    An all-silent track (zero max energy) yields no segments.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    if not segments:
        return []
    max_energy = max(s.energy for s in segments)
    if max_energy == 0.0:
        return []
    threshold = ratio * max_energy
    return [s for s in segments if s.energy >= threshold]


def concatenate(segments: list[Segment]) -> AudioBuffer:
    """Stitch segments back together in list order (inverse of ``segment``)."""
    if not segments:
        raise ValueError("cannot concatenate an empty segment list")
    rate = segments[0].buffer.sample_rate
    return AudioBuffer(np.concatenate([s.buffer.samples for s in segments]), rate)
