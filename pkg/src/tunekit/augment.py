"""Post-processing transforms for robustness evaluation.

Gaussian noise, resample-style speed change, time shifting, an external
MP3 encode/decode hook, and the 50%-probability random chain that ties
them together with a reproducible provenance record.
"""

from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, load_wav, pad_or_trim, resample, save_wav, sinc_interpolate

logger = logging.getLogger(__name__)


@dataclass
class AugmentConfig:
    """Transform ranges; defaults match the robustness protocol."""

    noise_amp_range: tuple[float, float] = (0.001, 0.015)
    speed_range: tuple[float, float] = (0.80, 1.25)
    shift_range_s: tuple[float, float] = (-0.5, 0.5)
    apply_prob: float = 0.5
    mp3_kbps_range: tuple[int, int] = (32, 64)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.apply_prob <= 1.0:
            raise ValueError(f"apply_prob must be in [0, 1], got {self.apply_prob}")


class CodecMissingError(RuntimeError):
    """No MP3 codec command is configured or executable."""


class CodecError(RuntimeError):
    """The external codec command failed."""


@dataclass
class CodecCommands:
    """Shell templates for the MP3 hook.

    ``encode`` may use {input}, {output} and {kbps}; ``decode`` uses
    {input} and {output}.  Commands are split with shlex, not a shell.
    """

    encode: str
    decode: str


def add_noise(buffer: AudioBuffer, amplitude: float, rng: np.random.Generator) -> AudioBuffer:
    """Add white Gaussian noise scaled by ``amplitude``; output is clipped."""
    if amplitude < 0:
        raise ValueError(f"amplitude must be >= 0, got {amplitude}")
    if amplitude == 0.0:
        return buffer.copy()
    noise = amplitude * rng.standard_normal(len(buffer))
    return AudioBuffer(np.clip(buffer.samples + noise, -1.0, 1.0), buffer.sample_rate)


def change_speed(buffer: AudioBuffer, factor: float) -> AudioBuffer:
    """Resample-style speed change: tempo and pitch scale together.

    factor > 1 plays faster (shorter, higher); output length is
    ``round(n / factor)``.
    """
    if not 0.5 <= factor <= 2.0:
        raise ValueError(f"factor must be in [0.5, 2], got {factor}")
    n_out = int(round(len(buffer) / factor))
    out = sinc_interpolate(buffer.samples, factor, n_out)
    return AudioBuffer(np.clip(out, -1.0, 1.0), buffer.sample_rate)


def time_shift(buffer: AudioBuffer, shift_s: float) -> AudioBuffer:
    """Shift content by ``shift_s`` seconds at fixed length.

    Positive delays (zero-fill head, drop tail); negative advances.
    """
    n = len(buffer)
    shift = int(round(shift_s * buffer.sample_rate))
    if abs(shift) > n:
        raise ValueError(f"|shift| {abs(shift)} exceeds buffer length {n}")
    out = np.zeros(n)
    if shift >= 0:
        out[shift:] = buffer.samples[: n - shift]
    else:
        out[: n + shift] = buffer.samples[-shift:]
    return AudioBuffer(out, buffer.sample_rate)


def _run_codec(template: str, **fields) -> None:
    cmd = shlex.split(template.format(**fields))
    result = subprocess.run(cmd, capture_output=True, text=True)
    if result.returncode != 0:
        raise CodecError(
            f"codec command failed ({result.returncode}): {' '.join(cmd)}\n{result.stderr}"
        )


def mp3_roundtrip(
    buffer: AudioBuffer, kbps: int, codec: CodecCommands | None
) -> AudioBuffer:
    """Round-trip through an external MP3 encoder/decoder at ``kbps``.

    The decoded audio is resampled back if the codec changed the rate and
    trimmed/padded to the original length.  All temp files live in a
    throwaway directory, removed on success and failure alike.
    """
    if codec is None:
        raise CodecMissingError(
            "codec missing: configure mp3 encode/decode commands "
            "(config keys mp3_encode_cmd / mp3_decode_cmd or the "
            "TUNEKIT_MP3_ENCODE / TUNEKIT_MP3_DECODE environment variables)"
        )
    with tempfile.TemporaryDirectory(prefix="tunekit-mp3-") as tmp:
        wav_in = Path(tmp) / "in.wav"
        mp3 = Path(tmp) / "mid.mp3"
        wav_out = Path(tmp) / "out.wav"
        save_wav(buffer, wav_in, encoding="pcm16")
        _run_codec(codec.encode, input=wav_in, output=mp3, kbps=int(kbps))
        if not mp3.exists():
            raise CodecError(f"encoder produced no output: {codec.encode}")
        _run_codec(codec.decode, input=mp3, output=wav_out)
        if not wav_out.exists():
            raise CodecError(f"decoder produced no output: {codec.decode}")
        decoded = load_wav(wav_out)
    if decoded.sample_rate != buffer.sample_rate:
        decoded = resample(decoded, buffer.sample_rate)
    return pad_or_trim(decoded, len(buffer) / buffer.sample_rate)


def random_chain(
    buffer: AudioBuffer, config: AugmentConfig, rng: np.random.Generator
) -> tuple[AudioBuffer, list[dict]]:
    """Apply noise, speed and shift independently with ``apply_prob`` each.

    Returns the processed audio plus a provenance record that
    :func:`apply_chain` can replay byte-for-byte (the noise draw is pinned
    by a recorded child seed).
    """
    out = buffer
    record: list[dict] = []

    if rng.random() < config.apply_prob:
        amplitude = float(rng.uniform(*config.noise_amp_range))
        noise_seed = int(rng.integers(0, 2**63 - 1))
        out = add_noise(out, amplitude, np.random.default_rng(noise_seed))
        record.append({"transform": "noise", "amplitude": amplitude, "seed": noise_seed})

    if rng.random() < config.apply_prob:
        factor = float(rng.uniform(*config.speed_range))
        out = change_speed(out, factor)
        record.append({"transform": "speed", "factor": factor})

    if rng.random() < config.apply_prob:
        shift_s = float(rng.uniform(*config.shift_range_s))
        shift_s = float(np.clip(shift_s, -out.duration, out.duration))
        out = time_shift(out, shift_s)
        record.append({"transform": "shift", "shift_s": shift_s})

    if out is buffer:
        out = buffer.copy()
    return out, record


def apply_chain(buffer: AudioBuffer, record: list[dict]) -> AudioBuffer:
    """Replay a provenance record produced by :func:`random_chain`."""
    out = buffer
    for entry in record:
        kind = entry["transform"]
        if kind == "noise":
            out = add_noise(out, entry["amplitude"], np.random.default_rng(entry["seed"]))
        elif kind == "speed":
            out = change_speed(out, entry["factor"])
        elif kind == "shift":
            out = time_shift(out, entry["shift_s"])
        else:
            raise ValueError(f"unknown transform in record: {kind!r}")
    if out is buffer:
        out = buffer.copy()
    return out
