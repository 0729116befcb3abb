"""Shared oracles and signal builders for the test suite.

Oracles here are deliberately independent of the library code they check
(direct FFT peak picking, closed-form periods, brute-force searches).
"""

from __future__ import annotations

import numpy as np

from tunekit.audio import AudioBuffer


def sine(freq: float, duration: float, sr: int = 44100, amp: float = 0.8, phase: float = 0.0) -> AudioBuffer:
    t = np.arange(int(round(duration * sr))) / sr
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t + phase), sr)


def silence(duration: float, sr: int = 44100) -> AudioBuffer:
    return AudioBuffer(np.zeros(int(round(duration * sr))), sr)


def harmonic_tone(
    f0: float,
    duration: float,
    sr: int = 44100,
    n_harmonics: int = 8,
    amp: float = 0.5,
) -> AudioBuffer:
    """Tone with fundamental present and 1/h harmonic rolloff."""
    t = np.arange(int(round(duration * sr))) / sr
    x = np.zeros_like(t)
    for h in range(1, n_harmonics + 1):
        if h * f0 >= sr / 2:
            break
        x += np.sin(2 * np.pi * h * f0 * t) / h
    x *= amp / np.max(np.abs(x))
    return AudioBuffer(x, sr)


def vibrato_tone(
    center_hz: float,
    depth_cents: float,
    rate_hz: float,
    duration: float,
    sr: int = 44100,
    amp: float = 0.6,
) -> tuple[AudioBuffer, "np.ndarray"]:
    """Frequency-modulated sine; returns (audio, f0 at every sample)."""
    t = np.arange(int(round(duration * sr))) / sr
    f_inst = center_hz * 2.0 ** (depth_cents * np.sin(2 * np.pi * rate_hz * t) / 1200.0)
    phase = 2 * np.pi * np.cumsum(f_inst) / sr
    return AudioBuffer(amp * np.sin(phase), sr), f_inst


def fft_peak_hz(buffer: AudioBuffer, pad_to: int = 1 << 19) -> float:
    """Dominant frequency via zero-padded FFT argmax (independent oracle)."""
    x = buffer.samples - np.mean(buffer.samples)
    n = max(pad_to, len(x))
    spectrum = np.abs(np.fft.rfft(x * np.hanning(len(x)), n=n))
    return float(np.argmax(spectrum) * buffer.sample_rate / n)


def cents_between(f_a: float, f_b: float) -> float:
    return 1200.0 * np.log2(f_a / f_b)


def cents_to_nearest_midi(f0: float) -> float:
    """Distance (cents, absolute) from f0 to the closest equal-tempered pitch."""
    semis = 69.0 + 12.0 * np.log2(f0 / 440.0)
    return abs(semis - np.round(semis)) * 100.0
