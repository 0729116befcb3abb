"""Tests for the STFT, mel filterbank and log-mel spectrogram stages."""

import numpy as np
import pytest

from tunekit.audio import AudioBuffer
from tunekit.features import (
    FRAME_SIZE,
    HOP,
    load_spectrogram,
    mel_filterbank,
    mel_power,
    melspectrogram,
    save_spectrogram,
    stft_power,
)

from helpers import silence, sine


def test_stft_frame_count_for_10s():
    power = stft_power(sine(440.0, 10.0))
    assert power.shape == (431, 1025)


def test_stft_dc_concentrates_in_bin0():
    buf = AudioBuffer(np.full(44100, 0.5), 44100)
    power = stft_power(buf)
    assert np.all(np.argmax(power, axis=1) == 0)


def test_stft_tone_bin():
    # Bin-frequency oracle: argmax bin = round(f * n_fft / sr) = 46 for 1 kHz.
    power = stft_power(sine(1000.0, 2.0))
    interior = power[2:-2]
    assert np.all(np.argmax(interior, axis=1) == 46)


def test_stft_empty_buffer_single_frame():
    power = stft_power(AudioBuffer(np.zeros(0), 44100))
    assert power.shape == (1, 1025)


def test_stft_frame_count_property():
    rng = np.random.default_rng(10)
    for _ in range(20):
        n = int(rng.integers(1, 200000))
        buf = AudioBuffer(rng.uniform(-0.9, 0.9, n), 44100)
        assert stft_power(buf).shape[0] == 1 + n // HOP


def test_stft_parseval_white_noise():
    # Windowed signal energy must match total spectral power within 5%.
    rng = np.random.default_rng(11)
    buf = AudioBuffer(rng.uniform(-0.9, 0.9, 44100), 44100)
    power = stft_power(buf)
    # rfft doubling: all bins except DC and Nyquist appear twice in the full FFT.
    doubled = power.copy()
    doubled[:, 1:-1] *= 2.0
    total_spectral = doubled.sum() / FRAME_SIZE

    window = np.hanning(FRAME_SIZE + 1)[:-1]
    half = FRAME_SIZE // 2
    padded = np.pad(buf.samples, half, mode="reflect")
    n_frames = power.shape[0]
    windowed_energy = sum(
        np.sum((padded[t * HOP : t * HOP + FRAME_SIZE] * window) ** 2)
        for t in range(n_frames)
    )
    assert total_spectral == pytest.approx(windowed_energy, rel=0.05)


def test_mel_filterbank_shape_and_centers():
    fb = mel_filterbank(128, 2048, 44100)
    assert fb.weights.shape == (128, 1025)
    assert np.all(fb.weights >= 0)
    assert np.all(np.diff(fb.centers_hz) > 0)
    assert np.all(fb.weights.sum(axis=1) > 0)


def test_mel_filterbank_rows_unimodal():
    fb = mel_filterbank(128, 2048, 44100)
    for row in fb.weights:
        peak = np.argmax(row)
        assert np.all(np.diff(row[: peak + 1]) >= 0)
        assert np.all(np.diff(row[peak:]) <= 0)


def test_mel_filterbank_interior_coverage():
    # Every frequency bin between the first and last centers has weight.
    fb = mel_filterbank(128, 2048, 44100)
    bin_hz = np.arange(1025) * 44100 / 2048
    interior = (bin_hz > fb.centers_hz[0]) & (bin_hz < fb.centers_hz[-1])
    assert np.all(fb.weights.sum(axis=0)[interior] > 0)


def test_melspectrogram_shape_and_range():
    spec = melspectrogram(sine(440.0, 10.0))
    assert spec.values.shape == (431, 128)
    assert spec.values.min() >= 0.0
    assert spec.values.max() <= 1.0


def test_melspectrogram_silence_is_all_zeros():
    spec = melspectrogram(silence(2.0))
    assert np.all(spec.values == 0.0)


def test_melspectrogram_tone_stationary():
    # Interior frames only: the reflect-padded edge frames see a phase kink.
    spec = melspectrogram(sine(440.0, 5.0))
    argmax = np.argmax(spec.values[2:-2], axis=1)
    assert np.all(argmax == argmax[0])


def test_mel_db_scaling_shift():
    # Doubling the amplitude adds ~6.02 dB to every mid-range mel cell.
    buf = sine(440.0, 2.0, amp=0.4)
    doubled = AudioBuffer(buf.samples * 2.0, 44100)
    db_1 = 10.0 * np.log10(mel_power(buf) + 1e-10)
    db_2 = 10.0 * np.log10(mel_power(doubled) + 1e-10)
    mid = db_1 > (db_1.max() - 60.0)  # keep away from the power floor
    np.testing.assert_allclose(db_2[mid] - db_1[mid], 20.0 * np.log10(2.0), atol=0.1)


def test_melspectrogram_deterministic():
    buf = sine(330.0, 3.0)
    a = melspectrogram(buf).values
    b = melspectrogram(buf).values
    assert np.array_equal(a, b)


def test_spectrogram_cache_roundtrip(tmp_path):
    spec = melspectrogram(sine(523.25, 10.0))
    path = tmp_path / "seg.mel"
    save_spectrogram(spec, path)
    loaded = load_spectrogram(path)
    assert loaded.values.shape == spec.values.shape
    assert loaded.sample_rate == spec.sample_rate
    assert loaded.frame_size == spec.frame_size
    assert loaded.hop == spec.hop
    np.testing.assert_array_equal(loaded.values, spec.values.astype(np.float32))


def test_spectrogram_cache_rejects_garbage(tmp_path):
    path = tmp_path / "bad.mel"
    path.write_bytes(b"not a cache at all")
    with pytest.raises(ValueError):
        load_spectrogram(path)
