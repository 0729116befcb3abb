"""Tests for WAV I/O, resampling, padding, segmentation and the energy gate."""

import numpy as np
import pytest
from scipy.io import wavfile

from tunekit.audio import (
    AudioBuffer,
    AudioFormatError,
    concatenate,
    energy_gate,
    load_wav,
    pad_or_trim,
    resample,
    save_wav,
    segment,
)

from helpers import fft_peak_hz, sine


def test_load_wav_stereo_pcm16_averages_channels(tmp_path):
    path = tmp_path / "stereo.wav"
    data = np.full((44100, 2), 16384, dtype=np.int16)  # 0.5 in both channels
    wavfile.write(str(path), 44100, data)

    buf = load_wav(path)
    assert len(buf) == 44100
    assert buf.sample_rate == 44100
    np.testing.assert_allclose(buf.samples, 0.5, atol=1e-9)


def test_load_wav_int16_scaling_convention(tmp_path):
    path = tmp_path / "peak.wav"
    wavfile.write(str(path), 44100, np.array([32767, -32768, 0], dtype=np.int16))

    buf = load_wav(path)
    np.testing.assert_allclose(buf.samples, [32767 / 32768, -1.0, 0.0])


def test_load_wav_rejects_8bit(tmp_path):
    path = tmp_path / "u8.wav"
    wavfile.write(str(path), 44100, np.full(100, 128, dtype=np.uint8))

    with pytest.raises(AudioFormatError):
        load_wav(path)


def test_load_wav_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_wav(tmp_path / "nope.wav")


def test_float32_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    original = AudioBuffer(rng.uniform(-1, 1, 5000).astype(np.float32), 44100)
    path = tmp_path / "rt.wav"
    save_wav(original, path, encoding="float32")

    reloaded = load_wav(path)
    assert np.array_equal(reloaded.samples, original.samples)
    assert reloaded.sample_rate == 44100


def test_resample_length_ratio():
    buf = AudioBuffer(np.zeros(48000), 48000)
    out = resample(buf, 44100)
    assert len(out) == 44100
    assert out.sample_rate == 44100


def test_resample_identity_on_equal_rates():
    rng = np.random.default_rng(1)
    buf = AudioBuffer(rng.uniform(-0.5, 0.5, 10000), 44100)
    out = resample(buf, 44100)
    assert np.array_equal(out.samples, buf.samples)


def test_resample_preserves_tone_frequency():
    # FFT-peak oracle: a 440 Hz sine must stay at 440 +/- 2 Hz after 48k -> 44.1k.
    buf = sine(440.0, 1.0, sr=48000)
    out = resample(buf, 44100)
    assert abs(fft_peak_hz(out) - 440.0) < 2.0


def test_pad_or_trim_truncates():
    buf = sine(100.0, 12.0)
    out = pad_or_trim(buf, 10.0)
    assert len(out) == 441000
    np.testing.assert_array_equal(out.samples, buf.samples[:441000])


def test_pad_or_trim_zero_pads():
    buf = sine(100.0, 8.0)
    out = pad_or_trim(buf, 10.0)
    assert len(out) == 441000
    np.testing.assert_array_equal(out.samples[: len(buf)], buf.samples)
    assert np.all(out.samples[len(buf) :] == 0)


def test_pad_or_trim_identity():
    buf = sine(100.0, 10.0)
    out = pad_or_trim(buf, 10.0)
    np.testing.assert_array_equal(out.samples, buf.samples)


def test_pad_or_trim_exact_length_property():
    # Exact output length over random input lengths and targets.
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(1, 90001))
        duration = float(rng.uniform(0.01, 2.0))
        buf = AudioBuffer(rng.uniform(-1, 1, n), 44100)
        out = pad_or_trim(buf, duration)
        assert len(out) == int(round(duration * 44100))


def test_segment_counts_35s_keeps_padded_tail():
    buf = sine(220.0, 35.0)
    segs = segment(buf, 10.0)
    assert len(segs) == 4  # 3 full + one 5 s tail (>= 50%) zero-padded
    assert all(len(s.buffer) == 441000 for s in segs)
    assert np.all(segs[-1].buffer.samples[220500:] == 0)


def test_segment_counts_23s_drops_short_tail():
    buf = sine(220.0, 23.0)
    segs = segment(buf, 10.0)
    assert len(segs) == 2  # 3 s tail < 50% dropped


def test_segment_identity_for_exact_length():
    buf = sine(220.0, 10.0)
    segs = segment(buf, 10.0)
    assert len(segs) == 1
    assert np.array_equal(segs[0].buffer.samples, buf.samples)


def test_segment_empty_buffer():
    assert segment(AudioBuffer(np.zeros(0), 44100), 10.0) == []


def test_segment_concatenate_inverse():
    rng = np.random.default_rng(3)
    buf = AudioBuffer(rng.uniform(-1, 1, 3 * 441000), 44100)
    segs = segment(buf, 10.0)
    assert np.array_equal(concatenate(segs).samples, buf.samples)


def test_segment_energy_is_sum_of_squares():
    buf = AudioBuffer(np.full(441000, 0.5), 44100)
    segs = segment(buf, 10.0)
    assert segs[0].energy == pytest.approx(441000 * 0.25)


def test_energy_gate_threshold_by_hand():
    # Energies [1.0, 3e-5, 1e-5] with ratio 2e-5: threshold 2e-5 keeps 0 and 1.
    sr = 44100
    amps = [np.sqrt(1.0 / sr), np.sqrt(3e-5 / sr), np.sqrt(1e-5 / sr)]
    x = np.concatenate([np.full(sr, a) for a in amps])
    segs = segment(AudioBuffer(x, sr), 1.0)
    kept = energy_gate(segs, 2e-5)
    assert [s.index for s in kept] == [0, 1]


def test_energy_gate_keeps_all_equal():
    segs = segment(sine(220.0, 30.0), 10.0)
    assert len(energy_gate(segs)) == len(segs)


def test_energy_gate_silent_track_drops_all():
    segs = segment(AudioBuffer(np.zeros(441000 * 2), 44100), 10.0)
    assert energy_gate(segs) == []


def test_energy_gate_idempotent():
    rng = np.random.default_rng(4)
    x = rng.uniform(-1, 1, 441000 * 3) * np.repeat([1.0, 1e-3, 0.5], 441000)
    segs = segment(AudioBuffer(x, 44100), 10.0)
    once = energy_gate(segs)
    twice = energy_gate(once)
    assert [s.index for s in twice] == [s.index for s in once]


def test_energy_gate_preserves_order():
    rng = np.random.default_rng(5)
    x = rng.uniform(-0.9, 0.9, 441000 * 4)
    segs = segment(AudioBuffer(x, 44100), 10.0)
    kept = energy_gate(segs, 0.5)
    indices = [s.index for s in kept]
    assert indices == sorted(indices)


def test_audio_buffer_validation():
    with pytest.raises(ValueError):
        AudioBuffer(np.array([0.0, np.nan]), 44100)
    with pytest.raises(ValueError):
        AudioBuffer(np.array([1.5]), 44100)
    with pytest.raises(ValueError):
        AudioBuffer(np.zeros(4), 0)
