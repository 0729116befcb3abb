"""Pitch-correction simulator and the remix operator.

The correction chain tracks f0, snaps every voiced frame to the nearest
equal-tempered (MIDI) pitch and resynthesizes the waveform with
time-domain PSOLA: two-period Hann grains cut at pitch marks and
overlap-added at retuned spacing.  Unvoiced stretches pass through
untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer
from .pitch import PitchParams, PitchTrack, pyin_track

# Tracking octave errors must not trigger destructive shifts.
MAX_SHIFT_SEMITONES = 6.0
_UNVOICED_MARK_SPACING_S = 0.010
_EDGE_FADE = 64  # samples of crossfade where synthesis meets copied audio


def nearest_midi(f0: float) -> tuple[int, float]:
    """Snap a frequency to the closest MIDI note (ties round half up).

    Returns (note number, exact note frequency in Hz).
    """
    if f0 <= 0:
        raise ValueError(f"f0 must be positive, got {f0}")
    semis = 69.0 + 12.0 * math.log2(f0 / 440.0)
    midi = int(math.floor(semis + 0.5))
    return midi, 440.0 * 2.0 ** ((midi - 69) / 12.0)


@dataclass
class RetuneTargets:
    """Per-frame retune plan: target f0 (0 = unvoiced) and pitch-shift ratio.

    ``hop`` is the frame spacing in samples of the track the plan was built
    from; frame i is centered on sample i * hop.
    """

    target_f0: np.ndarray
    shift_ratio: np.ndarray
    hop: int = 256

    def __post_init__(self):
        lo, hi = 2.0 ** (-MAX_SHIFT_SEMITONES / 12.0), 2.0 ** (MAX_SHIFT_SEMITONES / 12.0)
        if np.any((self.shift_ratio < lo - 1e-12) | (self.shift_ratio > hi + 1e-12)):
            raise ValueError("shift_ratio outside the +/-6 semitone safety bound")
        unvoiced = self.target_f0 <= 0
        if np.any(self.shift_ratio[unvoiced] != 1.0):
            raise ValueError("unvoiced frames must keep shift_ratio 1")


@dataclass
class EpochMarks:
    """Strictly increasing pitch-mark sample positions."""

    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)
        if len(self.positions) > 1 and np.any(np.diff(self.positions) <= 0):
            raise ValueError("epoch positions must be strictly increasing")

    def __len__(self) -> int:
        return len(self.positions)


def targets_from_track(track: PitchTrack) -> RetuneTargets:
    """Nearest-MIDI targets for every voiced frame; unvoiced keep ratio 1.

    When the safety clamp binds, the stored target is the clamped effective
    frequency f0 * ratio so targets and ratios always agree.
    """
    n = len(track)
    target = np.zeros(n)
    ratio = np.ones(n)
    lo, hi = 2.0 ** (-MAX_SHIFT_SEMITONES / 12.0), 2.0 ** (MAX_SHIFT_SEMITONES / 12.0)
    for i in range(n):
        f0 = track.f0[i]
        if f0 > 0:
            _, note_hz = nearest_midi(f0)
            ratio[i] = min(max(note_hz / f0, lo), hi)
            target[i] = f0 * ratio[i]
    return RetuneTargets(target_f0=target, shift_ratio=ratio, hop=track.hop)


def mark_epochs(buffer: AudioBuffer, track: PitchTrack) -> EpochMarks:
    """Chain pitch marks left to right.

    In voiced regions each mark sits on the waveform maximum nearest to one
    predicted period after the previous mark; unvoiced regions get uniform
    marks every 10 ms.
    """
    x = buffer.samples
    sr = buffer.sample_rate
    n = len(x)
    if n == 0 or len(track) == 0:
        return EpochMarks(np.zeros(0, dtype=np.int64))

    hop = track.hop
    n_frames = len(track)
    uniform = int(round(_UNVOICED_MARK_SPACING_S * sr))

    def frame_f0(pos: int) -> float:
        idx = min(max(int(round(pos / hop)), 0), n_frames - 1)
        return float(track.f0[idx])

    marks = [0]
    f0 = frame_f0(0)
    if f0 > 0:
        period = int(round(sr / f0))
        marks = [int(np.argmax(x[: min(period, n)]))]

    while True:
        pos = marks[-1]
        f0 = frame_f0(pos)
        if f0 > 0:
            period = sr / f0
            predicted = pos + period
            search = max(2, int(round(0.2 * period)))
            lo = int(round(predicted)) - search
            hi = min(int(round(predicted)) + search + 1, n)
            if lo >= n:
                break
            nxt = lo + int(np.argmax(x[lo:hi]))
        else:
            nxt = pos + uniform
            # Entering a voiced region: anchor the mark on a waveform peak
            # so the synthesis grid starts phase-aligned.
            f0_next = frame_f0(min(nxt, n - 1))
            if f0_next > 0:
                half_w = max(2, int(round(0.5 * sr / f0_next)))
                lo2, hi2 = max(nxt - half_w, pos + 1), min(nxt + half_w + 1, n)
                if lo2 < hi2:
                    nxt = lo2 + int(np.argmax(x[lo2:hi2]))
        if nxt >= n or nxt <= pos:
            break
        marks.append(nxt)
    return EpochMarks(np.asarray(marks, dtype=np.int64))


def _hann_grain_window(length: int) -> np.ndarray:
    # Periodic Hann: exact COLA at 50% overlap, so unit-ratio synthesis is
    # a near-identity after window-sum normalization.
    t = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * t / length)


def _voiced_mark_runs(mark_voiced: np.ndarray) -> list[tuple[int, int]]:
    """Index ranges [a, b) of consecutive voiced marks."""
    runs = []
    start = None
    for i, flag in enumerate(mark_voiced):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mark_voiced)))
    return runs


def psola_shift(buffer: AudioBuffer, marks: EpochMarks, targets: RetuneTargets) -> AudioBuffer:
    """Resynthesize voiced regions at retuned pitch-mark spacing.

    Grains are two source periods long, Hann-windowed and centered on
    source marks; each output mark (spaced source period / shift ratio)
    receives the nearest-in-time source grain.  The overlap-add sum is
    normalized by the window sum.  Unvoiced regions are copied unmodified
    and the output length equals the input length.
    """
    x = buffer.samples
    sr = buffer.sample_rate
    n = len(x)
    if len(marks) == 0 or n == 0:
        return buffer.copy()

    hop = targets.hop
    n_frames = len(targets.shift_ratio)
    frame_pos = np.arange(n_frames) * hop
    voiced_frames = targets.target_f0 > 0
    # Track-predicted source spacing is sr / f0, so spacing / ratio reduces
    # to sr / target: interpolating the target directly keeps the output
    # pitch exact even where the measured contour smears fast modulation.
    tgt_pos = frame_pos[voiced_frames]
    tgt_val = targets.target_f0[voiced_frames]
    positions = marks.positions

    frame_of_mark = np.clip(np.round(positions / hop).astype(np.int64), 0, n_frames - 1)
    mark_voiced = targets.target_f0[frame_of_mark] > 0

    # Local source period per mark from neighbour spacing.
    if len(positions) > 1:
        gaps = np.diff(positions).astype(np.float64)
        periods = np.empty(len(positions))
        periods[:-1] = gaps
        periods[-1] = gaps[-1]
    else:
        periods = np.array([sr / max(targets.target_f0.max(), 100.0)])

    pad = int(np.max(periods)) + 2
    acc = np.zeros(n + 2 * pad)
    wsum = np.zeros(n + 2 * pad)
    out = x.copy()

    for a, b in _voiced_mark_runs(mark_voiced):
        src_marks = positions[a:b]
        src_periods = periods[a:b]
        region_start = int(src_marks[0])
        region_end = min(int(src_marks[-1] + src_periods[-1]), n)
        if region_end <= region_start:
            continue

        acc[:] = 0.0
        wsum[:] = 0.0
        o = float(src_marks[0])
        guard = 0
        max_out_marks = 4 * (region_end - region_start) // max(int(src_periods.min()), 1) + 8
        while o < region_end and guard < max_out_marks:
            guard += 1
            k = int(np.argmin(np.abs(src_marks - o)))
            center = int(src_marks[k])
            half = max(int(round(src_periods[k])), 2)
            grain = np.zeros(2 * half)
            gs, ge = center - half, center + half
            cs, ce = max(gs, 0), min(ge, n)
            grain[cs - gs : ce - gs] = x[cs:ce]
            window = _hann_grain_window(2 * half)
            grain *= window

            c = int(round(o))
            ts, te = c - half + pad, c + half + pad
            acc[ts:te] += grain
            wsum[ts:te] += window

            o += sr / float(np.interp(o, tgt_pos, tgt_val))

        lo, hi = region_start + pad, region_end + pad
        weights = wsum[lo:hi]
        synth = acc[lo:hi] / np.maximum(weights, 1e-6)
        synth[weights < 1e-3] = x[region_start:region_end][weights < 1e-3]

        fade = min(_EDGE_FADE, (region_end - region_start) // 4)
        if fade > 0:
            ramp = np.linspace(0.0, 1.0, fade)
            synth[:fade] = ramp * synth[:fade] + (1 - ramp) * x[region_start : region_start + fade]
            synth[-fade:] = ramp[::-1] * synth[-fade:] + (1 - ramp[::-1]) * x[region_end - fade : region_end]
        out[region_start:region_end] = synth

    return AudioBuffer(np.clip(out, -1.0, 1.0), sr)


def autotune(
    vocal: AudioBuffer,
    params: PitchParams | None = None,
    track: PitchTrack | None = None,
) -> AudioBuffer:
    """Full correction chain: track -> nearest MIDI -> marks -> PSOLA.

    ``track`` lets callers reuse an already-computed pitch track;
    deterministic for fixed parameters either way.
    """
    if track is None:
        track = pyin_track(vocal, params)
    if len(track) == 0:
        return vocal.copy()
    targets = targets_from_track(track)
    marks = mark_epochs(vocal, track)
    return psola_shift(vocal, marks, targets)


def remix(vocal: AudioBuffer, accompaniment: AudioBuffer) -> AudioBuffer:
    """Sum two tracks, zero-padding the shorter, then peak-normalize only
    when the sum exceeds full scale."""
    if vocal.sample_rate != accompaniment.sample_rate:
        raise ValueError(
            f"sample rates differ: {vocal.sample_rate} vs {accompaniment.sample_rate}"
        )
    n = max(len(vocal), len(accompaniment))
    mix = np.zeros(n)
    mix[: len(vocal)] += vocal.samples
    mix[: len(accompaniment)] += accompaniment.samples
    peak = float(np.max(np.abs(mix))) if n else 0.0
    if peak > 1.0:
        mix /= peak
    return AudioBuffer(mix, vocal.sample_rate)
