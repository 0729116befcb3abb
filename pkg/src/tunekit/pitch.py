"""Frame-wise fundamental frequency estimation.

The YIN core computes a cumulative-mean-normalized difference function
(CMND) per frame and extracts its local minima as period candidates.
The probabilistic tracker spreads a Beta prior over absolute thresholds,
turns the per-threshold YIN picks into candidate probabilities, and
decodes a voiced/unvoiced pitch path with a banded Viterbi over
10-cent pitch bins.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import betainc

from .audio import AudioBuffer

CENTS_PER_BIN = 10.0
_BINS_PER_OCTAVE = 1200.0 / CENTS_PER_BIN
_LOG_FLOOR = 1e-300
# Mass a threshold contributes to its frame's *global* CMND minimum when no
# trough falls below it; the remaining 99% counts as unvoiced evidence.
_NO_TROUGH_VOICED = 0.01


@dataclass
class PitchParams:
    """Tracker configuration; defaults target sung vocals at 44.1 kHz."""

    fmin: float = 65.0
    fmax: float = 1047.0
    frame_size: int = 2048
    hop: int = 256
    n_thresholds: int = 100
    beta_a: float = 2.0
    beta_b: float = 18.0
    switch_prob: float = 0.01
    max_semitone_step: float = 12.0
    sample_rate: int = 44100

    def __post_init__(self):
        if not 0 < self.fmin < self.fmax < self.sample_rate / 2:
            raise ValueError(
                f"need 0 < fmin < fmax < sr/2, got {self.fmin}, {self.fmax}"
            )
        if self.frame_size < 2 * self.sample_rate / self.fmin:
            raise ValueError(
                f"frame_size {self.frame_size} holds < 2 periods of fmin {self.fmin}"
            )
        if self.hop <= 0:
            raise ValueError("hop must be positive")

    @property
    def tau_min(self) -> int:
        return max(1, int(np.floor(self.sample_rate / self.fmax)))

    @property
    def tau_max(self) -> int:
        return int(np.ceil(self.sample_rate / self.fmin))

    @property
    def n_bins(self) -> int:
        return int(np.floor(np.log2(self.fmax / self.fmin) * _BINS_PER_OCTAVE)) + 1

    def bin_to_hz(self, bins: np.ndarray | int) -> np.ndarray | float:
        return self.fmin * 2.0 ** (np.asarray(bins, dtype=np.float64) / _BINS_PER_OCTAVE)

    def hz_to_bin(self, hz: np.ndarray | float) -> np.ndarray:
        b = np.round(np.log2(np.asarray(hz, dtype=np.float64) / self.fmin) * _BINS_PER_OCTAVE)
        return np.clip(b, 0, self.n_bins - 1).astype(np.int64)


@dataclass
class PitchTrack:
    """Per-frame pitch decisions: f0 in Hz with 0 encoding unvoiced."""

    times: np.ndarray
    f0: np.ndarray
    voiced_prob: np.ndarray
    frame_size: int
    hop: int

    def __len__(self) -> int:
        return len(self.times)

    @property
    def voiced(self) -> np.ndarray:
        return self.f0 > 0


def save_track_csv(track: PitchTrack, path: str | Path) -> None:
    """Dump a track as CSV rows of (time_s, f0_hz, voiced_prob)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "f0_hz", "voiced_prob"])
        for t, f, p in zip(track.times, track.f0, track.voiced_prob):
            writer.writerow([f"{t:.6f}", f"{f:.4f}", f"{p:.4f}"])


# ---------------------------------------------------------------------------
# YIN core
# ---------------------------------------------------------------------------


def _cmnd_frames(frames: np.ndarray, params: PitchParams) -> np.ndarray:
    """CMND matrix for a batch of frames, lags 0 .. tau_max + 1 inclusive.

    The difference function integrates over the first half of the frame;
    cross terms come from one FFT correlation per frame (no circular wrap
    because window + max lag stay inside the frame).
    """
    n_frames, frame_size = frames.shape
    w = frame_size // 2
    tau_hi = params.tau_max + 1
    if w + tau_hi > frame_size:
        raise ValueError("frame too short for the configured fmin")

    spec_full = np.fft.rfft(frames, n=frame_size, axis=1)
    windowed = np.zeros_like(frames)
    windowed[:, :w] = frames[:, :w]
    spec_win = np.fft.rfft(windowed, n=frame_size, axis=1)
    corr = np.fft.irfft(np.conj(spec_win) * spec_full, n=frame_size, axis=1)[:, : tau_hi + 1]

    sq = frames**2
    csum = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(sq, axis=1)], axis=1)
    tau = np.arange(tau_hi + 1)
    energy_tau = csum[:, tau + w] - csum[:, tau]  # sum of x[tau : tau+w]^2
    energy_0 = energy_tau[:, :1]

    diff = energy_0 + energy_tau - 2.0 * corr
    np.clip(diff, 0.0, None, out=diff)  # numerical guard: d is a sum of squares

    cumdiff = np.cumsum(diff[:, 1:], axis=1)
    cmnd = np.ones_like(diff)
    with np.errstate(invalid="ignore", divide="ignore"):
        cmnd[:, 1:] = diff[:, 1:] * tau[1:] / cumdiff
    cmnd[:, 1:][cumdiff <= 0.0] = 1.0
    cmnd[:, 0] = 1.0
    return cmnd


def _frame_candidates(cmnd_row: np.ndarray, params: PitchParams) -> tuple[np.ndarray, np.ndarray]:
    """Refined (lags, values) of CMND local minima in the search band."""
    lo, hi = params.tau_min, params.tau_max
    seg = cmnd_row[lo - 1 : hi + 2]
    mid = seg[1:-1]
    trough = (mid < seg[:-2]) & (mid <= seg[2:])
    idx = np.nonzero(trough)[0]
    if idx.size == 0:
        return np.empty(0), np.empty(0)

    tau = idx + lo
    left, center, right = cmnd_row[tau - 1], cmnd_row[tau], cmnd_row[tau + 1]
    denom = left - 2.0 * center + right
    shift = np.where(np.abs(denom) > 1e-12, 0.5 * (left - right) / np.where(denom == 0, 1, denom), 0.0)
    shift = np.clip(shift, -0.5, 0.5)
    values = center - 0.25 * (left - right) * shift
    lags = tau + shift

    freqs = params.sample_rate / lags
    keep = (freqs >= params.fmin) & (freqs <= params.fmax)
    return lags[keep], values[keep]


# Period multiples of a near-periodic frame produce CMND minima that differ
# only at noise level; ties within this window rank by lag so the fundamental
# (shortest period) comes first.
_TIE_EPS = 0.02


def yin_frame(frame: np.ndarray, params: PitchParams) -> list[tuple[float, float]]:
    """Period candidates for one frame as (fractional lag, CMND value).

    Returns every local minimum of the CMND in the lag band
    [sr/fmax, sr/fmin], parabolic-refined, sorted by ascending CMND value
    (near-ties resolved toward the smaller lag).  An all-zero frame has no
    candidates.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (params.frame_size,):
        raise ValueError(f"frame must have length {params.frame_size}, got {frame.shape}")
    if not np.any(frame):
        return []
    cmnd = _cmnd_frames(frame[None, :], params)[0]
    lags, values = _frame_candidates(cmnd, params)

    by_value = np.argsort(values, kind="stable")
    groups: list[list[int]] = []
    for i in by_value:
        if groups and values[i] <= values[groups[-1][0]] + _TIE_EPS:
            groups[-1].append(int(i))
        else:
            groups.append([int(i)])
    ordered = [i for g in groups for i in sorted(g, key=lambda k: lags[k])]
    return [(float(lags[i]), float(values[i])) for i in ordered]


# ---------------------------------------------------------------------------
# Threshold prior
# ---------------------------------------------------------------------------


def _beta_cumulative(params: PitchParams) -> tuple[np.ndarray, np.ndarray]:
    """Thresholds s_1..s_n and cumulative Beta mass at each threshold."""
    thresholds = np.arange(1, params.n_thresholds + 1) / params.n_thresholds
    cum = betainc(params.beta_a, params.beta_b, thresholds)
    return thresholds, cum


def _candidate_probs(
    lags: np.ndarray, values: np.ndarray, thresholds: np.ndarray, cum_mass: np.ndarray
) -> tuple[np.ndarray, float]:
    """Probability mass per candidate plus the frame's total voiced mass.

    For each threshold the YIN pick is the first (smallest-lag) trough
    below it; the candidate collects that threshold's Beta mass.
    Thresholds with no trough below route a small fraction of their mass
    to the global minimum and the rest to the unvoiced outcome.
    """
    order = np.argsort(lags, kind="stable")
    v = values[order]
    n = len(v)

    # Candidate k is the first trough below s iff v_k < s <= min(v_0..v_{k-1}).
    prev_min = np.concatenate([[np.inf], np.minimum.accumulate(v)[:-1]])
    lo_idx = np.searchsorted(thresholds, v, side="right")
    hi_idx = np.searchsorted(thresholds, np.minimum(prev_min, 1.0), side="right")

    cum0 = np.concatenate([[0.0], cum_mass])
    probs_sorted = np.maximum(cum0[np.maximum(hi_idx, lo_idx)] - cum0[lo_idx], 0.0)

    # Thresholds at or below the global minimum: no trough qualifies.
    global_min_pos = int(np.argmin(v))
    none_mass = cum0[np.searchsorted(thresholds, v[global_min_pos], side="right")]
    probs_sorted[global_min_pos] += _NO_TROUGH_VOICED * none_mass

    probs = np.empty(n)
    probs[order] = probs_sorted
    voiced_total = float(probs_sorted.sum())
    return probs, voiced_total


# ---------------------------------------------------------------------------
# Viterbi decoders
# ---------------------------------------------------------------------------


def viterbi(log_init: np.ndarray, log_trans: np.ndarray, log_obs: np.ndarray) -> np.ndarray:
    """Exact max-probability path for a dense HMM.

    ``log_obs`` has shape (n_frames, n_states); returns the state index per
    frame.  Used directly for small models and as the reference the banded
    tracker decoder is tested against.
    """
    n_frames, n_states = log_obs.shape
    back = np.zeros((n_frames, n_states), dtype=np.int32)
    score = log_init + log_obs[0]
    for t in range(1, n_frames):
        cand = score[:, None] + log_trans
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], np.arange(n_states)] + log_obs[t]
    path = np.zeros(n_frames, dtype=np.int64)
    path[-1] = int(np.argmax(score))
    for t in range(n_frames - 2, -1, -1):
        path[t] = back[t + 1, path[t + 1]]
    return path


def _banded_maxplus(scores: np.ndarray, kernel: np.ndarray, width: int) -> tuple[np.ndarray, np.ndarray]:
    """max-plus "convolution" with a banded kernel.

    Returns (values, source index) per target state for
    value[j] = max_i scores[i] + kernel[j - i + width], |j - i| <= width.
    """
    n = len(scores)
    padded = np.full(n + 2 * width, -np.inf, dtype=scores.dtype)
    padded[width : width + n] = scores
    windows = np.lib.stride_tricks.sliding_window_view(padded, 2 * width + 1)
    # windows[j, k] = padded[j + k] = scores[j + k - width] -> flip kernel
    cand = windows + kernel[::-1][None, :]
    offsets = np.argmax(cand, axis=1)
    values = cand[np.arange(n), offsets]
    sources = np.arange(n) + offsets - width
    return values, sources


def _pitch_transition_kernel(params: PitchParams) -> tuple[np.ndarray, np.ndarray, int]:
    """Triangular log-kernel plus per-source row normalizer."""
    width = int(round(params.max_semitone_step * 100.0 / CENTS_PER_BIN))
    offsets = np.arange(-width, width + 1, dtype=np.float64)
    tri = (width + 1.0) - np.abs(offsets)
    # Row sums differ near the bin edges where the band is clipped.
    n = params.n_bins
    row_sum = np.convolve(np.ones(n), tri, mode="same") if n >= len(tri) else np.array(
        [tri[max(0, width - i) : len(tri) - max(0, i + width + 1 - n)].sum() for i in range(n)]
    )
    log_kernel = np.log(tri)
    log_row_norm = np.log(row_sum)
    return log_kernel, log_row_norm, width


def _decode_pitch_path(
    obs_voiced: np.ndarray, obs_unvoiced: np.ndarray, params: PitchParams
) -> tuple[np.ndarray, np.ndarray]:
    """Banded Viterbi over (pitch bin) x (voiced, unvoiced) states.

    Returns (voiced flag, bin index) per frame.  The transition factorizes
    as kron(voicing switch, triangular pitch band), so each step needs two
    banded max-plus passes instead of a dense state-squared sweep.
    """
    n_frames, n_bins = obs_voiced.shape
    log_kernel, log_row_norm, width = _pitch_transition_kernel(params)
    log_stay = np.log(1.0 - params.switch_prob)
    log_switch = np.log(params.switch_prob)

    log_obs_v = np.log(np.maximum(obs_voiced, _LOG_FLOOR)).astype(np.float32)
    log_obs_u = np.log(np.maximum(obs_unvoiced, _LOG_FLOOR)).astype(np.float32)
    kernel32 = log_kernel.astype(np.float32)
    norm32 = log_row_norm.astype(np.float32)

    score_v = np.full(n_bins, np.log(_LOG_FLOOR), dtype=np.float32) + log_obs_v[0]
    score_u = np.float32(np.log(1.0 / n_bins)) + log_obs_u[0]

    back_bin_v = np.zeros((n_frames, n_bins), dtype=np.int16)
    back_bin_u = np.zeros((n_frames, n_bins), dtype=np.int16)
    from_u_v = np.zeros((n_frames, n_bins), dtype=bool)
    from_u_u = np.zeros((n_frames, n_bins), dtype=bool)

    for t in range(1, n_frames):
        via_v = score_v + np.float32(log_stay)
        via_u = score_u + np.float32(log_switch)
        pre_v = np.maximum(via_v, via_u)
        from_u_v[t] = via_u > via_v

        via_v2 = score_v + np.float32(log_switch)
        via_u2 = score_u + np.float32(log_stay)
        pre_u = np.maximum(via_v2, via_u2)
        from_u_u[t] = via_u2 > via_v2

        val_v, src_v = _banded_maxplus(pre_v - norm32, kernel32, width)
        val_u, src_u = _banded_maxplus(pre_u - norm32, kernel32, width)
        back_bin_v[t] = src_v
        back_bin_u[t] = src_u
        score_v = val_v + log_obs_v[t]
        score_u = val_u + log_obs_u[t]

    voiced = np.zeros(n_frames, dtype=bool)
    bins = np.zeros(n_frames, dtype=np.int64)
    if float(score_v.max()) >= float(score_u.max()):
        voiced[-1], bins[-1] = True, int(np.argmax(score_v))
    else:
        voiced[-1], bins[-1] = False, int(np.argmax(score_u))
    for t in range(n_frames - 1, 0, -1):
        j = bins[t]
        if voiced[t]:
            i = int(back_bin_v[t][j])
            voiced[t - 1] = not from_u_v[t][i]
        else:
            i = int(back_bin_u[t][j])
            voiced[t - 1] = not from_u_u[t][i]
        bins[t - 1] = i
    return voiced, bins


# ---------------------------------------------------------------------------
# Full tracker
# ---------------------------------------------------------------------------


def pyin_track(buffer: AudioBuffer, params: PitchParams | None = None) -> PitchTrack:
    """Track f0 over a mono buffer; frames are centered every ``hop`` samples.

    Buffers shorter than one frame produce an empty track.
    """
    if params is None:
        params = PitchParams(sample_rate=buffer.sample_rate)
    if buffer.sample_rate != params.sample_rate:
        raise ValueError(
            f"buffer rate {buffer.sample_rate} != params rate {params.sample_rate}"
        )
    x = buffer.samples
    if len(x) < params.frame_size:
        empty = np.zeros(0)
        return PitchTrack(empty, empty.copy(), empty.copy(), params.frame_size, params.hop)

    half = params.frame_size // 2
    padded = np.pad(x, half, mode="reflect")
    n_frames = 1 + len(x) // params.hop
    frames = np.lib.stride_tricks.sliding_window_view(padded, params.frame_size)[:: params.hop]
    frames = np.ascontiguousarray(frames[:n_frames])

    cmnd = _cmnd_frames(frames, params)
    thresholds, cum_mass = _beta_cumulative(params)

    n_bins = params.n_bins
    obs_voiced = np.zeros((n_frames, n_bins))
    voiced_prob = np.zeros(n_frames)
    frame_cand_freqs: list[np.ndarray] = []
    frame_cand_bins: list[np.ndarray] = []

    for t in range(n_frames):
        lags, values = _frame_candidates(cmnd[t], params)
        if lags.size == 0:
            frame_cand_freqs.append(np.empty(0))
            frame_cand_bins.append(np.empty(0, dtype=np.int64))
            continue
        probs, voiced_total = _candidate_probs(lags, values, thresholds, cum_mass)
        freqs = params.sample_rate / lags
        bins = params.hz_to_bin(freqs)
        np.add.at(obs_voiced[t], bins, probs)
        voiced_prob[t] = min(voiced_total, 1.0)
        frame_cand_freqs.append(freqs)
        frame_cand_bins.append(bins)

    obs_unvoiced = ((1.0 - voiced_prob) / n_bins)[:, None] * np.ones((1, n_bins))
    voiced, bins = _decode_pitch_path(obs_voiced, obs_unvoiced, params)

    f0 = np.zeros(n_frames)
    for t in range(n_frames):
        if not voiced[t]:
            continue
        cand_bins = frame_cand_bins[t]
        if cand_bins.size:
            dist = np.abs(cand_bins - bins[t])
            k = int(np.argmin(dist))
            if dist[k] <= 1:
                f0[t] = frame_cand_freqs[t][k]
                continue
        f0[t] = params.bin_to_hz(bins[t])

    times = np.arange(n_frames) * params.hop / params.sample_rate
    return PitchTrack(times, f0, voiced_prob, params.frame_size, params.hop)
