"""Dataset construction: manifests, stem-collection builders and a
copyright-free synthetic corpus generator.

Licensed source audio is ingested from user-supplied directories and never
redistributed; the synthetic generator (tag SYNTH) produces deliberately
off-key vocals so the retune operator leaves a measurable quantization
delta, validated at generation time via the pitch tracker.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import DEFAULT_SAMPLE_RATE, AudioBuffer, load_wav, pad_or_trim, resample, save_wav
from .pitch import PitchParams, pyin_track
from .retune import autotune, remix

logger = logging.getLogger(__name__)

VALID_SPLITS = ("train", "val", "test")
VALID_KINDS = ("vocal_pair", "song_pair")
# Fraction of pairs whose retuned side must sit strictly closer to the
# equal-tempered grid than its source; generation aborts below this.
LABEL_VALIDITY_MIN = 0.95


@dataclass
class ManifestEntry:
    pair_id: str
    negative_path: str
    positive_path: str
    kind: str
    source_id: str
    split: str

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"bad kind {self.kind!r}")
        if self.split not in VALID_SPLITS:
            raise ValueError(f"bad split {self.split!r}")


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    dataset_tag: str

    def __len__(self) -> int:
        return len(self.entries)

    def subset(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]


def write_manifest(manifest: DatasetManifest, path: str | Path, params: dict | None = None) -> None:
    """CSV with one pair per row plus a JSON sidecar holding the tag and
    the exact generation parameters."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair_id", "negative_path", "positive_path", "kind", "source_id", "split"])
        for e in manifest.entries:
            writer.writerow([e.pair_id, e.negative_path, e.positive_path, e.kind, e.source_id, e.split])
    sidecar = {"dataset_tag": manifest.dataset_tag, "params": params or {}}
    path.with_suffix(".params.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def read_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    entries = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            entries.append(ManifestEntry(**row))
    sidecar = path.with_suffix(".params.json")
    tag = "UNKNOWN"
    if sidecar.exists():
        tag = json.loads(sidecar.read_text()).get("dataset_tag", "UNKNOWN")
    return DatasetManifest(entries=entries, dataset_tag=tag)


def check_split_hygiene(manifest: DatasetManifest) -> None:
    """No source may contribute pairs to more than one split."""
    seen: dict[str, str] = {}
    for e in manifest.entries:
        if e.source_id in seen and seen[e.source_id] != e.split:
            raise ValueError(
                f"source {e.source_id} appears in both {seen[e.source_id]} and {e.split}"
            )
        seen[e.source_id] = e.split


def verify_manifest(manifest: DatasetManifest, base_dir: str | Path) -> None:
    """Referential integrity: every listed file exists and loads."""
    base = Path(base_dir)
    for e in manifest.entries:
        for rel in (e.negative_path, e.positive_path):
            p = base / rel
            if not p.exists():
                raise FileNotFoundError(f"manifest references missing file {p}")
            load_wav(p)


# ---------------------------------------------------------------------------
# Licensed-corpus builders (manifest-driven ingestion; audio stays local)
# ---------------------------------------------------------------------------


def _performer_tag(path: Path, root: Path) -> str:
    rel = path.relative_to(root)
    if len(rel.parts) > 1:
        return rel.parts[0]
    return path.stem.split("_")[0]


def _assign_splits(groups: list[str], val_fraction: float, test_fraction: float, seed: int) -> dict[str, str]:
    order = sorted(groups)
    rng = np.random.default_rng(seed)
    rng.shuffle(order)
    n = len(order)
    n_test = int(np.ceil(n * test_fraction)) if test_fraction > 0 else 0
    n_val = int(np.ceil(n * val_fraction)) if val_fraction > 0 else 0
    assignment = {}
    for i, g in enumerate(order):
        if i < n_test:
            assignment[g] = "test"
        elif i < n_test + n_val:
            assignment[g] = "val"
        else:
            assignment[g] = "train"
    return assignment


def build_d1(
    vocal_dir: str | Path,
    out_dir: str | Path,
    val_fraction: float = 0.2,
    test_fraction: float = 0.0,
    seed: int = 0,
    segment_seconds: float = 10.0,
    pitch_params: PitchParams | None = None,
) -> DatasetManifest:
    """Monophonic vocal pairs: standardize to 10 s, retune, split by performer.

    Performer tags come from the first directory level under ``vocal_dir``
    or, for flat layouts, the first underscore-delimited filename token.
    """
    vocal_dir, out_dir = Path(vocal_dir), Path(out_dir)
    files = sorted(vocal_dir.rglob("*.wav"))
    if not files:
        raise ValueError(f"no WAV files under {vocal_dir}")

    performers = sorted({_performer_tag(f, vocal_dir) for f in files})
    split_of = _assign_splits(performers, val_fraction, test_fraction, seed)

    (out_dir / "negative").mkdir(parents=True, exist_ok=True)
    (out_dir / "positive").mkdir(parents=True, exist_ok=True)

    entries = []
    for f in files:
        try:
            buf = load_wav(f)
        except Exception as exc:  # unreadable files are skipped, not fatal
            logger.warning("skipping %s: %s", f, exc)
            continue
        buf = resample(buf, DEFAULT_SAMPLE_RATE)
        v_n = pad_or_trim(buf, segment_seconds)
        v_p = autotune(v_n, params=pitch_params)
        pair_id = f.stem
        neg_rel, pos_rel = f"negative/{pair_id}.wav", f"positive/{pair_id}.wav"
        save_wav(v_n, out_dir / neg_rel)
        save_wav(v_p, out_dir / pos_rel)
        performer = _performer_tag(f, vocal_dir)
        entries.append(
            ManifestEntry(pair_id, neg_rel, pos_rel, "vocal_pair", performer, split_of[performer])
        )

    manifest = DatasetManifest(entries=entries, dataset_tag="D1")
    check_split_hygiene(manifest)
    write_manifest(
        manifest,
        out_dir / "manifest.csv",
        {"seed": seed, "val_fraction": val_fraction, "test_fraction": test_fraction,
         "segment_seconds": segment_seconds, "source_dir": str(vocal_dir)},
    )
    return manifest


def _stem_pairs(stem_dir: Path) -> list[Path]:
    return sorted(d for d in stem_dir.iterdir() if d.is_dir())


def _build_song_pairs(
    stem_dir: Path,
    out_dir: Path,
    split: str,
    tag: str,
    make_vocal_manifest: bool,
    pitch_params: PitchParams | None,
) -> tuple[DatasetManifest | None, DatasetManifest]:
    """Shared stem-pair pipeline: retune the vocal, remix with accompaniment."""
    vocal_entries, song_entries = [], []
    for sub in ("vocals_negative", "vocals_positive", "songs_negative", "songs_positive"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    for song in _stem_pairs(stem_dir):
        vocal_path = song / "vocals.wav"
        acc_path = song / "accompaniment.wav"
        if not vocal_path.exists() or not acc_path.exists():
            logger.warning("skipping %s: missing stem", song.name)
            continue
        v_n = resample(load_wav(vocal_path), DEFAULT_SAMPLE_RATE)
        acc = resample(load_wav(acc_path), DEFAULT_SAMPLE_RATE)
        v_p = autotune(v_n, params=pitch_params)
        x_n = remix(v_n, acc)
        x_p = remix(v_p, acc)

        pair_id = song.name
        paths = {
            "vn": f"vocals_negative/{pair_id}.wav",
            "vp": f"vocals_positive/{pair_id}.wav",
            "xn": f"songs_negative/{pair_id}.wav",
            "xp": f"songs_positive/{pair_id}.wav",
        }
        save_wav(v_n, out_dir / paths["vn"])
        save_wav(v_p, out_dir / paths["vp"])
        save_wav(x_n, out_dir / paths["xn"])
        save_wav(x_p, out_dir / paths["xp"])
        if make_vocal_manifest:
            vocal_entries.append(
                ManifestEntry(pair_id, paths["vn"], paths["vp"], "vocal_pair", pair_id, split)
            )
        song_entries.append(
            ManifestEntry(pair_id, paths["xn"], paths["xp"], "song_pair", pair_id, split)
        )

    vocal_manifest = (
        DatasetManifest(entries=vocal_entries, dataset_tag="D2") if make_vocal_manifest else None
    )
    song_manifest = DatasetManifest(entries=song_entries, dataset_tag=tag)
    return vocal_manifest, song_manifest


def build_d2_d3(
    stem_dir: str | Path,
    out_dir: str | Path,
    split: str = "train",
    pitch_params: PitchParams | None = None,
) -> tuple[DatasetManifest, DatasetManifest]:
    """Vocal pairs (D2) and composed-song pairs (D3) from aligned stems.

    ``stem_dir`` holds one directory per song containing ``vocals.wav``
    and ``accompaniment.wav``; songs with a missing stem are skipped.
    """
    out_dir = Path(out_dir)
    d2, d3 = _build_song_pairs(Path(stem_dir), out_dir, split, "D3", True, pitch_params)
    write_manifest(d2, out_dir / "d2_manifest.csv", {"source_dir": str(stem_dir), "split": split})
    write_manifest(d3, out_dir / "d3_manifest.csv", {"source_dir": str(stem_dir), "split": split})
    return d2, d3


def build_d4(
    stem_dir: str | Path,
    out_dir: str | Path,
    pitch_params: PitchParams | None = None,
) -> DatasetManifest:
    """Test-partition song pairs, built exactly like the D3 path."""
    out_dir = Path(out_dir)
    _, d4 = _build_song_pairs(Path(stem_dir), out_dir, "test", "D4", False, pitch_params)
    write_manifest(d4, out_dir / "d4_manifest.csv", {"source_dir": str(stem_dir), "split": "test"})
    return d4


# ---------------------------------------------------------------------------
# Synthetic vocals and accompaniment
# ---------------------------------------------------------------------------


@dataclass
class SynthVoiceSpec:
    """Deterministic recipe for one synthetic vocal take.

    ``f0_points`` are (time_s, Hz) breakpoints of a piecewise-linear glide;
    ``amp_points`` shape the amplitude envelope (zeros create pauses).
    ``detune_cents`` shifts the whole contour off the equal-tempered grid.
    """

    f0_points: tuple
    amp_points: tuple
    vibrato_depth_cents: float = 30.0
    vibrato_rate_hz: float = 5.5
    detune_cents: float = 0.0
    formants_hz: tuple = (600.0, 1400.0, 2600.0)
    duration_s: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not -80.0 <= self.detune_cents <= 80.0:
            raise ValueError(f"detune {self.detune_cents} outside [-80, 80] cents")
        freqs = [hz for _, hz in self.f0_points]
        if min(freqs) < 65.0 or max(freqs) > 1047.0:
            raise ValueError("f0 contour leaves the trackable [65, 1047] Hz band")


def _resonator(x: np.ndarray, center_hz: float, bandwidth_hz: float, sr: int) -> np.ndarray:
    """Two-pole bandpass resonator with unit peak gain."""
    r = np.exp(-np.pi * bandwidth_hz / sr)
    theta = 2.0 * np.pi * center_hz / sr
    a = [1.0, -2.0 * r * np.cos(theta), r * r]
    gain = (1.0 - r * r) * np.sin(theta)
    return lfilter([gain], a, x)


def synth_vocal(spec: SynthVoiceSpec, sr: int = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """Harmonic source (band-limited, 1/h rolloff) through three formant
    resonators with an amplitude envelope; bit-deterministic per spec."""
    n = int(round(spec.duration_s * sr))
    t = np.arange(n) / sr
    rng = np.random.default_rng(spec.seed)
    vib_phase = rng.uniform(0.0, 2.0 * np.pi)

    times = np.array([p[0] for p in spec.f0_points])
    hzs = np.array([p[1] for p in spec.f0_points])
    f_base = np.interp(t, times, hzs)
    cents = spec.detune_cents + spec.vibrato_depth_cents * np.sin(
        2.0 * np.pi * spec.vibrato_rate_hz * t + vib_phase
    )
    f_inst = f_base * 2.0 ** (cents / 1200.0)

    phase = 2.0 * np.pi * np.cumsum(f_inst) / sr
    n_harm = max(3, int(8000.0 / float(f_inst.max())))
    source = np.zeros(n)
    for h in range(1, n_harm + 1):
        source += np.sin(h * phase) / h

    voiced = sum(
        gain * _resonator(source, fc, 80.0 + 0.05 * fc, sr)
        for fc, gain in zip(spec.formants_hz, (1.0, 0.7, 0.4))
    )
    peak = float(np.max(np.abs(voiced)))
    if peak > 0:
        voiced /= peak

    amp_times = np.array([p[0] for p in spec.amp_points])
    amp_vals = np.array([p[1] for p in spec.amp_points])
    envelope = np.interp(t, amp_times, amp_vals)
    return AudioBuffer(np.clip(0.85 * voiced * envelope, -1.0, 1.0), sr)


def synth_accompaniment(duration_s: float, seed: int, sr: int = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """Chord pad (exact-pitch band-limited saws) plus filtered-noise
    percussion on a beat grid."""
    n = int(round(duration_s * sr))
    t = np.arange(n) / sr
    rng = np.random.default_rng(seed)

    root_midi = int(rng.integers(45, 57))
    intervals = (0, 4, 7) if rng.random() < 0.5 else (0, 3, 7)
    pad = np.zeros(n)
    for iv in intervals:
        f = 440.0 * 2.0 ** ((root_midi + iv - 69) / 12.0)
        for h in range(1, 9):
            pad += np.sin(2.0 * np.pi * f * h * t + rng.uniform(0, 2 * np.pi)) / (h * h)
    pad /= np.max(np.abs(pad))
    attack = np.minimum(t / 0.5, 1.0)
    pad *= attack

    bpm = float(rng.uniform(90.0, 130.0))
    beat = int(round(sr * 60.0 / bpm))
    perc = np.zeros(n)
    burst_len = int(0.06 * sr)
    burst_env = np.exp(-np.arange(burst_len) / (0.015 * sr))
    for start in range(0, n - burst_len, beat):
        perc[start : start + burst_len] += burst_env * rng.standard_normal(burst_len)
    perc = _resonator(perc, 3000.0, 2000.0, sr)
    perc_peak = np.max(np.abs(perc))
    if perc_peak > 0:
        perc /= perc_peak

    out = 0.30 * pad + 0.12 * perc
    return AudioBuffer(np.clip(out, -1.0, 1.0), sr)


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------


def _random_voice_spec(rng: np.random.Generator, singer_formants: tuple, duration_s: float) -> SynthVoiceSpec:
    """Off-key phrase plan: note pitches sit 20-45 cents off the grid."""
    detune_sign = 1.0 if rng.random() < 0.5 else -1.0
    detune = float(detune_sign * rng.uniform(20.0, 45.0))

    f0_points: list[tuple[float, float]] = []
    amp_points: list[tuple[float, float]] = [(0.0, 0.0)]
    cursor = float(rng.uniform(0.1, 0.4))
    low, high = 150.0, 600.0
    while cursor < duration_s - 1.0:
        phrase_len = float(rng.uniform(1.2, 3.0))
        end = min(cursor + phrase_len, duration_s - 0.2)
        midi_a = int(rng.integers(50, 67))
        midi_b = int(np.clip(midi_a + rng.integers(-4, 5), 50, 66))
        f_a = float(np.clip(440.0 * 2.0 ** ((midi_a - 69) / 12.0), low, high))
        f_b = float(np.clip(440.0 * 2.0 ** ((midi_b - 69) / 12.0), low, high))
        f0_points += [(cursor, f_a), (end, f_b)]
        amp_points += [(cursor, 0.0), (cursor + 0.08, 1.0), (end - 0.08, 0.9), (end, 0.0)]
        cursor = end + float(rng.uniform(0.2, 0.5))
    if not f0_points:
        f0_points = [(0.0, 220.0), (duration_s, 220.0)]
        amp_points = [(0.0, 1.0), (duration_s, 1.0)]

    return SynthVoiceSpec(
        f0_points=tuple(f0_points),
        amp_points=tuple(amp_points),
        vibrato_depth_cents=float(rng.uniform(20.0, 55.0)),
        vibrato_rate_hz=float(rng.uniform(4.0, 7.0)),
        detune_cents=detune,
        formants_hz=singer_formants,
        duration_s=duration_s,
        seed=int(rng.integers(0, 2**31 - 1)),
    )


def _median_cents_off_grid(f0_values: np.ndarray) -> float:
    voiced = f0_values[f0_values > 0]
    if voiced.size == 0:
        return np.inf
    semis = 69.0 + 12.0 * np.log2(voiced / 440.0)
    return float(np.median(np.abs(semis - np.round(semis)) * 100.0))


def build_synth_corpus(
    n_pairs: int,
    with_accompaniment: bool,
    seed: int,
    out_dir: str | Path,
    split_counts: tuple[int, int, int] | None = None,
    n_singers: int = 12,
    duration_s: float = 10.0,
) -> DatasetManifest:
    """Generate ``n_pairs`` (negative, retuned positive) pairs.

    Singers (formant sets) are partitioned across splits before pairs are
    drawn, so no singer leaks between train/val/test.  Every corpus is
    checked for label validity: the retuned side of >= 95% of pairs must
    track strictly closer to exact pitches than its source, else
    generation raises.  Fully deterministic for a fixed seed.
    """
    if n_pairs < 2:
        raise ValueError("n_pairs must be >= 2")
    out_dir = Path(out_dir)
    if split_counts is None:
        n_val = max(1, int(round(n_pairs * 0.15)))
        n_test = max(1, int(round(n_pairs * 0.15)))
        split_counts = (n_pairs - n_val - n_test, n_val, n_test)
    if sum(split_counts) != n_pairs:
        raise ValueError(f"split_counts {split_counts} must sum to n_pairs {n_pairs}")

    rng = np.random.default_rng(seed)
    formant_sets = [
        (
            float(rng.uniform(400.0, 850.0)),
            float(rng.uniform(1100.0, 2200.0)),
            float(rng.uniform(2300.0, 3200.0)),
        )
        for _ in range(n_singers)
    ]
    singer_ids = np.arange(n_singers)
    rng.shuffle(singer_ids)
    n_test_singers = max(1, n_singers // 6)
    n_val_singers = max(1, n_singers // 6)
    pool = {
        "test": singer_ids[:n_test_singers],
        "val": singer_ids[n_test_singers : n_test_singers + n_val_singers],
        "train": singer_ids[n_test_singers + n_val_singers :],
    }

    (out_dir / "negative").mkdir(parents=True, exist_ok=True)
    (out_dir / "positive").mkdir(parents=True, exist_ok=True)
    if with_accompaniment:
        for sub in ("stems/vocal_negative", "stems/vocal_positive", "stems/accompaniment"):
            (out_dir / sub).mkdir(parents=True, exist_ok=True)

    entries = []
    validity: list[tuple[float, float]] = []
    pair_index = 0
    kind = "song_pair" if with_accompaniment else "vocal_pair"

    for split, count in zip(VALID_SPLITS, split_counts):
        for _ in range(count):
            singer = int(pool[split][int(rng.integers(len(pool[split])))])
            spec = _random_voice_spec(rng, formant_sets[singer], duration_s)
            acc_seed = int(rng.integers(0, 2**31 - 1))

            v_n = synth_vocal(spec)
            track_n = pyin_track(v_n)
            v_p = autotune(v_n, track=track_n)
            track_p = pyin_track(v_p)
            validity.append(
                (_median_cents_off_grid(track_n.f0), _median_cents_off_grid(track_p.f0))
            )

            pair_id = f"p{pair_index:04d}"
            neg_rel, pos_rel = f"negative/{pair_id}.wav", f"positive/{pair_id}.wav"
            if with_accompaniment:
                acc = synth_accompaniment(duration_s, acc_seed)
                save_wav(v_n, out_dir / "stems/vocal_negative" / f"{pair_id}.wav")
                save_wav(v_p, out_dir / "stems/vocal_positive" / f"{pair_id}.wav")
                save_wav(acc, out_dir / "stems/accompaniment" / f"{pair_id}.wav")
                save_wav(remix(v_n, acc), out_dir / neg_rel)
                save_wav(remix(v_p, acc), out_dir / pos_rel)
            else:
                save_wav(v_n, out_dir / neg_rel)
                save_wav(v_p, out_dir / pos_rel)

            entries.append(
                ManifestEntry(pair_id, neg_rel, pos_rel, kind, f"singer{singer:02d}", split)
            )
            pair_index += 1

    ok = sum(1 for neg_off, pos_off in validity if pos_off < neg_off)
    if ok < LABEL_VALIDITY_MIN * n_pairs:
        raise RuntimeError(
            f"label validity failed: only {ok}/{n_pairs} pairs moved closer to the pitch grid"
        )

    manifest = DatasetManifest(entries=entries, dataset_tag="SYNTH")
    check_split_hygiene(manifest)
    write_manifest(
        manifest,
        out_dir / "manifest.csv",
        {
            "seed": seed,
            "n_pairs": n_pairs,
            "with_accompaniment": with_accompaniment,
            "split_counts": list(split_counts),
            "n_singers": n_singers,
            "duration_s": duration_s,
            "label_validity": ok / n_pairs,
        },
    )
    return manifest
