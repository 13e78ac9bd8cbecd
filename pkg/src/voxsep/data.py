"""Audio clips, stem tracks, dataset splits and the synthetic desk-scale corpus."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal
from scipy.io import wavfile

from .errors import FormatError, InvalidArgument, MissingStem

ROLES = ("voice", "drums", "bass", "accompaniment")
# on-disk file stem for every role (musdb18 naming)
ROLE_FILES = {"voice": "vocals", "drums": "drums", "bass": "bass", "accompaniment": "other"}
DEFAULT_RATE = 8192


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise InvalidArgument(f"sample_rate must be a positive integer, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise InvalidArgument("samples contain NaN or Inf")

    def __len__(self):
        return len(self.samples)

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class StemTrack:
    id: str
    stems: dict
    sample_rate: int

    def __post_init__(self):
        missing = [r for r in ROLES if r not in self.stems]
        if missing:
            raise MissingStem(missing[0])
        lengths = {len(self.stems[r]) for r in ROLES}
        rates = {self.stems[r].sample_rate for r in ROLES}
        if len(lengths) != 1 or rates != {self.sample_rate}:
            raise FormatError("stems must share one length and one sample rate")

    def __len__(self):
        return len(self.stems["voice"])


@dataclass
class DatasetSplit:
    train: list
    valid: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def __post_init__(self):
        a, b, c = set(self.train), set(self.valid), set(self.test)
        if a & b or a & c or b & c:
            raise InvalidArgument("train/valid/test must be pairwise disjoint")


# ---------------------------------------------------------------- wav io

def read_wav(path) -> AudioClip:
    try:
        rate, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if data.ndim != 1:
        raise FormatError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported sample format {data.dtype}")
    return AudioClip(x, rate)


def write_wav(path, clip: AudioClip):
    """Write a float-32 mono WAV file."""
    wavfile.write(path, clip.sample_rate, clip.samples.astype(np.float32))


def load_track(dir_path) -> StemTrack:
    dir_path = os.fspath(dir_path)
    clips = {}
    for role in ROLES:
        path = os.path.join(dir_path, ROLE_FILES[role] + ".wav")
        if not os.path.isfile(path):
            raise MissingStem(role)
        clips[role] = read_wav(path)
    rates = {c.sample_rate for c in clips.values()}
    if len(rates) != 1:
        raise FormatError(f"{dir_path}: stems have different sample rates {sorted(rates)}")
    rate = rates.pop()
    n = max(len(c) for c in clips.values())
    stems = {r: AudioClip(np.pad(c.samples, (0, n - len(c))), rate) for r, c in clips.items()}
    return StemTrack(os.path.basename(os.path.normpath(dir_path)), stems, rate)


def save_track(dir_path, track: StemTrack):
    os.makedirs(dir_path, exist_ok=True)
    for role in ROLES:
        write_wav(os.path.join(dir_path, ROLE_FILES[role] + ".wav"), track.stems[role])


def list_tracks(root) -> list:
    """Sorted ids of the track directories found under ``root``."""
    out = []
    for name in sorted(os.listdir(root)):
        path = os.path.join(root, name)
        if os.path.isdir(path) and os.path.isfile(os.path.join(path, "vocals.wav")):
            out.append(name)
    return out


# ---------------------------------------------------------------- mixing / resampling

def mix(track: StemTrack) -> AudioClip:
    total = np.zeros(len(track))
    for role in ROLES:
        total = total + track.stems[role].samples
    return AudioClip(total, track.sample_rate)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited polyphase resampling with a Kaiser-windowed sinc.

    The filter spans 64 zero crossings of the lower-rate sinc, so the
    pass band is flat up to roughly 90% of the lower Nyquist frequency.
    """
    if target_rate <= 0:
        raise InvalidArgument(f"target_rate must be positive, got {target_rate}")
    target_rate = int(target_rate)
    src = clip.sample_rate
    n_out = int(math.floor(len(clip) * target_rate / src + 0.5))
    if target_rate == src:
        return AudioClip(clip.samples.copy(), src)
    g = math.gcd(src, target_rate)
    up, down = target_rate // g, src // g
    y = _polyphase(clip.samples, up, down)
    return AudioClip(_fit_length(y, n_out), target_rate)


def resample_ratio(x: np.ndarray, ratio: float, n_out: int, max_den: int = 1000) -> np.ndarray:
    """Resample ``x`` by an arbitrary ratio (output/input), approximated rationally."""
    frac = Fraction(ratio).limit_denominator(max_den)
    y = _polyphase(x, frac.numerator, frac.denominator)
    return _fit_length(y, n_out)


def _polyphase(x, up, down):
    if up == down:
        return np.asarray(x, dtype=np.float64).copy()
    m = max(up, down)
    taps = signal.firwin(64 * m + 1, 1.0 / m, window=("kaiser", 8.0))
    return signal.resample_poly(x, up, down, window=taps)


def _fit_length(y, n):
    if len(y) >= n:
        return y[:n]
    return np.pad(y, (0, n - len(y)))


# ---------------------------------------------------------------- splits

def split_dataset(track_ids, valid_fraction: float, seed: int, test_ids=()) -> DatasetSplit:
    ids = list(track_ids)
    if not ids:
        raise InvalidArgument("cannot split an empty track list")
    if not 0.0 <= valid_fraction < 1.0:
        raise InvalidArgument(f"valid_fraction must lie in [0, 1), got {valid_fraction}")
    n_valid = int(math.floor(valid_fraction * len(ids) + 0.5))
    order = np.random.default_rng(seed).permutation(len(ids))
    valid = sorted(ids[i] for i in order[:n_valid])
    train = sorted(ids[i] for i in order[n_valid:])
    return DatasetSplit(train, valid, list(test_ids))


def write_split(path, split: DatasetSplit):
    with open(path, "w") as fh:
        for name in ("train", "valid", "test"):
            fh.write(f"[{name}]\n")
            for tid in getattr(split, name):
                fh.write(tid + "\n")


def read_split(path) -> DatasetSplit:
    sections = {"train": [], "valid": [], "test": []}
    current = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                if current not in sections:
                    raise FormatError(f"unknown split section [{current}]")
            elif current is None:
                raise FormatError("track id before any section header")
            else:
                sections[current].append(line)
    return DatasetSplit(**sections)


# ---------------------------------------------------------------- synthetic corpus

def _midi_hz(m):
    return 440.0 * 2.0 ** ((np.asarray(m, dtype=float) - 69.0) / 12.0)


def _note_grid(n, rate, note_len):
    """Index of the note active at every sample, plus position inside the note."""
    seg = max(1, int(round(note_len * rate)))
    idx = np.arange(n) // seg
    pos = (np.arange(n) % seg) / seg
    return idx, pos


def _peak(x, peak):
    m = np.max(np.abs(x))
    return x * (peak / m) if m > 0 else x


def synth_track(seed: int, duration: float, sample_rate: int = DEFAULT_RATE,
                disjoint: bool = False, voice_f0_range=(150.0, 400.0)) -> StemTrack:
    """Deterministic four-stem toy song.

    With ``disjoint=True`` the voice only has partials in 1500-3800 Hz and
    every accompaniment stem stays below 1000 Hz, so the ideal mask is a
    known band mask.
    """
    if duration <= 0:
        raise InvalidArgument(f"duration must be positive, got {duration}")
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    nyq = sample_rate / 2.0

    # voice: sung notes with vibrato, formant-shaped harmonics, note envelopes
    lo, hi = voice_f0_range
    if disjoint:
        lo, hi = max(lo, 300.0), max(hi, 450.0)
    note_len = rng.uniform(0.35, 0.6)
    idx, pos = _note_grid(n, sample_rate, note_len)
    lo_m = 69 + 12 * np.log2(lo * 1.03 / 440.0)
    hi_m = 69 + 12 * np.log2(hi / 1.03 / 440.0)
    notes = _midi_hz(rng.integers(int(np.ceil(lo_m)), int(np.floor(hi_m)) + 1, idx[-1] + 1))
    vib_rate, vib_depth = rng.uniform(4.5, 6.5), rng.uniform(0.005, 0.02)
    f0 = notes[idx] * (1.0 + vib_depth * np.sin(2 * np.pi * vib_rate * t))
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    formant = rng.uniform(600.0, 1100.0)
    voice = np.zeros(n)
    kmax = int(nyq / lo)
    for k in range(1, kmax + 1):
        fk = k * f0
        if disjoint:
            base = k * notes[idx]
            gain = ((base >= 1500.0) & (base <= 3800.0)).astype(float)
        else:
            gain = np.exp(-0.5 * ((fk - formant) / 350.0) ** 2) + 0.3 / k
        gain = gain * (fk < 0.95 * nyq)
        voice += gain * np.sin(k * phase)
    env = np.sin(np.pi * np.clip(pos / 0.9, 0.0, 1.0)) ** 0.5
    voice *= env

    # drums: kick and noise bursts on a fixed beat
    beat = rng.uniform(0.4, 0.6)
    bidx, bpos = _note_grid(n, sample_rate, beat)
    tb = bpos * beat
    noise = rng.standard_normal(n)
    sos = signal.butter(8, 700.0 if disjoint else 2000.0, "low" if disjoint else "high",
                        fs=sample_rate, output="sos")
    hat = signal.sosfilt(sos, noise) * np.exp(-tb / 0.03)
    kick = np.sin(2 * np.pi * (60.0 * tb + 40.0 * (1 - np.exp(-tb / 0.02)))) * np.exp(-tb / 0.08)
    drums = 0.6 * hat + kick

    # bass: low sine riff
    bass_notes = _midi_hz(rng.integers(28, 43, bidx[-1] + 1))
    bphase = 2 * np.pi * np.cumsum(bass_notes[bidx]) / sample_rate
    bass = (np.sin(bphase) + 0.3 * np.sin(2 * bphase)) * np.exp(-tb / 0.4)

    # accompaniment: sustained chords
    cidx, cpos = _note_grid(n, sample_rate, 4 * beat)
    roots = rng.integers(48, 60, cidx[-1] + 1)
    acc = np.zeros(n)
    limit = 1000.0 if disjoint else 0.95 * nyq
    for interval in (0, 4, 7, 12):
        fr = _midi_hz(roots + interval)[cidx]
        ph = 2 * np.pi * np.cumsum(fr) / sample_rate
        for h in (1, 2, 3):
            acc += (fr * h < limit) * np.sin(h * ph) / h
    acc *= 0.6 + 0.4 * np.cos(np.pi * cpos) ** 2

    if disjoint:
        # note onsets and envelope steps spread energy upwards; band-limit the finished stems
        lp = signal.butter(8, 1000.0, "low", fs=sample_rate, output="sos")
        drums, bass, acc = (signal.sosfiltfilt(lp, x) for x in (drums, bass, acc))

    peaks = rng.uniform(0.35, 0.5, 4)
    stems = {
        "voice": AudioClip(_peak(voice, peaks[0]), sample_rate),
        "drums": AudioClip(_peak(drums, peaks[1]), sample_rate),
        "bass": AudioClip(_peak(bass, peaks[2]), sample_rate),
        "accompaniment": AudioClip(_peak(acc, peaks[3]), sample_rate),
    }
    return StemTrack(f"synth{seed:04d}", stems, sample_rate)
