"""Per-stem transformation policy and variant-grid generation."""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from ..data import ROLES, AudioClip, StemTrack
from ..errors import InvalidArgument
from .pitch import PitchTrack, estimate_f0
from .vocoder import stretched_length, time_stretch, transform

PAPER_PITCH = (-300, -200, -100, 0, 100, 200, 300)
PAPER_STRETCH = (0.5, 0.93, 1.0, 1.07, 1.15)
PAPER_FORMANT = (-150, -100, 0, 100, 150)
PAPER_GRID = (PAPER_PITCH, PAPER_STRETCH, PAPER_FORMANT)

DRUM_WINDOW_SECONDS = 0.05
DEFAULT_WINDOW = 1024


@dataclass(frozen=True)
class AugmentationSpec:
    pitch_cents: int = 0
    stretch_factor: float = 1.0
    formant_cents: int = 0

    @property
    def is_identity(self) -> bool:
        return self.pitch_cents == 0 and self.stretch_factor == 1.0 and self.formant_cents == 0

    def tag(self) -> str:
        return f"p{self.pitch_cents}_s{self.stretch_factor:g}_f{self.formant_cents}"


def variant_id(source_id: str, spec: AugmentationSpec) -> str:
    return f"{source_id}__{spec.tag()}"


def drum_window(sample_rate) -> int:
    n = int(round(DRUM_WINDOW_SECONDS * sample_rate))
    return n + (n % 2)


def _copy(stem: AudioClip) -> AudioClip:
    return AudioClip(stem.samples.copy(), stem.sample_rate)


def transform_stem(stem: AudioClip, role: str, spec: AugmentationSpec, pitch: PitchTrack | None = None) -> AudioClip:
    """Apply ``spec`` to one stem following the role policy.

    voice: pitch shift with envelope preservation, formant shift and
    stretch, window of four local periods. drums: stretch only, 50 ms
    window, transients kept. bass/accompaniment: plain transposition and
    stretch, transients kept; their formant component is ignored.
    """
    if role not in ROLES:
        raise InvalidArgument(f"unknown stem role '{role}'")
    factor = spec.stretch_factor
    if role == "voice":
        if spec.is_identity:
            return _copy(stem)
        if pitch is None:
            pitch = estimate_f0(stem)
        return transform(stem, spec.pitch_cents, factor, spec.formant_cents, pitch,
                         preserve_envelope=True, voice_windows=True)
    if role == "drums":
        if factor == 1.0:
            return _copy(stem)
        return time_stretch(stem, factor, preserve_transients=True, window=drum_window(stem.sample_rate))
    if spec.pitch_cents == 0 and factor == 1.0:
        return _copy(stem)
    return transform(stem, spec.pitch_cents, factor, preserve_transients=True, window=DEFAULT_WINDOW)


def _fit(clip: AudioClip, n: int) -> AudioClip:
    x = clip.samples
    x = x[:n] if len(x) >= n else np.pad(x, (0, n - len(x)))
    return AudioClip(x, clip.sample_rate)


def transform_track(track: StemTrack, spec: AugmentationSpec, pitch: PitchTrack | None = None) -> StemTrack:
    """One variant of a whole track; all stems end with identical length."""
    vid = variant_id(track.id, spec)
    if spec.is_identity:
        return StemTrack(vid, {r: _copy(c) for r, c in track.stems.items()}, track.sample_rate)
    n = stretched_length(len(track), spec.stretch_factor)
    stems = {r: _fit(transform_stem(track.stems[r], r, spec, pitch if r == "voice" else None), n) for r in ROLES}
    return StemTrack(vid, stems, track.sample_rate)


def grid_specs(grid=PAPER_GRID) -> list:
    pitches, stretches, formants = grid
    if not (len(pitches) and len(stretches) and len(formants)):
        raise InvalidArgument("every grid axis needs at least one value")
    return [AugmentationSpec(int(p), float(s), int(f))
            for p, s, f in itertools.product(pitches, stretches, formants)]


def _variant(spec, track, pitch):
    return spec, transform_track(track, spec, pitch)


def generate_variants(track: StemTrack, grid=PAPER_GRID, jobs=1, specs=None):
    """Yield ``(spec, variant)`` for the grid's Cartesian product in (pitch, stretch, formant) order.

    The voice F0 track is estimated once and shared by all variants.
    ``specs`` restricts generation to a subset (used when resuming).
    """
    specs = grid_specs(grid) if specs is None else list(specs)
    needs_pitch = any(not s.is_identity for s in specs)
    pitch = estimate_f0(track.stems["voice"]) if needs_pitch else None
    work = partial(_variant, track=track, pitch=pitch)
    if jobs > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            yield from pool.map(work, specs)
    else:
        for spec in specs:
            yield work(spec)


def parse_axis(text: str, kind=float) -> tuple:
    """Parse a comma separated list of grid values."""
    try:
        vals = tuple(kind(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise InvalidArgument(f"bad grid values '{text}'") from exc
    if not vals:
        raise InvalidArgument("empty grid axis")
    return vals
