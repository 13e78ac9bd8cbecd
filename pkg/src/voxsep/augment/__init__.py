"""Signal-processing data augmentation for multi-stem tracks."""

from .envelope import SpectralEnvelope, envelope_order, spectral_envelope, true_envelopes
from .pitch import PitchTrack, estimate_f0
from .policy import (PAPER_FORMANT, PAPER_GRID, PAPER_PITCH, PAPER_STRETCH, AugmentationSpec,
                     generate_variants, grid_specs, transform_stem, transform_track, variant_id)
from .vocoder import cents_ratio, formant_shift, pitch_shift, stretched_length, time_stretch, transform, voice_window

__all__ = [
    "SpectralEnvelope", "envelope_order", "spectral_envelope", "true_envelopes",
    "PitchTrack", "estimate_f0",
    "PAPER_FORMANT", "PAPER_GRID", "PAPER_PITCH", "PAPER_STRETCH", "AugmentationSpec",
    "generate_variants", "grid_specs", "transform_stem", "transform_track", "variant_id",
    "cents_ratio", "formant_shift", "pitch_shift", "stretched_length", "time_stretch", "transform",
    "voice_window",
]
