"""STFT analysis/synthesis, patching and mixture-phase reconstruction."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .data import AudioClip
from .errors import ConfigError, FormatError, InvalidArgument, ShapeError

WINDOW_SIZE = 1024
HOP = 256
PATCH_FRAMES = 128
MODEL_BINS = 512


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


@dataclass
class Spectrogram:
    bins: np.ndarray            # complex [num_frames, window_size // 2 + 1]
    window_size: int
    hop: int
    sample_rate: int
    length: int = 0             # samples of the analysed clip

    @property
    def num_frames(self) -> int:
        return self.bins.shape[0]

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.bins)

    @property
    def phase(self) -> np.ndarray:
        ph = np.angle(self.bins)
        # principal value in (-pi, pi]
        return np.where(ph <= -np.pi, ph + 2 * np.pi, ph)


@dataclass
class PatchSet:
    patches: list
    frame_offsets: list
    tail_frames: int


def window_square_sum(window_size: int, hop: int, num_frames: int) -> np.ndarray:
    """Overlap-added squared window over the center-padded signal."""
    w2 = hann(window_size) ** 2
    total = np.zeros(window_size + hop * (num_frames - 1))
    for t in range(num_frames):
        total[t * hop:t * hop + window_size] += w2
    return total


def check_overlap(window_size: int, hop: int):
    """Raise ConfigError unless windowed overlap-add can be inverted."""
    if not 0 < hop <= window_size:
        raise ConfigError(f"hop {hop} must lie in (0, {window_size}]")
    w2 = hann(window_size) ** 2
    acc = np.zeros(hop)
    for start in range(0, window_size, hop):
        seg = w2[start:start + hop]
        acc[:len(seg)] += seg
    if acc.min() < 1e-3 * acc.max():
        raise ConfigError(f"window {window_size} with hop {hop} leaves samples uncovered")


def stft(clip: AudioClip, window_size: int = WINDOW_SIZE, hop: int = HOP) -> Spectrogram:
    if len(clip) == 0:
        raise InvalidArgument("cannot analyse an empty clip")
    if not (window_size >= hop > 0):
        raise InvalidArgument(f"need window_size >= hop > 0, got {window_size}/{hop}")
    half = window_size // 2
    x = np.pad(clip.samples, (half, half))
    if len(x) < window_size:
        x = np.pad(x, (0, window_size - len(x)))
    n_frames = 1 + (len(x) - window_size) // hop
    frames = np.lib.stride_tricks.sliding_window_view(x, window_size)[::hop][:n_frames]
    bins = np.fft.rfft(frames * hann(window_size), axis=1)
    return Spectrogram(bins, window_size, hop, clip.sample_rate, len(clip))


def istft(spec: Spectrogram, length: int | None = None) -> AudioClip:
    n, hop = spec.window_size, spec.hop
    check_overlap(n, hop)
    if length is None:
        length = spec.length or (spec.num_frames - 1) * hop
    win = hann(n)
    frames = np.fft.irfft(spec.bins, n=n, axis=1) * win
    total = n + hop * (spec.num_frames - 1)
    out = np.zeros(total)
    for t in range(spec.num_frames):
        out[t * hop:t * hop + n] += frames[t]
    norm = window_square_sum(n, hop, spec.num_frames)
    out = np.divide(out, norm, out=np.zeros_like(out), where=norm > 1e-10)
    half = n // 2
    y = out[half:half + length]
    if len(y) < length:
        y = np.pad(y, (0, length - len(y)))
    return AudioClip(y, spec.sample_rate)


def restore_bins(mag: np.ndarray, num_bins: int) -> np.ndarray:
    """Zero-fill the bins dropped for the model-facing view."""
    if mag.shape[1] > num_bins:
        raise ShapeError(f"{mag.shape[1]} bins exceed the analysis size {num_bins}")
    return np.pad(mag, ((0, 0), (0, num_bins - mag.shape[1])))


def reconstruct_with_mixture_phase(mag_estimate: np.ndarray, mixture: Spectrogram) -> AudioClip:
    mag = np.asarray(mag_estimate, dtype=np.float64)
    if mag.ndim == 2 and mag.shape[0] == mixture.num_frames and mag.shape[1] < mixture.bins.shape[1]:
        mag = restore_bins(mag, mixture.bins.shape[1])
    if mag.shape != mixture.bins.shape:
        raise ShapeError(f"estimate {mag.shape} does not match mixture {mixture.bins.shape}")
    est = Spectrogram(mag * np.exp(1j * np.angle(mixture.bins)), mixture.window_size,
                      mixture.hop, mixture.sample_rate, mixture.length)
    return istft(est)


def extract_patches(spec, patch_frames: int = PATCH_FRAMES, num_bins: int | None = MODEL_BINS) -> PatchSet:
    """Cut non-overlapping ``patch_frames``-long magnitude patches.

    ``spec`` may be a Spectrogram (magnitudes are taken, bins cropped to
    ``num_bins``) or a real matrix [frames, bins] used as is.
    """
    mag = spec.magnitude if isinstance(spec, Spectrogram) else np.asarray(spec)
    if isinstance(spec, Spectrogram) and num_bins is not None:
        mag = mag[:, :num_bins]
    if mag.shape[0] < 1:
        raise InvalidArgument("spectrogram has no frames")
    count = mag.shape[0] // patch_frames
    patches = [mag[i * patch_frames:(i + 1) * patch_frames] for i in range(count)]
    return PatchSet(patches, [i * patch_frames for i in range(count)], mag.shape[0] % patch_frames)


def padded_patches(mag: np.ndarray, patch_frames: int = PATCH_FRAMES) -> np.ndarray:
    """All patches covering ``mag``; the partial tail is zero-padded. [P, patch_frames, bins]"""
    n = mag.shape[0]
    count = -(-n // patch_frames)
    padded = np.pad(mag, ((0, count * patch_frames - n), (0, 0)))
    return padded.reshape(count, patch_frames, mag.shape[1])


def concat_patches(patches, original_frames: int) -> np.ndarray:
    if isinstance(patches, PatchSet):
        patches = patches.patches
    patches = [np.asarray(p) for p in patches]
    if not patches:
        raise ShapeError("no patches to concatenate")
    bins = {p.shape[1:] for p in patches}
    if len(bins) != 1 or any(p.ndim != 2 for p in patches):
        raise ShapeError("patches have inconsistent shapes")
    out = np.concatenate(patches, axis=0)
    if out.shape[0] < original_frames:
        raise ShapeError(f"patches cover {out.shape[0]} frames, need {original_frames}")
    return out[:original_frames]


# ---------------------------------------------------------------- debug dump

_SPEC_MAGIC = b"VXSG"


def dump_spectrogram(path, spec: Spectrogram):
    """Little-endian dump: magic, frames, bins, hop, window, rate, length, then
    row-major float-32 (real, imag) pairs."""
    frames, nbins = spec.bins.shape
    data = np.empty((frames, nbins, 2), dtype="<f4")
    data[..., 0] = spec.bins.real
    data[..., 1] = spec.bins.imag
    with open(path, "wb") as fh:
        fh.write(_SPEC_MAGIC)
        fh.write(struct.pack("<6I", frames, nbins, spec.hop, spec.window_size, spec.sample_rate, spec.length))
        fh.write(data.tobytes())


def load_spectrogram(path) -> Spectrogram:
    with open(path, "rb") as fh:
        if fh.read(4) != _SPEC_MAGIC:
            raise FormatError(f"{path}: not a spectrogram dump")
        frames, nbins, hop, window, rate, length = struct.unpack("<6I", fh.read(24))
        data = np.frombuffer(fh.read(), dtype="<f4").reshape(frames, nbins, 2)
    return Spectrogram(data[..., 0] + 1j * data[..., 1], window, hop, rate, length)
