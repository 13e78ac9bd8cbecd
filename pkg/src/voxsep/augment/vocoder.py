"""Phase-vocoder time stretching, pitch shifting and formant shifting.

Stretch factors are speed ratios: the output lasts ``len(input) / factor``
samples, so 0.5 doubles the duration.
"""

from __future__ import annotations

import numpy as np

from .. import dsp
from ..data import AudioClip, resample_ratio
from ..errors import InvalidArgument
from .envelope import envelope_order, true_envelopes
from .pitch import PitchTrack, estimate_f0

VOICE_MIN_WINDOW = 256
VOICE_MAX_WINDOW = 2048
UNVOICED_WINDOW = 1024
MAX_GAIN_DB = 24.0
ENV_WINDOW = 1024
ENV_HOP = 256


def cents_ratio(cents) -> float:
    return float(2.0 ** (cents / 1200.0))


def stretched_length(n, factor) -> int:
    return int(np.floor(n / factor + 0.5))


def voice_window(f0, sample_rate) -> int:
    """Four local periods, snapped to the nearest power of two in [256, 2048]."""
    if f0 is None or f0 <= 0:
        return UNVOICED_WINDOW
    n = 4.0 * sample_rate / f0
    return int(np.clip(2 ** np.round(np.log2(n)), VOICE_MIN_WINDOW, VOICE_MAX_WINDOW))


def _princarg(p):
    return p - 2 * np.pi * np.round(p / (2 * np.pi))


# ---------------------------------------------------------------- analysis / synthesis

def _analyse(xp, offset, centers, windows, nfft):
    """Zero-phase windowed spectra of frames centred at ``centers`` (rfft, nfft)."""
    spectra = np.empty((len(centers), nfft // 2 + 1), dtype=complex)
    for N in np.unique(windows):
        rows = np.nonzero(windows == N)[0]
        w = dsp.hann(N)
        h = N // 2
        idx = offset + centers[rows, None] - h + np.arange(N)[None, :]
        seg = xp[idx] * w
        buf = np.zeros((len(rows), nfft))
        buf[:, :N - h] = seg[:, h:]
        buf[:, nfft - h:] = seg[:, :h]
        spectra[rows] = np.fft.rfft(buf, axis=1)
    return spectra


def _onsets(mags, windows, threshold=0.25, energy_gate=1e-6):
    """Frames where normalised positive spectral flux peaks above a median-based bar."""
    scale = np.array([dsp.hann(N).sum() for N in windows])
    m = mags / scale[:, None]
    rise = np.maximum(m[1:] - m[:-1], 0.0).sum(axis=1)
    total = m[1:].sum(axis=1)
    flux = np.zeros(len(m))
    energy = (m ** 2).sum(axis=1)
    live = energy[1:] > energy_gate * energy.max() if energy.max() > 0 else np.zeros(len(m) - 1, bool)
    flux[1:] = np.where(live & (total > 0), rise / np.where(total > 0, total, 1.0), 0.0)
    med = np.median(flux)
    mad = np.median(np.abs(flux - med))
    bar = max(threshold, med + 6.0 * mad)
    left = np.concatenate([[0.0], flux[:-1]])
    right = np.concatenate([flux[1:], [0.0]])
    return (flux > bar) & (flux >= left) & (flux > right)


def _propagate(spectra, dA, hop, nfft, resets):
    """Synthesis spectra with identity phase locking around spectral peaks."""
    mags = np.abs(spectra)
    phases = np.angle(spectra)
    omega = 2 * np.pi * np.arange(nfft // 2 + 1) / nfft
    out = np.empty_like(spectra)
    syn = phases[0].copy()
    out[0] = spectra[0]
    for m in range(1, len(spectra)):
        mag, ana = mags[m], phases[m]
        mid = mag[1:-1]
        peaks = np.nonzero((mid > mag[:-2]) & (mid >= mag[2:]) & (mid > 1e-6 * mag.max()))[0] + 1
        if resets[m] or len(peaks) == 0 or dA[m] <= 0:
            syn = ana.copy()
        else:
            dev = _princarg(ana[peaks] - phases[m - 1][peaks] - omega[peaks] * dA[m])
            inst = omega[peaks] + dev / dA[m]
            peak_syn = syn[peaks] + inst * hop
            bounds = (peaks[:-1] + peaks[1:]) / 2.0
            owner = np.searchsorted(bounds, np.arange(len(mag)))
            syn = peak_syn[owner] + ana - ana[peaks][owner]
        out[m] = mag * np.exp(1j * syn)
    return out


def _synthesise(spectra, centers, windows, nfft, out_len, offset):
    total = out_len + 2 * offset
    out = np.zeros(total)
    norm = np.zeros(total)
    frames = np.fft.irfft(spectra, nfft, axis=1)
    for m, (c, N) in enumerate(zip(centers, windows)):
        h = N // 2
        w = dsp.hann(N)
        seg = np.concatenate([frames[m, nfft - h:], frames[m, :N - h]]) * w
        s = offset + c - h
        out[s:s + N] += seg
        norm[s:s + N] += w * w
    out, norm = out[offset:offset + out_len], norm[offset:offset + out_len]
    guard = 1e-8 * max(norm.max(), 1e-30)
    return np.where(norm > guard, out / np.maximum(norm, guard), 0.0)


def _vocode(x, speed, out_len, window_for, hop, preserve_transients):
    """Resynthesise ``x`` with analysis time advancing ``speed`` times the synthesis time.

    ``window_for`` maps analysis centres (samples) to window lengths.
    """
    x = np.asarray(x, dtype=np.float64)
    M = int(np.ceil(out_len / hop)) + 1
    syn_centers = np.arange(M) * hop
    ana_centers = np.round(syn_centers * speed).astype(int)
    windows = np.asarray(window_for(ana_centers), dtype=int)
    nmax = int(windows.max())
    nfft = 1 << int(np.ceil(np.log2(nmax)))
    offset = nmax
    xp = np.pad(x, (offset, offset + max(0, int(ana_centers[-1]) - len(x))))
    spectra = _analyse(xp, offset, ana_centers, windows, nfft)
    dA = np.concatenate([[0], np.diff(ana_centers)])
    resets = _onsets(np.abs(spectra), windows) if preserve_transients else np.zeros(M, bool)
    resets[0] = True
    synth = _propagate(spectra, dA, hop, nfft, resets)
    return _synthesise(synth, syn_centers, windows, nfft, out_len, offset), resets


def _fixed(window):
    return lambda centers: np.full(len(centers), int(window))


def _voice_windows(pitch: PitchTrack, sample_rate, time_scale=1.0, freq_scale=1.0):
    """Per-frame voice windows from a pitch track seen through a resampling."""
    def window_for(centers):
        f0 = pitch.at(centers / sample_rate * time_scale) * freq_scale
        return np.array([voice_window(f, sample_rate) for f in f0])
    return window_for


# ---------------------------------------------------------------- envelope correction

def _frame_orders(f0, sample_rate):
    return np.array([envelope_order(f, sample_rate, ENV_WINDOW) for f in f0])


def _envelope_filter(y, sample_rate, source, source_f0, time_map, out_f0, formant_ratio=1.0):
    """Reshape the envelope of ``y`` frame by frame towards the (warped) envelope of ``source``.

    ``time_map`` converts output frame indices to source frame indices;
    ``source_f0``/``out_f0`` give the F0 of every source/output frame.
    """
    Ys = dsp.stft(AudioClip(y, sample_rate), ENV_WINDOW, ENV_HOP)
    Xs = dsp.stft(AudioClip(source, sample_rate), ENV_WINDOW, ENV_HOP)
    Ymag, Xmag = np.abs(Ys.bins), np.abs(Xs.bins)
    src_idx = np.clip(time_map(np.arange(Ys.num_frames)), 0, Xs.num_frames - 1)
    env_x = true_envelopes(Xmag, _frame_orders(source_f0, sample_rate))
    env_y = true_envelopes(Ymag, _frame_orders(out_f0, sample_rate))
    target = env_x[src_idx]
    if formant_ratio != 1.0:
        k = np.arange(target.shape[1], dtype=float)
        target = np.stack([np.interp(k / formant_ratio, k, row) for row in target])
    lim = MAX_GAIN_DB / (20.0 / np.log(10.0))
    gain = np.exp(np.clip(target - env_y, -lim, lim))
    ey = (Ymag ** 2).sum(axis=1)
    ex = (Xmag[src_idx] ** 2).sum(axis=1)
    quiet = (ey <= 1e-8 * max(ey.max(), 1e-30)) | (ex <= 1e-8 * max(ex.max(), 1e-30))
    gain[quiet] = 1.0
    shaped = dsp.Spectrogram(Ys.bins * gain, ENV_WINDOW, ENV_HOP, sample_rate, len(y))
    return dsp.istft(shaped, len(y)).samples


def _frame_f0(pitch: PitchTrack | None, frames, sample_rate, time_scale=1.0, freq_scale=1.0):
    if pitch is None:
        return np.zeros(len(frames))
    return pitch.at(np.asarray(frames) * ENV_HOP / sample_rate * time_scale) * freq_scale


# ---------------------------------------------------------------- public transforms

def _check_clip(clip):
    if len(clip) == 0:
        raise InvalidArgument("cannot transform an empty clip")


def time_stretch(clip: AudioClip, factor, preserve_transients=True, window=1024, pitch=None, hop=None) -> AudioClip:
    """Change duration by ``1 / factor`` keeping pitch.

    With a ``pitch`` track the window follows four local periods (voice
    mode) and the hop is a quarter of the smallest window; otherwise the
    window is fixed and the hop is a quarter of it.
    """
    if not factor > 0:
        raise InvalidArgument(f"stretch factor must be > 0, got {factor}")
    _check_clip(clip)
    sr = clip.sample_rate
    out_len = stretched_length(len(clip), factor)
    if pitch is not None:
        window_for, default_hop = _voice_windows(pitch, sr), VOICE_MIN_WINDOW // 4
    else:
        window_for, default_hop = _fixed(window), max(1, int(window) // 4)
    y, _ = _vocode(clip.samples, factor, out_len, window_for, hop or default_hop, preserve_transients)
    return AudioClip(y, sr)


def transform(clip: AudioClip, cents=0, factor=1.0, formant_cents=0, pitch: PitchTrack | None = None,
              preserve_envelope=False, preserve_transients=False, window=1024, voice_windows=False) -> AudioClip:
    """Combined pitch shift, time stretch and formant shift in one vocoder pass.

    The clip is resampled by the pitch ratio, stretched back to
    ``len / factor`` samples, and, when envelopes are involved, filtered so
    each frame carries the source envelope (warped by the formant ratio).
    """
    if not factor > 0:
        raise InvalidArgument(f"stretch factor must be > 0, got {factor}")
    if abs(cents) > 1200:
        raise InvalidArgument(f"pitch shift limited to +-1200 cents, got {cents}")
    if abs(formant_cents) > 600:
        raise InvalidArgument(f"formant shift limited to +-600 cents, got {formant_cents}")
    _check_clip(clip)
    sr = clip.sample_rate
    x = clip.samples
    n = len(x)
    r = cents_ratio(cents)
    rho = cents_ratio(formant_cents)
    out_len = stretched_length(n, factor)
    reshape = bool(formant_cents) or (preserve_envelope and bool(cents))
    if reshape and pitch is None:
        pitch = estimate_f0(clip)

    y = x
    if cents or factor != 1.0:
        resampled = resample_ratio(x, 1.0 / r, max(1, int(round(n / r)))) if cents else x
        if voice_windows and pitch is not None:
            # resampled time t corresponds to source time t * r; F0 is multiplied by r
            window_for, hop = _voice_windows(pitch, sr, time_scale=r, freq_scale=r), VOICE_MIN_WINDOW // 4
        else:
            window_for, hop = _fixed(window), max(1, int(window) // 4)
        speed = len(resampled) / out_len
        y, _ = _vocode(resampled, speed, out_len, window_for, hop, preserve_transients)

    if reshape:
        src_f0 = _frame_f0(pitch, np.arange(1 + n // ENV_HOP), sr)
        out_f0 = _frame_f0(pitch, np.arange(1 + out_len // ENV_HOP), sr, time_scale=factor, freq_scale=r)
        target_ratio = rho if preserve_envelope or not cents else rho * r
        y = _envelope_filter(y, sr, x, src_f0, lambda f: np.round(f * factor).astype(int), out_f0, target_ratio)
    return AudioClip(np.asarray(y, dtype=np.float64), sr)


def pitch_shift(clip: AudioClip, cents, preserve_envelope=False, pitch: PitchTrack | None = None,
                window=1024, preserve_transients=False) -> AudioClip:
    """Transpose by ``cents`` keeping duration; optionally keep the spectral envelope."""
    return transform(clip, cents=cents, pitch=pitch, preserve_envelope=preserve_envelope,
                     preserve_transients=preserve_transients, window=window,
                     voice_windows=pitch is not None)


def formant_shift(clip: AudioClip, cents, pitch: PitchTrack | None = None) -> AudioClip:
    """Scale envelope frequencies by ``2^(cents/1200)`` leaving F0 and duration alone."""
    if cents == 0:
        return AudioClip(clip.samples.copy(), clip.sample_rate)
    return transform(clip, formant_cents=cents, pitch=pitch, preserve_envelope=True)
