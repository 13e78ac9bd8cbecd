"""Frame-wise F0 tracking with a cumulative-mean-normalised difference function."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import AudioClip

F0_MIN = 50.0
F0_MAX = 1000.0


@dataclass
class PitchTrack:
    times: np.ndarray
    f0: np.ndarray
    voicing: np.ndarray

    def at(self, seconds) -> np.ndarray:
        """F0 of the nearest frame for every time in ``seconds`` (0 = unvoiced)."""
        if len(self.times) == 0:
            return np.zeros(np.shape(seconds))
        step = self.times[1] - self.times[0] if len(self.times) > 1 else 1.0
        idx = np.clip(np.round((np.asarray(seconds) - self.times[0]) / step).astype(int), 0, len(self.times) - 1)
        return self.f0[idx]

    def scaled(self, time_factor=1.0, freq_factor=1.0) -> "PitchTrack":
        return PitchTrack(self.times * time_factor, self.f0 * freq_factor, self.voicing.copy())

    def voiced_median(self) -> float:
        v = self.f0[self.voicing]
        return float(np.median(v)) if len(v) else 0.0


def estimate_f0(clip: AudioClip, fmin=F0_MIN, fmax=F0_MAX, hop=128, threshold=0.15,
                silence_db=-50.0) -> PitchTrack:
    sr = clip.sample_rate
    # one lag of slack on each side so tones right at the range edges are found
    tau_min = max(2, int(np.floor(sr / fmax)) - 1)
    tau_max = int(np.ceil(sr / fmin)) + 1
    W = max(tau_max, 256)
    x = clip.samples
    n_frames = max(1, int(np.ceil(len(x) / hop)))
    pad_lo = W // 2
    xp = np.pad(x, (pad_lo, W + tau_max + hop))
    frames = np.lib.stride_tricks.sliding_window_view(xp, W + tau_max + 1)[::hop][:n_frames]

    # d(tau) = sum_j (x_j - x_{j+tau})^2 over the integration window of W samples
    nfft = 1 << int(np.ceil(np.log2(2 * (W + tau_max + 1))))
    head = np.zeros_like(frames)
    head[:, :W] = frames[:, :W]
    corr = np.fft.irfft(np.fft.rfft(frames, nfft) * np.conj(np.fft.rfft(head, nfft)), nfft)[:, :tau_max + 1]
    sq = np.cumsum(np.pad(frames ** 2, ((0, 0), (1, 0))), axis=1)
    e0 = sq[:, W]
    taus = np.arange(tau_max + 1)
    etau = sq[:, taus + W] - sq[:, taus]
    d = np.maximum(e0[:, None] + etau - 2 * corr, 0.0)
    cum = np.cumsum(d[:, 1:], axis=1)
    cmnd = np.ones_like(d)
    cmnd[:, 1:] = d[:, 1:] * taus[1:] / np.where(cum > 0, cum, 1.0)

    peak = np.max(np.abs(x)) if len(x) else 0.0
    floor = (peak * 10 ** (silence_db / 20)) ** 2 * W
    f0 = np.zeros(n_frames)
    for t in range(n_frames):
        if e0[t] <= floor or e0[t] == 0:
            continue
        row = cmnd[t]
        below = np.nonzero(row[tau_min:tau_max] < threshold)[0]
        if len(below) == 0:
            continue
        tau = tau_min + below[0]
        while tau + 1 < tau_max and row[tau + 1] < row[tau]:
            tau += 1
        # refine on the raw difference; the normalised curve is skewed at short lags
        a, b, c = d[t, tau - 1], d[t, tau], d[t, tau + 1]
        den = a - 2 * b + c
        shift = 0.5 * (a - c) / den if den > 0 else 0.0
        freq = sr / (tau + np.clip(shift, -0.5, 0.5))
        if fmin * 0.99 <= freq <= fmax * 1.01:
            f0[t] = min(max(freq, fmin), fmax)
    times = np.arange(n_frames) * hop / sr
    return PitchTrack(times, f0, f0 > 0)
