"""F0-adaptive spectral envelopes by iterative cepstral smoothing.

The envelope is grown from below: the log spectrum is repeatedly replaced by
its maximum with the current cepstrally smoothed curve until the smooth
curve rests on (or above) every spectral peak.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EnvelopeUndefined, InvalidArgument

NOMINAL_F0 = 200.0
MIN_ORDER = 10
FLOOR_DB = -120.0
_DB = 20.0 / np.log(10.0)


@dataclass
class SpectralEnvelope:
    log_magnitude: np.ndarray  # natural log of magnitude, one value per rfft bin
    order: int

    @property
    def db(self) -> np.ndarray:
        return self.log_magnitude * _DB

    @property
    def magnitude(self) -> np.ndarray:
        return np.exp(self.log_magnitude)


def envelope_order(f0, sample_rate, window_size) -> int:
    """Cepstral order for fundamental ``f0``: half a period in samples, clamped."""
    if f0 is None or f0 <= 0:
        f0 = NOMINAL_F0
    return int(np.clip(np.round(sample_rate / (2.0 * f0)), MIN_ORDER, window_size // 4))


def _log_floor(mag):
    """Natural-log magnitudes with silent bins lifted to FLOOR_DB under each row's peak."""
    mag = np.atleast_2d(np.asarray(mag, dtype=np.float64))
    peak = mag.max(axis=1, keepdims=True)
    floor = np.where(peak > 0, peak, 1.0) * 10 ** (FLOOR_DB / 20)
    return np.log(np.maximum(mag, floor))


def _lifter(log_mag, orders):
    """Keep cepstral coefficients 0..order (and their mirror) of every row."""
    nfft = 2 * (log_mag.shape[1] - 1)
    cep = np.fft.irfft(log_mag, nfft, axis=1)
    q = np.arange(nfft)
    q = np.minimum(q, nfft - q)
    cep[q[None, :] > orders[:, None]] = 0.0
    return np.fft.rfft(cep, nfft, axis=1).real


def _peak_fill(A0, span_db=60.0):
    """Lift each row to the linear interpolation of its spectral peaks.

    Starting the iteration from this curve instead of the raw spectrum keeps
    the deep valleys between harmonics from dragging the smooth fit into
    ringing at orders near the harmonic spacing.
    """
    A = A0.copy()
    k = np.arange(A0.shape[1])
    for r, a in enumerate(A0):
        mid = a[1:-1]
        pk = np.nonzero((mid > a[:-2]) & (mid >= a[2:]) & (mid > a.max() - span_db / _DB))[0] + 1
        if len(pk):
            A[r] = np.maximum(a, np.interp(k, pk, a[pk]))
    return A


def true_envelopes(mag, orders, tol_db=0.2, max_iter=200):
    """Envelopes (natural log) of every row of ``mag`` [frames, bins].

    ``orders`` is one cepstral order per row. Rows are iterated until no
    bin of the spectrum exceeds the envelope by more than ``tol_db``.
    """
    A0 = _log_floor(mag)
    orders = np.broadcast_to(np.asarray(orders, dtype=int), (A0.shape[0],))
    A = _peak_fill(A0)
    V = _lifter(A, orders)
    tol = tol_db / _DB
    active = np.ones(A.shape[0], dtype=bool)
    for _ in range(max_iter):
        active &= np.max(A0 - V, axis=1) > tol
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        A[idx] = np.maximum(A[idx], V[idx])
        V[idx] = _lifter(A[idx], orders[idx])
    return V


def spectral_envelope(frame_spectrum, f0=None, order=None, sample_rate=8192, window_size=1024) -> SpectralEnvelope:
    """Envelope of one magnitude spectrum (``window_size // 2 + 1`` bins)."""
    mag = np.abs(np.asarray(frame_spectrum, dtype=np.float64)).reshape(-1)
    if len(mag) < 3:
        raise InvalidArgument("spectrum needs at least 3 bins")
    if not np.any(mag):
        raise EnvelopeUndefined("all-zero frame has no envelope")
    if order is None:
        if f0 is None or f0 <= 0:
            raise InvalidArgument("need f0 > 0 or an explicit order")
        order = envelope_order(f0, sample_rate, window_size)
    order = int(order)
    return SpectralEnvelope(true_envelopes(mag[None], [order])[0], order)
