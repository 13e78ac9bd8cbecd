"""BSS-eval source separation metrics (SDR / SIR / SAR).

The estimate is split by least-squares projections onto time-delayed
copies (0..filter_len-1 taps) of the references. All decomposition
signals have ``N + filter_len - 1`` samples: the estimate is zero-padded
at the end so delayed references fit.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import EmptyEvaluation, InvalidArgument, UndefinedMetric

CAP_DB = 300.0
METRICS = ("sdr", "sir", "sar")


@dataclass
class Decomposition:
    s_target: np.ndarray
    e_interf: np.ndarray
    e_artif: np.ndarray


@dataclass
class SeparationScores:
    sdr: float
    sir: float
    sar: float
    track_id: str = ""
    capped: tuple = ()


@dataclass
class ScoreSummary:
    median: dict
    mad: dict
    n_tracks: int
    skipped: int = 0
    skipped_ids: list = field(default_factory=list)


def _gram_blocks(spectra, nfft, L):
    """Gram matrix of all delayed references, built from FFT cross-correlations."""
    n = len(spectra)
    G = np.empty((n * L, n * L))
    for i in range(n):
        for j in range(i, n):
            xc = np.fft.irfft(spectra[j] * np.conj(spectra[i]), nfft)
            # block[a, b] = xcorr_ji(a - b)
            col = xc[np.arange(L)]
            row = xc[-np.arange(L) % nfft]
            block = linalg.toeplitz(col, row)
            G[i * L:(i + 1) * L, j * L:(j + 1) * L] = block
            G[j * L:(j + 1) * L, i * L:(i + 1) * L] = block.T
    return G


def _ridge_solve(G, D, refine=3):
    """Solve ``G c = D`` with ridge 1e-10 * trace(G), then refine against the
    unregularised system so the ridge bias vanishes where G is well posed."""
    reg = G.copy()
    reg[np.diag_indices_from(reg)] += 1e-10 * np.trace(G)
    factor = linalg.cho_factor(reg)
    coef = linalg.cho_solve(factor, D)
    for _ in range(refine):
        coef = coef + linalg.cho_solve(factor, D - G @ coef)
    return coef


def _project(estimate, refs, L):
    """Least-squares projection of ``estimate`` on delayed copies of ``refs``."""
    N = refs.shape[1]
    total = N + L - 1
    nfft = 1 << int(math.ceil(math.log2(total)))
    spectra = [np.fft.rfft(r, nfft) for r in refs]
    E = np.fft.rfft(estimate, nfft)
    G = _gram_blocks(spectra, nfft, L)
    D = np.concatenate([np.fft.irfft(E * np.conj(S), nfft)[:L] for S in spectra])
    coef = _ridge_solve(G, D)
    acc = np.zeros(nfft // 2 + 1, dtype=complex)
    for i, S in enumerate(spectra):
        acc += np.fft.rfft(coef[i * L:(i + 1) * L], nfft) * S
    return np.fft.irfft(acc, nfft)[:total]


def decompose(estimate, references, target_index=0, filter_len=512) -> Decomposition:
    est = np.asarray(estimate, dtype=np.float64).reshape(-1)
    refs = np.atleast_2d(np.asarray(references, dtype=np.float64))
    if refs.shape[1] != len(est):
        raise InvalidArgument(f"estimate has {len(est)} samples, references {refs.shape[1]}")
    if len(est) < filter_len:
        raise InvalidArgument(f"signal length {len(est)} shorter than filter_len {filter_len}")
    if not np.any(refs[target_index]):
        raise UndefinedMetric("target reference is identically zero")
    # drop silent interferers; they span nothing and make the Gram singular
    keep = [i for i in range(len(refs)) if i == target_index or np.any(refs[i])]
    padded = np.pad(est, (0, filter_len - 1))
    s_target = _project(est, refs[[target_index]], filter_len)
    p_all = _project(est, refs[keep], filter_len)
    return Decomposition(s_target, p_all - s_target, padded - p_all)


def _ratio_db(num, den):
    if num == 0:
        return -math.inf
    if den == 0:
        return math.inf
    return 10.0 * math.log10(num / den)


def scores(d: Decomposition, track_id="") -> SeparationScores:
    target = float(np.sum(d.s_target ** 2))
    if target == 0:
        raise UndefinedMetric("projection on the target is zero")
    interf = float(np.sum(d.e_interf ** 2))
    artif = float(np.sum(d.e_artif ** 2))
    raw = {
        "sdr": _ratio_db(target, float(np.sum((d.e_interf + d.e_artif) ** 2))),
        "sir": _ratio_db(target, interf),
        "sar": _ratio_db(float(np.sum((d.s_target + d.e_interf) ** 2)), artif),
    }
    capped = tuple(k for k in METRICS if raw[k] >= CAP_DB)
    vals = {k: min(v, CAP_DB) for k, v in raw.items()}
    return SeparationScores(vals["sdr"], vals["sir"], vals["sar"], track_id, capped)


def bss_eval(estimate, references, target_index=0, filter_len=512, track_id="") -> SeparationScores:
    return scores(decompose(estimate, references, target_index, filter_len), track_id)


def voice_references(voice, mixture):
    """Two-source references for vocal evaluation: voice and mixture minus voice."""
    voice = np.asarray(voice, dtype=np.float64)
    return np.stack([voice, np.asarray(mixture, dtype=np.float64) - voice])


def median_mad(values):
    v = np.asarray(values, dtype=np.float64)
    med = float(np.median(v))
    return med, float(np.median(np.abs(v - med)))


def _score_one(args):
    track_id, estimate, refs, target_index, filter_len = args
    try:
        return bss_eval(estimate, refs, target_index, filter_len, track_id)
    except UndefinedMetric:
        return None


def evaluate_corpus(pairs, filter_len=512, jobs=1):
    """Score every ``(estimate, references, target_index[, track_id])`` entry.

    Returns ``(scores, summary)``; tracks with undefined metrics are left
    out of the summary and listed in ``summary.skipped_ids``.
    """
    work = []
    for k, p in enumerate(pairs):
        est, refs, target = p[:3]
        tid = p[3] if len(p) > 3 else f"track{k:03d}"
        work.append((tid, est, refs, target, filter_len))
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_score_one, work))
    else:
        results = [_score_one(w) for w in work]
    kept = [r for r in results if r is not None]
    skipped = [w[0] for w, r in zip(work, results) if r is None]
    if not kept:
        raise EmptyEvaluation("no track could be scored")
    med, mad = {}, {}
    for m in METRICS:
        med[m], mad[m] = median_mad([getattr(s, m) for s in kept])
    return kept, ScoreSummary(med, mad, len(kept), len(skipped), skipped)


# ---------------------------------------------------------------- files

def write_scores_csv(path, results, skipped_ids=()):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["track_id", "sdr", "sir", "sar", "skipped_flag"])
        for s in results:
            w.writerow([s.track_id, f"{s.sdr:.4f}", f"{s.sir:.4f}", f"{s.sar:.4f}", 0])
        for tid in skipped_ids:
            w.writerow([tid, "", "", "", 1])


def format_summary(summary: ScoreSummary, label="") -> str:
    lines = [f"label\t{label}", f"n_tracks\t{summary.n_tracks}", f"skipped\t{summary.skipped}",
             "metric\tmed\tMAD"]
    for m in ("sar", "sir", "sdr"):
        lines.append(f"{m.upper()}\t{summary.median[m]:.2f}\t{summary.mad[m]:.2f}")
    return "\n".join(lines) + "\n"


def write_summary(path, summary: ScoreSummary, label=""):
    with open(path, "w") as fh:
        fh.write(format_summary(summary, label))


def read_summary(path) -> dict:
    """Parse a summary file into ``{"label", "n_tracks", "skipped", "SAR": (med, mad), ...}``."""
    out = {}
    with open(path) as fh:
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if not parts or not parts[0] or parts[0] == "metric":
                continue
            key = parts[0]
            if key in ("SAR", "SIR", "SDR"):
                out[key] = tuple(None if p in ("", "nan") else float(p) for p in parts[1:3])
            elif key in ("n_tracks", "skipped"):
                out[key] = int(parts[1])
            else:
                out[key] = parts[1] if len(parts) > 1 else ""
    return out
