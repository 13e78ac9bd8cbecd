import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from voxsep import bss_eval as B
from voxsep.errors import EmptyEvaluation, InvalidArgument, UndefinedMetric


def delayed_matrix(refs, L):
    """Columns are every reference delayed by 0..L-1 samples, length N + L - 1."""
    n = refs.shape[1]
    cols = []
    for r in refs:
        for k in range(L):
            c = np.zeros(n + L - 1)
            c[k:k + n] = r
            cols.append(c)
    return np.array(cols).T


def brute_decompose(est, refs, target, L):
    padded = np.pad(est, (0, L - 1))

    def proj(R):
        A = delayed_matrix(R, L)
        coef = np.linalg.solve(A.T @ A, A.T @ padded)
        return A @ coef

    s = proj(refs[[target]])
    p = proj(refs)
    return s, p - s, padded - p


def rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def unit(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e


# ---------------------------------------------------------------- decomposition

def test_orthogonal_hand_case():
    e1, e2 = unit(8, 0), unit(8, 1)
    d = B.decompose(e1 + e2, np.stack([e1, e2]), 0, filter_len=1)
    assert np.allclose(d.s_target, e1, atol=1e-12)
    assert np.allclose(d.e_interf, e2, atol=1e-12)
    assert np.allclose(d.e_artif, 0, atol=1e-12)
    s = B.scores(d)
    assert abs(s.sdr - 0.0) < 1e-6 and abs(s.sir - 0.0) < 1e-6
    assert s.sar == B.CAP_DB and "sar" in s.capped


def test_half_artifact_hand_case():
    e1, e2, w = unit(8, 0), unit(8, 1), unit(8, 5)
    s = B.bss_eval(e1 + 0.5 * w, np.stack([e1, e2]), 0, filter_len=1)
    assert abs(s.sar - 10 * math.log10(1 / 0.25)) < 1e-6
    assert abs(s.sar - 6.0206) < 1e-4
    assert abs(s.sdr - 6.0206) < 1e-4
    assert s.sir == B.CAP_DB


def test_perfect_estimate_capped():
    rng = np.random.default_rng(0)
    refs = rng.standard_normal((2, 300))
    d = B.decompose(refs[0], refs, 0, filter_len=8)
    assert rms(d.e_interf) < 1e-10 and rms(d.e_artif) < 1e-10
    s = B.scores(d)
    assert (s.sdr, s.sir, s.sar) == (B.CAP_DB,) * 3


def test_artifact_is_orthogonal_component():
    rng = np.random.default_rng(1)
    refs = rng.standard_normal((2, 64))
    w = rng.standard_normal(64)
    d = B.decompose(refs[0] + w, refs, 0, filter_len=1)
    # brute force: w minus its projection on both references
    A = refs.T
    w_perp = w - A @ np.linalg.lstsq(A, w, rcond=None)[0]
    assert rms(d.e_artif - w_perp) < 1e-10


@given(st.integers(0, 10 ** 6), st.integers(1, 3), st.integers(1, 4), st.integers(16, 64))
def test_matches_brute_force(seed, n_src, L, n):
    rng = np.random.default_rng(seed)
    refs = rng.standard_normal((n_src, n))
    est = rng.standard_normal(n) + refs[0]
    t = int(rng.integers(0, n_src))
    d = B.decompose(est, refs, t, L)
    s, i, a = brute_decompose(est, refs, t, L)
    assert rms(d.s_target - s) < 1e-8
    assert rms(d.e_interf - i) < 1e-8
    assert rms(d.e_artif - a) < 1e-8


@given(st.integers(0, 10 ** 6), st.floats(0.01, 100.0))
def test_scale_invariance(seed, a):
    rng = np.random.default_rng(seed)
    refs = rng.standard_normal((2, 200))
    est = refs[0] + 0.4 * refs[1] + 0.3 * rng.standard_normal(200)
    s1 = B.bss_eval(est, refs, 0, 16)
    s2 = B.bss_eval(a * est, refs, 0, 16)
    for m in B.METRICS:
        assert abs(getattr(s1, m) - getattr(s2, m)) < 1e-9


@given(st.integers(0, 10 ** 6))
def test_additivity(seed):
    rng = np.random.default_rng(seed)
    refs = rng.standard_normal((2, 150))
    est = rng.standard_normal(150)
    d = B.decompose(est, refs, 1, 10)
    assert rms(d.s_target + d.e_interf + d.e_artif - np.pad(est, (0, 9))) < 1e-10


def test_more_noise_lowers_sdr_and_sar():
    rng = np.random.default_rng(3)
    refs = rng.standard_normal((2, 400))
    noise = rng.standard_normal(400)
    prev = None
    for g in (0.01, 0.05, 0.2, 1.0):
        s = B.bss_eval(refs[0] + g * noise, refs, 0, 4)
        if prev is not None:
            assert s.sdr < prev.sdr and s.sar < prev.sar
        prev = s


def test_silent_interferer_is_ignored():
    rng = np.random.default_rng(4)
    refs = np.stack([rng.standard_normal(100), np.zeros(100)])
    s = B.bss_eval(refs[0] + 0.1 * rng.standard_normal(100), refs, 0, 4)
    assert np.isfinite(s.sdr)


def test_decompose_errors():
    with pytest.raises(UndefinedMetric):
        B.decompose(np.ones(10), np.zeros((2, 10)), 0, 2)
    with pytest.raises(InvalidArgument):
        B.decompose(np.ones(10), np.ones((2, 11)), 0, 2)
    with pytest.raises(InvalidArgument):
        B.decompose(np.ones(10), np.ones((1, 10)), 0, 20)


def test_zero_estimate_undefined():
    with pytest.raises(UndefinedMetric):
        B.bss_eval(np.zeros(50), np.random.default_rng(0).standard_normal((2, 50)), 0, 4)


def test_voice_references():
    refs = B.voice_references([1.0, 2.0], [3.0, 3.0])
    assert np.array_equal(refs, [[1, 2], [2, 1]])


# ---------------------------------------------------------------- statistics and corpus

def test_median_mad_examples():
    assert B.median_mad([1, 2, 3, 4, 100]) == (3.0, 1.0)
    assert B.median_mad([7.5]) == (7.5, 0.0)
    assert B.median_mad([1, 3])[0] == 2.0


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30))
def test_mad_non_negative(values):
    med, mad = B.median_mad(values)
    assert mad >= 0
    assert min(values) <= med <= max(values)


def _pairs(k, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(k):
        refs = rng.standard_normal((2, 200))
        out.append((refs[0] + 0.3 * rng.standard_normal(200), refs, 0, f"t{i}"))
    return out


def test_corpus_skips_undefined():
    pairs = _pairs(3)
    pairs.append((np.zeros(200), pairs[0][1], 0, "silent"))
    results, summary = B.evaluate_corpus(pairs, filter_len=8)
    assert [r.track_id for r in results] == ["t0", "t1", "t2"]
    assert summary.n_tracks == 3 and summary.skipped == 1 and summary.skipped_ids == ["silent"]
    assert summary.median["sdr"] == pytest.approx(np.median([r.sdr for r in results]))


def test_corpus_all_skipped():
    refs = np.random.default_rng(0).standard_normal((2, 50))
    with pytest.raises(EmptyEvaluation):
        B.evaluate_corpus([(np.zeros(50), refs, 0)], filter_len=4)


def test_corpus_parallel_same_order():
    pairs = _pairs(5, seed=2)
    a, sa = B.evaluate_corpus(pairs, 8, jobs=1)
    b, sb = B.evaluate_corpus(pairs, 8, jobs=3)
    assert [(r.track_id, r.sdr) for r in a] == [(r.track_id, r.sdr) for r in b]
    assert sa.median == sb.median


def test_summary_and_scores_files(tmp_path):
    results, summary = B.evaluate_corpus(_pairs(3), filter_len=8)
    B.write_summary(tmp_path / "summary.txt", summary, label="U DA-F")
    back = B.read_summary(tmp_path / "summary.txt")
    assert back["label"] == "U DA-F" and back["n_tracks"] == 3 and back["skipped"] == 0
    for m in ("SAR", "SIR", "SDR"):
        assert back[m] == pytest.approx((summary.median[m.lower()], summary.mad[m.lower()]), abs=0.005)
    B.write_scores_csv(tmp_path / "scores.csv", results, ["bad"])
    lines = (tmp_path / "scores.csv").read_text().splitlines()
    assert lines[0] == "track_id,sdr,sir,sar,skipped_flag"
    assert lines[-1] == "bad,,,,1"
    assert len(lines) == 5
