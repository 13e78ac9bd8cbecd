import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.io import wavfile

from voxsep import data
from voxsep.data import AudioClip, DatasetSplit, StemTrack
from voxsep.errors import FormatError, InvalidArgument, MissingStem

from conftest import RATE, dominant_freq, tone


def test_clip_rejects_non_finite_samples():
    with pytest.raises(InvalidArgument):
        AudioClip(np.array([0.0, np.nan]), RATE)
    with pytest.raises(InvalidArgument):
        AudioClip(np.array([np.inf]), RATE)


def test_clip_rejects_bad_rate():
    with pytest.raises(InvalidArgument):
        AudioClip(np.zeros(4), 0)
    with pytest.raises(InvalidArgument):
        AudioClip(np.zeros(4), 44100.5)


def test_duration():
    assert AudioClip(np.zeros(4096), RATE).duration_seconds == 0.5


def test_track_needs_all_roles():
    stems = {r: AudioClip(np.zeros(8), RATE) for r in ("voice", "drums", "bass")}
    with pytest.raises(MissingStem) as err:
        StemTrack("x", stems, RATE)
    assert err.value.role == "accompaniment"


def test_track_needs_equal_lengths():
    stems = {r: AudioClip(np.zeros(8), RATE) for r in data.ROLES}
    stems["bass"] = AudioClip(np.zeros(9), RATE)
    with pytest.raises(FormatError):
        StemTrack("x", stems, RATE)


def test_split_must_be_disjoint():
    with pytest.raises(InvalidArgument):
        DatasetSplit(["a", "b"], ["b"], [])


def test_mix_is_sum_of_stems(short_track):
    expected = sum(short_track.stems[r].samples for r in data.ROLES)
    assert np.array_equal(data.mix(short_track).samples, expected)


def test_wav_round_trip(tmp_path):
    clip = tone(300.0, 0.25)
    data.write_wav(tmp_path / "a.wav", clip)
    back = data.read_wav(tmp_path / "a.wav")
    assert back.sample_rate == RATE
    # float-32 storage
    assert np.max(np.abs(back.samples - clip.samples)) < 1e-7


def test_read_int16_wav_scaled(tmp_path):
    wavfile.write(tmp_path / "i.wav", RATE, np.array([16384, -32768], dtype=np.int16))
    assert np.allclose(data.read_wav(tmp_path / "i.wav").samples, [0.5, -1.0])


def test_read_stereo_rejected(tmp_path):
    wavfile.write(tmp_path / "s.wav", RATE, np.zeros((10, 2), dtype=np.float32))
    with pytest.raises(FormatError):
        data.read_wav(tmp_path / "s.wav")


def test_read_garbage_rejected(tmp_path):
    (tmp_path / "g.wav").write_bytes(b"not a wav file at all")
    with pytest.raises(FormatError):
        data.read_wav(tmp_path / "g.wav")


def test_track_dir_round_trip(tmp_path, short_track):
    data.save_track(tmp_path / "t1", short_track)
    back = data.load_track(tmp_path / "t1")
    assert back.id == "t1"
    for r in data.ROLES:
        assert np.max(np.abs(back.stems[r].samples - short_track.stems[r].samples)) < 1e-6
    assert data.list_tracks(tmp_path) == ["t1"]


def test_load_track_missing_stem(tmp_path, short_track):
    data.save_track(tmp_path / "t", short_track)
    (tmp_path / "t" / "bass.wav").unlink()
    with pytest.raises(MissingStem):
        data.load_track(tmp_path / "t")


def test_load_track_pads_short_stem(tmp_path):
    for name, n in (("vocals", 10), ("drums", 12), ("bass", 12), ("other", 11)):
        wavfile.write(tmp_path / f"{name}.wav", RATE, np.ones(n, dtype=np.float32))
    tr = data.load_track(tmp_path)
    assert len(tr) == 12
    assert tr.stems["voice"].samples[-1] == 0.0


def test_resample_identity_is_copy():
    clip = tone(100.0, 0.1)
    out = data.resample(clip, RATE)
    assert np.array_equal(out.samples, clip.samples)
    assert out.samples is not clip.samples


def test_resample_length_and_tone():
    clip = tone(440.0, 1.0, rate=44100)
    out = data.resample(clip, RATE)
    assert len(out) == RATE
    assert abs(dominant_freq(out.samples) - 440.0) < 0.5


def test_resample_round_trip_band_limited():
    # content far below both Nyquist limits survives down and back up
    rng = np.random.default_rng(0)
    t = np.arange(RATE * 2) / RATE
    x = sum(rng.uniform(0.1, 0.3) * np.sin(2 * np.pi * f * t + rng.uniform(0, 6)) for f in (110, 470, 1300))
    clip = AudioClip(x, RATE)
    back = data.resample(data.resample(clip, 6000), RATE)
    core = slice(RATE // 4, -RATE // 4)
    err = np.sqrt(np.mean((back.samples[core] - x[core]) ** 2) / np.mean(x[core] ** 2))
    assert 20 * np.log10(err) < -40


def test_resample_rejects_bad_rate():
    with pytest.raises(InvalidArgument):
        data.resample(tone(100.0, 0.1), 0)


@given(st.integers(min_value=1, max_value=60), st.floats(0.0, 0.9), st.integers(0, 10 ** 6))
def test_split_partitions_ids(n, frac, seed):
    ids = [f"t{i:02d}" for i in range(n)]
    sp = data.split_dataset(ids, frac, seed)
    assert sorted(sp.train + sp.valid) == ids
    assert len(sp.valid) == int(np.floor(frac * n + 0.5))
    assert sp.train == sorted(sp.train) and sp.valid == sorted(sp.valid)
    assert data.split_dataset(ids, frac, seed) == sp


def test_split_rejects_bad_fraction():
    with pytest.raises(InvalidArgument):
        data.split_dataset(["a"], 1.0, 0)
    with pytest.raises(InvalidArgument):
        data.split_dataset([], 0.2, 0)


def test_split_file_round_trip(tmp_path):
    sp = DatasetSplit(["a", "b"], ["c"], ["d"])
    data.write_split(tmp_path / "s.txt", sp)
    assert data.read_split(tmp_path / "s.txt") == sp


def test_split_file_unknown_section(tmp_path):
    (tmp_path / "s.txt").write_text("[train]\na\n[holdout]\nb\n")
    with pytest.raises(FormatError):
        data.read_split(tmp_path / "s.txt")


def test_synth_track_deterministic():
    a, b = data.synth_track(3, 0.5), data.synth_track(3, 0.5)
    for r in data.ROLES:
        assert np.array_equal(a.stems[r].samples, b.stems[r].samples)
    c = data.synth_track(4, 0.5)
    assert not np.array_equal(a.stems["voice"].samples, c.stems["voice"].samples)


def test_synth_disjoint_bands():
    tr = data.synth_track(1, 2.0, disjoint=True)
    f = np.fft.rfftfreq(len(tr), 1 / RATE)
    voice = np.abs(np.fft.rfft(tr.stems["voice"].samples)) ** 2
    rest = sum(np.abs(np.fft.rfft(tr.stems[r].samples)) ** 2 for r in ("drums", "bass", "accompaniment"))
    # less than 1% of each side's energy crosses the 1.25 kHz split
    assert voice[f < 1250].sum() < 0.01 * voice.sum()
    assert rest[f >= 1250].sum() < 0.01 * rest.sum()


def test_synth_rejects_bad_duration():
    with pytest.raises(InvalidArgument):
        data.synth_track(0, 0.0)
