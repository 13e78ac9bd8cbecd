import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from voxsep.data import AudioClip, save_track, synth_track

settings.register_profile("voxsep", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("voxsep")

RATE = 8192


def tone(freq, seconds=1.0, rate=RATE, amp=0.5, phase=0.0):
    t = np.arange(int(round(seconds * rate))) / rate
    return AudioClip(amp * np.sin(2 * np.pi * freq * t + phase), rate)


def dominant_freq(x, rate=RATE):
    """Peak frequency with parabolic refinement on a Hann-windowed FFT."""
    w = np.hanning(len(x))
    nfft = 1 << int(np.ceil(np.log2(len(x) * 8)))
    mag = np.abs(np.fft.rfft(x * w, nfft))
    k = int(np.argmax(mag[1:-1])) + 1
    a, b, c = np.log(mag[k - 1:k + 2] + 1e-30)
    shift = 0.5 * (a - c) / (a - 2 * b + c)
    return (k + shift) * rate / nfft


@pytest.fixture(scope="session")
def short_track():
    return synth_track(7, 1.5)


@pytest.fixture
def corpus(tmp_path):
    root = tmp_path / "corpus"
    for s in range(3):
        save_track(root / f"song{s}", synth_track(s, 1.0))
    return root


# ---------------------------------------------------------------- acceptance summary

ACCEPTANCE = {}


def record(number, ok, detail):
    """Store one acceptance verdict; the lines are printed at the end of the run."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
