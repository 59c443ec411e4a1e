import os
import sys
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from dsm import datasets  # noqa: E402
from dsm.audio import AudioSignal  # noqa: E402
from dsm.config import FewFramesWarning, RunConfig  # noqa: E402
from dsm.vocoder import train_model  # noqa: E402

FS = 16000


def sine(freq, duration=1.0, fs=FS, amp=0.5):
    t = np.arange(int(round(duration * fs))) / fs
    return AudioSignal(amp * np.sin(2 * np.pi * freq * t), fs)


@pytest.fixture(scope="session")
def band_limited_speaker():
    """Synthetic speaker whose pulse stops short of fm, at the normalization pitch."""
    return datasets.make_speaker(0, f0_mean=100.0, edge_margin=0.85)


@pytest.fixture(scope="session")
def trained(band_limited_speaker):
    corpus = band_limited_speaker.corpus(12.0, seed=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FewFramesWarning)
        model, report = train_model(corpus, RunConfig())
    return model, report


@pytest.fixture(scope="session")
def vowel():
    return datasets.sustained_vowel(5.0, f0=100.0)


@pytest.fixture(scope="session")
def id_signatures():
    """Train and test signatures of ten synthetic speakers from disjoint
    16 s corpora, plus the speakers themselves."""
    from dsm.speakerid import extract_signature

    cfg = RunConfig()
    speakers = [datasets.make_speaker(k) for k in range(10)]
    train = [extract_signature(s.corpus(16.0, seed=1), cfg, s.name) for s in speakers]
    test = [extract_signature(s.corpus(16.0, seed=2), cfg, s.name) for s in speakers]
    return speakers, train, test


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
