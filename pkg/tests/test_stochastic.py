import numpy as np
import pytest
from scipy import signal as sps

import oracles
from conftest import FS
from dsm import stochastic as sto
from dsm.audio import DataError

FM = 4000.0
M = 320


def _energy(x):
    return float(np.sum(np.asarray(x) ** 2))


def _tone(freq, n=M):
    return np.sin(2 * np.pi * freq * np.arange(n) / FS) * np.hanning(n)


def test_highpass_stop_band():
    x = _tone(0.5 * FM)
    assert _energy(sto.highpass_fm(x[None, :], FM, FS)) < 1e-4 * _energy(x)


def test_highpass_pass_band():
    x = _tone(1.5 * FM)
    assert _energy(sto.highpass_fm(x[None, :], FM, FS)) > 0.9 * _energy(x)


def test_highpass_zero_and_list_input():
    assert not np.any(sto.highpass_fm(np.zeros((2, M)), FM, FS))
    out = sto.highpass_fm([np.zeros(100), _tone(6000, 250)], FM, FS)
    assert [o.size for o in out] == [100, 250]


def test_highpass_rejects_fm_at_nyquist():
    with pytest.raises(ValueError):
        sto.highpass_fm(np.zeros((1, M)), FS / 2, FS)


def _response_db(a, gain, nfft):
    return 20 * np.log10(gain / np.abs(np.fft.rfft(a, nfft)))


def test_noise_ar_recovers_generating_filter():
    poles = [0.9 * np.exp(2.6j), 0.8 * np.exp(3.0j)]
    a_true = np.poly(poles + [np.conj(p) for p in poles]).real
    rng = np.random.default_rng(0)
    x = sps.lfilter([1.0], a_true, rng.standard_normal(2000 * M + 500))[500:]
    frames = x.reshape(2000, M) * np.blackman(M)
    a, gain = sto.fit_noise_ar(frames, order=4, nfft=1024)
    f = np.fft.rfftfreq(1024, 1.0 / FS)
    band = f > FM
    est = _response_db(a, gain, 1024)[band]
    ref = _response_db(a_true, 1.0, 1024)[band]
    est -= est.mean()
    ref -= ref.mean()
    assert np.max(np.abs(est - ref)) < 1.0


def test_noise_ar_repetition_invariance():
    frame = np.random.default_rng(1).standard_normal(M)
    a1, g1 = sto.fit_noise_ar(frame[None, :], 6)
    a5, g5 = sto.fit_noise_ar(np.tile(frame, (5, 1)), 6)
    np.testing.assert_allclose(a1, a5, atol=1e-12)
    assert abs(g1 - g5) < 1e-12


def test_noise_ar_flat_high_band():
    rng = np.random.default_rng(2)
    frames = sto.highpass_fm(rng.standard_normal((500, M)), FM, FS)
    a, gain = sto.fit_noise_ar(frames * np.blackman(M), order=2, nfft=1024, band=(FM, FS))
    f = np.fft.rfftfreq(1024, 1.0 / FS)
    resp = _response_db(a, gain, 1024)[(f > FM * 1.1) & (f < FS / 2 * 0.95)]
    assert resp.max() - resp.min() < 3.0


def test_noise_ar_validation():
    with pytest.raises(ValueError):
        sto.fit_noise_ar(np.ones((2, M)), order=1)
    with pytest.raises(DataError):
        sto.fit_noise_ar(np.zeros((2, M)), order=4)
    with pytest.raises(DataError):
        sto.fit_noise_ar([], order=4)


def test_hilbert_env_of_cosine():
    n = np.arange(M)
    env = sto.hilbert_env(np.cos(2 * np.pi * 0.1 * n))
    assert np.max(np.abs(env[20:-20] - 1.0)) < 0.05
    np.testing.assert_allclose(env, oracles.analytic_envelope(np.cos(2 * np.pi * 0.1 * n)),
                               atol=1e-12)


def test_hilbert_env_zero():
    assert not np.any(sto.hilbert_env(np.zeros(M)))


def test_hilbert_env_am():
    n = np.arange(2048)
    a = 1.0 + 0.5 * np.sin(2 * np.pi * n / 2048)
    env = sto.hilbert_env(a * np.cos(2 * np.pi * 0.2 * n))
    core = slice(100, -100)
    assert np.max(np.abs(env[core] - a[core]) / a[core]) < 0.05


def test_energy_envelope_identical_frames():
    frame = np.random.default_rng(3).standard_normal(M)
    env = sto.fit_energy_envelope(np.tile(frame, (7, 1)))
    ref = oracles.analytic_envelope(frame)
    np.testing.assert_allclose(env, ref / ref.max(), atol=1e-12)


def test_energy_envelope_peaks_at_gci():
    rng = np.random.default_rng(4)
    gate = np.exp(-0.5 * ((np.arange(M) - M / 2) / 10.0) ** 2)
    frames = sto.highpass_fm(rng.standard_normal((1000, M)), FM, FS) * gate
    env = sto.fit_energy_envelope(frames)
    assert abs(int(np.argmax(env)) - M // 2) <= 5
    assert env.max() == 1.0


def test_energy_envelope_symmetry():
    rng = np.random.default_rng(5)
    i = np.arange(M)
    gate = np.exp(-0.5 * ((i - (M - 1) / 2) / 25.0) ** 2)
    env = sto.fit_energy_envelope(rng.standard_normal((1000, M)) * gate)
    assert np.max(np.abs(env - env[::-1])) < 0.1


def test_energy_envelope_errors():
    with pytest.raises(DataError):
        sto.fit_energy_envelope(np.zeros((0, M)))
    with pytest.raises(DataError):
        sto.fit_energy_envelope(np.zeros((3, M)))


def test_impulse_energy_first_order():
    # 1 / (1 - 0.5 z^-1): sum 0.25^k = 4/3
    assert abs(sto.impulse_energy([1.0, -0.5]) - 4.0 / 3.0) < 1e-12


def test_shaper_with_highpass_matches_average_spectrum():
    # white noise seen through the analysis high-pass: the synthesis shaper
    # (band-only fit followed by the causal high-pass) follows the averaged
    # spectrum across the whole high band, transition included
    rng = np.random.default_rng(3)
    frames = sto.highpass_fm(rng.standard_normal((2000, M)), FM, FS) * np.blackman(M)
    mag, nfft = sto.average_amplitude_spectrum(frames, 1024)
    a, gain = sto.fit_noise_ar(frames, order=12, nfft=nfft, band=(FM, FS))
    h = sto.shaping_filter(a, gain, (FM, FS), 4 * nfft)
    resp = 20 * np.log10(np.maximum(np.abs(np.fft.rfft(h))[::4], 1e-300))
    f = np.fft.rfftfreq(nfft, 1.0 / FS)
    band = (f >= FM) & (f < 0.97 * FS / 2)
    assert np.max(np.abs(resp[band] - 20 * np.log10(mag[band]))) < 3.0


def test_impulse_energy_counts_highpass():
    a = np.array([1.0, -0.5])
    full = sto.impulse_energy(a)
    assert abs(full - 1 / (1 - 0.25)) < 1e-9
    assert sto.impulse_energy(a, highpass=(FM, FS)) < full
