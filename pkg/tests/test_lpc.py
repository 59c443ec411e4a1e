import numpy as np
import pytest
from scipy import signal as sps

import oracles
from dsm import lpc


def _toeplitz_solve(r, p):
    r_mat = np.array([[r[abs(i - j)] for j in range(p)] for i in range(p)])
    return np.linalg.solve(r_mat, -np.asarray(r[1 : p + 1]))


def test_levinson_matches_direct_normal_equations():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(4000)
    x = sps.lfilter([1.0], [1.0, -0.9, 0.4], x)
    r = np.array([np.dot(x[: x.size - k], x[k:]) for k in range(11)])
    a, err, k = lpc.levinson(r, 10)
    np.testing.assert_allclose(a[1:], _toeplitz_solve(r, 10), atol=1e-9)
    assert err > 0 and np.all(np.abs(k) < 1)
    assert abs(err - (r[0] + np.dot(a[1:], r[1:11]))) < 1e-8 * r[0]


def test_levinson_batch_and_dead_rows():
    r = np.array([[0.0, 0.0, 0.0], [2.0, 1.0, 0.5]])
    a, err, _ = lpc.levinson(r, 2)
    np.testing.assert_array_equal(a[0], [1.0, 0.0, 0.0])
    assert err[0] == 0.0
    np.testing.assert_allclose(a[1, 1:], _toeplitz_solve(r[1], 2))


def test_reflection_roundtrip_and_stability():
    a = np.poly([0.9, -0.5, 0.3 + 0.4j, 0.3 - 0.4j]).real
    assert lpc.is_stable(a)
    assert not lpc.is_stable(np.poly([1.1, 0.2]).real)
    fixed = lpc.stabilize(np.poly([1.25, 0.2]).real)
    assert lpc.is_stable(fixed)


def test_allpole_filter_matches_direct_recursion():
    a = [1.0, -1.2, 0.5]
    x = np.random.default_rng(1).standard_normal(64)
    np.testing.assert_allclose(lpc.lfilter_allpole(a, x, 0.7),
                               oracles.allpole_filter(a, x, 0.7), atol=1e-12)


def test_tv_filters_are_exact_inverses():
    rng = np.random.default_rng(2)
    n, hop = 3000, 80
    frames = n // hop + 2
    coefs = np.zeros((frames, 5))
    for i in range(frames):
        w = rng.uniform(0.2, 2.5, 2)
        r = rng.uniform(0.3, 0.9, 2)
        coefs[i] = np.poly(np.concatenate([r * np.exp(1j * w), r * np.exp(-1j * w)])).real
    gains = rng.uniform(0.5, 2.0, frames)
    e = rng.standard_normal(n)
    y = lpc.tv_allpole(e, coefs, gains, hop)
    back = lpc.tv_fir(y, coefs, hop) / lpc.interpolated_gain(gains, hop, n)
    np.testing.assert_allclose(back, e, atol=1e-9)


def test_tv_fir_constant_track_equals_convolution():
    a = np.array([1.0, -0.8, 0.3])
    x = np.random.default_rng(3).standard_normal(1000)
    coefs = np.tile(a, (1000 // 50 + 2, 1))
    np.testing.assert_allclose(lpc.tv_fir(x, coefs, 50), np.convolve(x, a)[:1000], atol=1e-12)


def test_spectrum_to_allpole_recovers_filter():
    a = np.poly([0.8 * np.exp(0.7j), 0.8 * np.exp(-0.7j)]).real
    mag = lpc.allpole_response(a, 0.3, 2048)
    est, gain = lpc.spectrum_to_allpole(mag, 2)
    np.testing.assert_allclose(est, a, atol=1e-6)
    assert abs(gain - 0.3) < 1e-6


def test_autocorrelation_matches_direct_sum():
    x = np.random.default_rng(4).standard_normal(37)
    r = lpc.autocorrelation(x, 5)[0]
    direct = [np.dot(x[: x.size - k], x[k:]) for k in range(6)]
    np.testing.assert_allclose(r, direct, atol=1e-10)


def test_levinson_needs_enough_lags():
    with pytest.raises(ValueError):
        lpc.levinson([1.0, 0.5], 3)
