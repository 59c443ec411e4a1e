"""Small DSP helpers shared by the analysis, stochastic and vocoder code."""

from functools import lru_cache
from math import gcd

import numpy as np
from scipy import signal as sps


def blackman_periodic(length):
    """Periodic Blackman window; its peak (1.0) sits exactly at ``length // 2``."""
    return sps.get_window("blackman", int(length), fftbins=True)


@lru_cache(maxsize=512)
def _poly_taps(up, down):
    # same design as scipy.signal.resample_poly's default, cached per ratio
    max_rate = max(up, down)
    half_len = 10 * max_rate
    taps = sps.firwin(2 * half_len + 1, 1.0 / max_rate, window=("kaiser", 5.0))
    taps.flags.writeable = False
    return taps


def resample_frame(x, length):
    """Band-limited (windowed-sinc polyphase) resampling of ``x`` to ``length``.

    Output sample ``j`` corresponds to input time ``j * len(x) / length``, so
    a GCI at the centre of an even-length frame stays at the centre.
    """
    x = np.asarray(x, dtype=float)
    length = int(length)
    n = x.size
    if length == n:
        return x.copy()
    g = gcd(length, n)
    up, down = length // g, n // g
    y = sps.resample_poly(x, up, down, window=np.array(_poly_taps(up, down)))
    if y.size < length:
        y = np.concatenate([y, np.zeros(length - y.size)])
    return y[:length]


@lru_cache(maxsize=64)
def highpass_sos(cutoff, sample_rate, order=8):
    if not 0 < cutoff < sample_rate / 2:
        raise ValueError(
            f"high-pass cutoff {cutoff} Hz must lie strictly inside (0, {sample_rate / 2}) Hz")
    return sps.butter(order, cutoff, btype="highpass", fs=sample_rate, output="sos")


def highpass_zero_phase(x, cutoff, sample_rate, order=8):
    """Forward-backward Butterworth high-pass (zero phase, doubled slope)."""
    x = np.asarray(x, dtype=float)
    sos = highpass_sos(float(cutoff), int(sample_rate), order)
    padlen = min(3 * (2 * len(sos) + 1), x.shape[-1] - 1)
    return sps.sosfiltfilt(sos, x, axis=-1, padlen=max(padlen, 0))


@lru_cache(maxsize=32)
def lowpass_sos(cutoff, sample_rate, order=8):
    if not 0 < cutoff < sample_rate / 2:
        raise ValueError(
            f"low-pass cutoff {cutoff} Hz must lie strictly inside (0, {sample_rate / 2}) Hz")
    return sps.butter(order, cutoff, btype="lowpass", fs=sample_rate, output="sos")


def lowpass_zero_phase(x, cutoff, sample_rate, order=8):
    x = np.asarray(x, dtype=float)
    sos = lowpass_sos(float(cutoff), int(sample_rate), order)
    padlen = min(3 * (2 * len(sos) + 1), x.shape[-1] - 1)
    return sps.sosfiltfilt(sos, x, axis=-1, padlen=max(padlen, 0))


def hilbert_envelope(x):
    """Magnitude of the analytic signal, computed by the FFT method."""
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        return np.zeros_like(x)
    return np.abs(sps.hilbert(x, axis=-1))


def spectral_flatness(x, nfft=None):
    """Geometric over arithmetic mean of the power spectrum (0..1]."""
    x = np.asarray(x, dtype=float)
    p = np.abs(np.fft.rfft(x, nfft)) ** 2
    p = p[1:-1] + 1e-300
    return float(np.exp(np.mean(np.log(p))) / np.mean(p))


def band_energies(x, cutoff, sample_rate, nfft=None):
    """Mean power per bin below and above ``cutoff`` (DC excluded)."""
    x = np.asarray(x, dtype=float)
    p = np.abs(np.fft.rfft(x, nfft)) ** 2
    f = np.fft.rfftfreq(nfft or x.size, 1.0 / sample_rate)
    low = p[(f > 0) & (f < cutoff)]
    high = p[f >= cutoff]
    return float(np.mean(low)), float(np.mean(high))


def normalized_autocorrelation(x, lag):
    """Pearson-style correlation between ``x[:-lag]`` and ``x[lag:]``."""
    x = np.asarray(x, dtype=float)
    a, b = x[:-lag], x[lag:]
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    return float(np.dot(a, b) / den) if den > 0 else 0.0
