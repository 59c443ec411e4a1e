"""Linear prediction primitives: Levinson-Durbin, stability checks and
time-varying all-pole / all-zero filtering with interpolated coefficients.

Polynomials are monic, ``a = [1, a_1, ..., a_p]``, and describe the
inverse filter ``A(z) = sum_k a_k z^-k``.  The matching synthesis filter
is ``g / A(z)``.
"""

import numpy as np
from numba import njit
from scipy import signal as sps


def levinson(r, order, white_noise=0.0):
    """Solve the Yule-Walker equations by the Levinson-Durbin recursion.

    Parameters
    ----------
    r : array_like, shape (..., >= order + 1)
        Autocorrelation sequence(s); only lags ``0..order`` are used.
    order : int
        Prediction order ``p``.
    white_noise : float
        Relative white-noise correction added to ``r[..., 0]``.

    Returns
    -------
    a : ndarray, shape (..., order + 1)
        Monic prediction-error polynomial.
    err : ndarray, shape (...)
        Final prediction-error power.
    k : ndarray, shape (..., order)
        Reflection coefficients.

    Rows with ``r[0] <= 0`` get the identity polynomial and zero error.
    """
    r = np.array(r, dtype=float)
    if r.shape[-1] < order + 1:
        raise ValueError(f"need {order + 1} autocorrelation lags, got {r.shape[-1]}")
    batch = r.shape[:-1]
    r = r[..., : order + 1].reshape(-1, order + 1)
    n = r.shape[0]
    r0 = r[:, 0] * (1.0 + white_noise)
    dead = ~(r0 > 0)
    a = np.zeros((n, order + 1))
    a[:, 0] = 1.0
    k = np.zeros((n, order))
    err = np.where(dead, 0.0, r0)
    safe = np.where(dead, 1.0, err)
    for i in range(1, order + 1):
        acc = r[:, i] + np.einsum("nj,nj->n", a[:, 1:i], r[:, i - 1 : 0 : -1])
        ki = np.where(dead, 0.0, -acc / safe)
        prev = a[:, 1:i].copy()
        a[:, 1:i] = prev + ki[:, None] * prev[:, ::-1]
        a[:, i] = ki
        k[:, i - 1] = ki
        err = err * (1.0 - ki * ki)
        safe = np.where(dead | (err <= 0), 1.0, err)
    err = np.maximum(err, 0.0)
    return (a.reshape(batch + (order + 1,)), err.reshape(batch),
            k.reshape(batch + (order,)))


def reflection_coefficients(a):
    """Step-down recursion: monic polynomial -> reflection coefficients."""
    a = np.asarray(a, dtype=float)
    if a[0] != 1.0:
        a = a / a[0]
    cur = a[1:].copy()
    p = cur.size
    k = np.zeros(p)
    for i in range(p, 0, -1):
        ki = cur[i - 1]
        k[i - 1] = ki
        if i == 1:
            break
        denom = 1.0 - ki * ki
        if denom <= 0.0:
            k[: i - 1] = np.nan
            break
        cur = (cur[: i - 1] - ki * cur[: i - 1][::-1]) / denom
    return k


def is_stable(a, margin=0.0):
    """True when ``1/A(z)`` has all poles strictly inside ``|z| < 1 - margin``."""
    a = np.asarray(a, dtype=float)
    if a.size <= 1:
        return True
    if margin > 0.0:
        roots = np.roots(a)
        return bool(np.all(np.abs(roots) < 1.0 - margin))
    k = reflection_coefficients(a)
    return bool(np.all(np.isfinite(k)) and np.all(np.abs(k) < 1.0))


def autocorrelation(frames, maxlag):
    """Biased autocorrelation of each row up to ``maxlag`` via FFT."""
    frames = np.atleast_2d(np.asarray(frames, dtype=float))
    n = frames.shape[-1]
    nfft = 1 << int(np.ceil(np.log2(max(2 * n - 1, 2))))
    spec = np.fft.rfft(frames, nfft, axis=-1)
    r = np.fft.irfft(spec.real ** 2 + spec.imag ** 2, nfft, axis=-1)
    return r[..., : maxlag + 1]


def allpole_response(a, gain=1.0, nfft=1024, sample_rate=None):
    """Magnitude response ``|g / A(e^jw)|`` on ``nfft // 2 + 1`` bins."""
    a = np.asarray(a, dtype=float)
    denom = np.abs(np.fft.rfft(a, nfft))
    mag = gain / np.maximum(denom, 1e-300)
    if sample_rate is None:
        return mag
    return np.fft.rfftfreq(nfft, 1.0 / sample_rate), mag


def spectrum_to_allpole(magnitude, order):
    """All-pole fit of a one-sided magnitude spectrum (``nfft // 2 + 1`` bins).

    The squared magnitude is treated as a power spectrum, inverted to an
    autocorrelation and handed to Levinson-Durbin.  Returns ``(a, gain)``
    with ``gain`` chosen so ``gain / |A|`` matches the spectrum level.
    """
    magnitude = np.asarray(magnitude, dtype=float)
    power = magnitude ** 2
    r = np.fft.irfft(power)
    a, err, _ = levinson(r, order, white_noise=1e-9)
    return a, float(np.sqrt(err))


def stabilize(a):
    """Reflect poles outside the unit circle back inside."""
    a = np.asarray(a, dtype=float)
    if is_stable(a):
        return a
    roots = np.roots(a)
    mags = np.abs(roots)
    roots = np.where(mags >= 1.0, roots / (mags ** 2) * 0.999, roots)
    return np.real(np.poly(roots))


# ---------------------------------------------------------------------------
# time-varying filtering
#
# Frame ``i`` of a coefficient track is centred on sample ``i * hop``.  The
# effective coefficients at sample n are the raised-cosine blend of the two
# surrounding frames, which is exactly what overlap-adding frame-wise FIR
# outputs under periodic Hann windows of length ``2 * hop`` produces.  The
# all-pole filter below uses the same blend so the two are exact inverses.
# ---------------------------------------------------------------------------


def _blend_weights(n_samples, hop):
    n = np.arange(n_samples)
    idx = n // hop
    frac = (n - idx * hop) / hop
    w_next = 0.5 * (1.0 - np.cos(np.pi * frac))
    return idx, w_next


def _pad_track(values, n_frames):
    values = np.asarray(values, dtype=float)
    if values.shape[0] >= n_frames:
        return values[:n_frames]
    pad = np.repeat(values[-1:], n_frames - values.shape[0], axis=0)
    return np.concatenate([values, pad], axis=0)


def interpolated_gain(gains, hop, n_samples):
    """Per-sample gain using the same blend as the coefficient tracks."""
    n_frames = n_samples // hop + 2
    g = _pad_track(gains, n_frames)
    idx, w = _blend_weights(n_samples, hop)
    return (1.0 - w) * g[idx] + w * g[idx + 1]


def tv_fir(x, coefs, hop):
    """Time-varying all-zero filter by overlap-add of frame-wise outputs."""
    x = np.asarray(x, dtype=float)
    n = x.size
    order = coefs.shape[1] - 1
    n_frames = n // hop + 2
    coefs = _pad_track(coefs, n_frames)
    # padded so that frame i's segment [i*hop - hop - order, i*hop + hop) is in range
    lead = hop + order
    xp = np.concatenate([np.zeros(lead), x, np.zeros(2 * hop + hop)])
    t = np.arange(-hop, hop)
    centres = np.arange(n_frames) * hop
    win = 0.5 * (1.0 + np.cos(np.pi * t / hop))
    for k in range(order + 1):
        seg = xp[lead + centres[:, None] + t[None, :] - k]
        contrib = coefs[:, k : k + 1] * seg
        if k == 0:
            frames = contrib
        else:
            frames += contrib
    frames *= win[None, :]
    # frame i spans blocks i (first half) and i + 1 (second half), offset by hop
    blocks = np.zeros((n_frames + 1, hop))
    blocks[:-1] += frames[:, :hop]
    blocks[1:] += frames[:, hop:]
    out = blocks.ravel()
    return out[hop : hop + n]


@njit(cache=True)
def _tv_allpole_kernel(e, coefs, gains, hop):
    n = e.size
    order = coefs.shape[1] - 1
    y = np.zeros(n)
    cur = np.zeros(order + 1)
    for i in range(n):
        idx = i // hop
        frac = (i - idx * hop) / hop
        w = 0.5 * (1.0 - np.cos(np.pi * frac))
        for k in range(order + 1):
            cur[k] = (1.0 - w) * coefs[idx, k] + w * coefs[idx + 1, k]
        g = (1.0 - w) * gains[idx] + w * gains[idx + 1]
        acc = g * e[i]
        for k in range(1, order + 1):
            if i - k >= 0:
                acc -= cur[k] * y[i - k]
        y[i] = acc / cur[0]
    return y


def tv_allpole(e, coefs, gains, hop):
    """Time-varying all-pole filter ``y = g_n e / A_n`` (exact inverse of
    :func:`tv_fir` followed by division by the blended gain)."""
    e = np.ascontiguousarray(e, dtype=float)
    n_frames = e.size // hop + 2
    coefs = np.ascontiguousarray(_pad_track(coefs, n_frames))
    gains = np.ascontiguousarray(_pad_track(gains, n_frames))
    return _tv_allpole_kernel(e, coefs, gains, int(hop))


def lfilter_allpole(a, x, gain=1.0):
    """Plain stationary all-pole filtering (thin wrapper for readability)."""
    return sps.lfilter([gain], a, x)
