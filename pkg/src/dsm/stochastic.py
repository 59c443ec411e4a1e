"""High-band noise model: an all-pole spectral shaper fitted to the averaged
amplitude spectrum of high-passed residual frames, and a GCI-centred energy
envelope from their averaged Hilbert envelopes."""

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from . import dsp, lpc
from .audio import DataError


@dataclass(frozen=True)
class NoiseModel:
    """``gain / A(z)`` shapes white noise; ``energy_envelope`` (length m,
    unit peak) modulates it in time around the GCI."""

    ar_coefficients: np.ndarray
    gain: float
    energy_envelope: np.ndarray
    fm: float
    f0_star: float

    @property
    def order(self):
        return self.ar_coefficients.size - 1


def highpass_fm(frames, fm, sample_rate, order=8):
    """Zero-phase Butterworth high-pass of each frame at ``fm``.

    ``frames`` may be a 2-D array or a list of variable-length frames; the
    output has the same layout.
    """
    if fm >= sample_rate / 2.0:
        raise ValueError(f"fm={fm} Hz must be below the Nyquist frequency {sample_rate / 2.0} Hz")
    if isinstance(frames, np.ndarray) and frames.ndim == 2:
        return dsp.highpass_zero_phase(frames, fm, sample_rate, order)
    if isinstance(frames, np.ndarray) and frames.ndim == 1:
        return dsp.highpass_zero_phase(frames, fm, sample_rate, order)
    return [dsp.highpass_zero_phase(f, fm, sample_rate, order) for f in frames]


def average_amplitude_spectrum(frames, nfft=None):
    """Mean of the frames' magnitude spectra on a common FFT grid."""
    frames = list(frames) if not (isinstance(frames, np.ndarray) and frames.ndim == 2) else frames
    if len(frames) == 0:
        raise DataError("empty high band: no frames")
    longest = max(len(f) for f in frames)
    if nfft is None:
        nfft = max(512, 1 << int(np.ceil(np.log2(longest))))
    acc = np.zeros(nfft // 2 + 1)
    for f in frames:
        acc += np.abs(np.fft.rfft(f, nfft))
    return acc / len(frames), nfft


#: The spectrum below ``EDGE_FILL * fm`` is replaced by its level just above.
EDGE_FILL = 1.15


def fit_noise_ar(frames, order=12, nfft=None, band=None):
    """All-pole model of the averaged amplitude spectrum of high-band frames.

    Returns ``(a, gain)``; ``gain / |A|`` follows the averaged magnitude.
    With ``band = (fm, sample_rate)`` only the shape above ``fm`` is
    modelled: the spectrum below the band edge is filled with the level just
    above it, so that the poles describe the colouring of the band and not
    the band limitation itself (which synthesis applies as a high-pass).
    """
    if order < 2:
        raise ValueError(f"noise AR order must be >= 2, got {order}")
    mag, nfft = average_amplitude_spectrum(frames, nfft)
    if not np.any(mag > 0):
        raise DataError("empty high band: all frames are zero above fm")
    if band is not None:
        mag = fill_below_band(mag, band[0], band[1], nfft)
    a, gain = lpc.spectrum_to_allpole(mag, order)
    if not lpc.is_stable(a):
        a = lpc.stabilize(a)
    return a, gain


def fill_below_band(mag, fm, sample_rate, nfft):
    f = np.fft.rfftfreq(nfft, 1.0 / sample_rate)
    edge = EDGE_FILL * fm
    ref = (f >= edge) & (f < edge + 0.15 * fm)
    if not ref.any():
        ref = f >= fm
    out = np.array(mag, dtype=float)
    out[f < edge] = np.mean(mag[ref])
    return out


def hilbert_env(frame):
    """Hilbert (analytic-signal magnitude) envelope of one frame."""
    frame = np.asarray(frame, dtype=float)
    if frame.size == 0:
        raise ValueError("empty frame")
    return dsp.hilbert_envelope(frame)


def fit_energy_envelope(frames):
    """Pointwise mean of the frames' Hilbert envelopes, scaled to unit peak.

    ``frames`` must already have the normalized length ``m`` (GCI at m/2).
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise DataError("cannot fit an energy envelope on an empty frame set")
    env = dsp.hilbert_envelope(frames).mean(axis=0)
    peak = env.max()
    if peak <= 0:
        raise DataError("empty high band: all frames are zero above fm")
    return env / peak


def fit_noise_model(raw_frames, frame_set, order=12):
    """Fit both halves of the noise model.

    ``raw_frames`` are the original-length residual frames (list); their
    high band is taken at the physical ``fm`` so the shaper acts on real
    frequencies.  The energy envelope comes from ``frame_set.highband``.
    """
    fm, fs = frame_set.fm, frame_set.sample_rate
    normed = []
    for f in raw_frames:
        e = np.sqrt(np.dot(f, f))
        if e > 0:
            normed.append(f / e)
    hb = highpass_fm(normed, fm, fs)
    a, gain = fit_noise_ar(hb, order, band=(fm, fs))
    if frame_set.highband is None:
        raise DataError("frame set carries no high-band frames")
    envelope = fit_energy_envelope(frame_set.highband)
    return NoiseModel(a, gain, envelope, fm, frame_set.f0_star)


def highband_energy_fraction(frame_set):
    """Mean energy share above ``fm`` of the unit-energy normalized frames."""
    if frame_set.highband is None or frame_set.n_frames == 0:
        return 0.0
    return float(np.mean(np.sum(frame_set.highband ** 2, axis=1)))


def band_sos(fm, sample_rate):
    """Causal high-pass with the squared magnitude of the zero-phase
    analysis high-pass (the same Butterworth section applied twice)."""
    sos = dsp.highpass_sos(float(fm), int(sample_rate))
    return np.vstack([sos, sos])


def shaping_filter(a, gain=1.0, highpass=None, n=4096):
    """Impulse response of ``gain / A(z)``, followed by the causal Fm
    high-pass when ``highpass = (fm, sample_rate)``."""
    imp = np.zeros(n)
    imp[0] = 1.0
    h = lpc.lfilter_allpole(a, imp, gain)
    if highpass is not None:
        h = sps.sosfilt(band_sos(*highpass), h)
    return h


def impulse_energy(a, n=4096, highpass=None):
    """Energy of the impulse response of ``1 / A(z)`` (truncated at ``n``),
    including the high-pass when given."""
    h = shaping_filter(a, 1.0, highpass, n)
    return float(np.dot(h, h))
