"""Synthetic speakers with known excitation shapes.

Each speaker owns a ground-truth first eigenresidual (an impulse shaped by a
mixed-phase all-pass, band-limited below ``fm``), a ground-truth energy
envelope and a high-band noise shaper.  Speech is produced with the library's
own synthesis path through vowel-like formant envelopes.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from . import deterministic as det
from . import lpc
from . import stochastic as sto
from .analysis import EnvelopeTrack, PitchTrack
from .audio import AudioSignal
from .vocoder import DsmModel, SynthesisPlan, synth_speech

# (F1, F2, F3, F4) in Hz; bandwidths are shared
VOWELS = {
    "a": (730.0, 1090.0, 2440.0, 3400.0),
    "i": (270.0, 2290.0, 3010.0, 3700.0),
    "u": (300.0, 870.0, 2240.0, 3300.0),
    "e": (530.0, 1840.0, 2480.0, 3500.0),
    "o": (570.0, 840.0, 2410.0, 3300.0),
}
BANDWIDTHS = (80.0, 100.0, 140.0, 200.0)
# fixed upper resonances keep the high band within an analysis window's range
UPPER_FORMANTS = (4400.0, 5600.0, 6800.0)
UPPER_BANDWIDTHS = (250.0, 300.0, 350.0)
# one-pole spectral tilt shared by all synthetic envelopes; it matches the
# analysis pre-emphasis so the analysis model family contains the truth
TILT = 0.97


def formant_polynomial(formants, bandwidths, sample_rate):
    """All-pole polynomial with one resonance per (frequency, bandwidth)."""
    a = np.array([1.0])
    if len(formants) == 4:
        formants = tuple(formants) + UPPER_FORMANTS
        bandwidths = tuple(bandwidths) + UPPER_BANDWIDTHS
    for f, b in zip(formants, bandwidths):
        r = np.exp(-np.pi * b / sample_rate)
        th = 2 * np.pi * f / sample_rate
        a = np.convolve(a, [1.0, -2 * r * np.cos(th), r * r])
    return a


def _allpass(x, r, theta, anticausal=False):
    c = np.cos(theta)
    b = [r * r, -2 * r * c, 1.0]
    a = [1.0, -2 * r * c, r * r]
    if anticausal:
        return sps.lfilter(b, a, x[::-1])[::-1]
    return sps.lfilter(b, a, x)


SHELF_POWER = 32
EDGE_MARGIN = 1.0


def _low_shelf(f, fm):
    return 1.0 / np.sqrt(1.0 + (f / fm) ** SHELF_POWER)


def _high_shelf(f, fm, slope=0.0):
    f = np.maximum(f, 1e-6)
    return 1.0 / np.sqrt(1.0 + (fm / f) ** SHELF_POWER) * (f / fm) ** slope


def mixed_phase_pulse(m, cutoff, sample_rate, causal, anticausal):
    """Unit-energy m-sample pulse with its negative peak at ``m // 2``.

    ``causal`` / ``anticausal`` are lists of ``(r, theta)`` all-pass sections.
    The all-pass keeps the magnitude flat so the shape lives in the phase; a
    zero-phase shelf that is power-complementary to the noise shelf then
    limits it to the band below ``cutoff``.
    """
    n = 8 * m
    x = np.zeros(n)
    x[n // 2] = 1.0
    for r, th in causal:
        x = _allpass(x, r, th)
    for r, th in anticausal:
        x = _allpass(x, r, th, anticausal=True)
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spec = np.fft.rfft(x) * _low_shelf(f, cutoff)
    # move the band-limited peak onto a sample so the GCI is well defined
    peak = int(np.argmax(np.abs(np.fft.irfft(spec, n))))
    k = np.arange(spec.size)
    deltas = np.linspace(-0.5, 0.5, 65)
    heights = [abs(np.sum(spec * np.exp(2j * np.pi * k * (peak + d) / n) * np.where(
        (k == 0) | (k == n // 2), 1.0, 2.0)).real) for d in deltas]
    d = deltas[int(np.argmax(heights))]
    x = np.fft.irfft(spec * np.exp(2j * np.pi * k * d / n), n)
    if x[peak] > 0:
        x = -x
    seg = x[peak - m // 2 : peak - m // 2 + m]
    # taper twice so the pulse is compact and nearly unaffected by analysis windows
    w = np.blackman(m + 1)[:m]
    seg = seg * w * w
    return seg / np.linalg.norm(seg)


def secondary_peak_ratio(mu):
    """Second-largest over largest negative local peak."""
    idx, _ = sps.find_peaks(-mu)
    depths = np.sort(-mu[idx])[::-1]
    return float(depths[1] / depths[0]) if depths.size > 1 else 0.0


def asymmetric_bump(m, centre, left, right):
    """Unit-peak Gaussian bump with different widths on each side."""
    n = np.arange(m, dtype=float)
    s = np.where(n < centre, left, right)
    return np.exp(-0.5 * ((n - centre) / s) ** 2)


def shelf_allpole(fm, sample_rate, order=12, slope=0.0, nfft=1024):
    """All-pole fit of a high-pass shelf at ``fm`` with a tilt above it."""
    f = np.fft.rfftfreq(nfft, 1.0 / sample_rate)
    a, _ = lpc.spectrum_to_allpole(_high_shelf(f, fm, slope) + 1e-3, order)
    return a if lpc.is_stable(a) else lpc.stabilize(a)


def continuity_gain(mu, env, a, cutoff, fm, sample_rate, stretch=1.0, nfft=4096):
    """Noise gain that makes the expected excitation spectrum continuous
    across ``fm`` once frames are stretched by ``stretch`` (target period over
    normalized period): the pulse level below its band edge equals the noise
    level above ``fm``."""
    f = np.fft.rfftfreq(nfft, 1.0 / sample_rate)
    below = (f > 0.5 * cutoff) & (f < 0.85 * cutoff)
    above = (f > 1.15 * fm) & (f < 1.5 * fm)
    pulse = np.abs(np.fft.rfft(mu, nfft)) ** 2
    shaper = 1.0 / np.abs(np.fft.rfft(a, nfft)) ** 2
    return float(np.sqrt(stretch * pulse[below].mean() / (np.sum(env ** 2) * shaper[above].mean())))


def basis_from_vector(mu, f0_star):
    """Orthonormal basis whose first row is ``mu`` (eigenvalues 1, 0, 0, ...)."""
    m = mu.size
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(np.column_stack([mu, rng.standard_normal((m, m - 1))]))
    q = q.T
    if np.dot(q[0], mu) < 0:
        q[0] = -q[0]
    q[0] = mu
    vals = np.zeros(m)
    vals[0] = 1.0
    return det.EigenBasis(q, vals, float(f0_star))


@dataclass
class SyntheticSpeaker:
    name: str
    model: DsmModel
    f0_mean: float
    rho: float
    seed: int
    vowels: tuple = field(default=tuple(VOWELS))

    @property
    def mu(self):
        return self.model.basis.first

    @property
    def envelope(self):
        return self.model.noise.energy_envelope

    def utterance(self, duration, seed, vowels=None, voiced_only=False):
        """One utterance of ``duration`` seconds (voiced runs separated by
        short unvoiced gaps unless ``voiced_only``)."""
        return synth_utterance(self, duration, seed, vowels, voiced_only)[0]

    def utterance_with_plan(self, duration, seed, vowels=None, voiced_only=False):
        """``(signal, plan)``; the plan holds the generating pitch and envelope."""
        return synth_utterance(self, duration, seed, vowels, voiced_only)

    def corpus(self, total_seconds, seed, utterance_seconds=4.0, vowels=None):
        n = max(1, int(np.ceil(total_seconds / utterance_seconds)))
        return [self.utterance(utterance_seconds, seed * 1000 + i, vowels) for i in range(n)]


def make_speaker(index, sample_rate=16000, f0_star=100.0, fm=4000.0, noise_order=12,
                 name=None, f0_mean=None, edge_margin=EDGE_MARGIN):
    """Deterministically build speaker number ``index``.

    The pulse is band-limited in the normalized domain at
    ``edge_margin * fm * f0_star / f0_mean`` so that, at the speaker's mean
    pitch and with the default margin of 1, its physical band edge meets the
    noise band at ``fm``.  A margin below 1 leaves a gap between the bands.
    """
    rng = np.random.default_rng([7, index])
    m = int(round(2 * sample_rate / f0_star))
    drawn = rng.uniform(72.0, 92.0)
    f0_mean = drawn if f0_mean is None else float(f0_mean)
    stretch = f0_star / f0_mean
    cutoff = min(edge_margin * fm * stretch, 0.95 * sample_rate / 2.0)

    def sections(k):
        return [(rng.uniform(0.45, 0.8), rng.uniform(0.1, 0.45) * np.pi) for _ in range(k)]

    while True:
        mu = mixed_phase_pulse(m, cutoff, sample_rate, sections(rng.integers(1, 3)),
                               sections(rng.integers(1, 3)))
        if secondary_peak_ratio(mu) < 0.6:
            break
    env = asymmetric_bump(m, m / 2 + rng.uniform(-4, 6), rng.uniform(6, 14),
                          rng.uniform(12, 30))
    env /= env.max()
    a = shelf_allpole(fm, sample_rate, noise_order, slope=rng.uniform(-1.0, 0.5))
    jitter = np.sqrt(rng.uniform(0.8, 1.25))
    if fm < sample_rate / 2.0:
        gain = continuity_gain(mu, env, a, cutoff, fm, sample_rate, stretch) * jitter
        rho = gain ** 2 * np.sum(env ** 2) * sto.impulse_energy(a, highpass=(fm, sample_rate))
    else:  # no stochastic band
        gain, rho = 0.0, 0.0
    noise = sto.NoiseModel(a, float(gain), env, float(fm), float(f0_star))
    model = DsmModel(basis=basis_from_vector(mu, f0_star), noise=noise, fm=float(fm),
                     f0_star=float(f0_star), sample_rate=int(sample_rate), k_det=1,
                     det_weights=np.ones(1))
    return SyntheticSpeaker(name or f"spk{index:02d}", model, f0_mean, rho, index)


def _segments(n_frames, rng, voiced_only):
    """Alternating voiced runs (0.6-1.5 s) and unvoiced gaps (0.08-0.2 s) in
    10 ms frames."""
    voiced = np.zeros(n_frames, bool)
    if voiced_only:
        voiced[:] = True
        return voiced
    i = int(rng.integers(5, 12))
    while i < n_frames:
        run = int(rng.integers(60, 150))
        voiced[i : i + run] = True
        i += run + int(rng.integers(8, 20))
    return voiced


def synth_utterance(speaker, duration, seed, vowels=None, voiced_only=False):
    fs = speaker.model.sample_rate
    rng = np.random.default_rng([speaker.seed, seed])
    n = int(round(duration * fs))
    hop = fs // 100
    n_pitch = int(np.ceil(n / hop)) + 1
    t = np.arange(n_pitch) * hop / fs
    f0 = speaker.f0_mean * (1 + 0.06 * np.sin(2 * np.pi * rng.uniform(0.2, 0.6) * t
                                              + rng.uniform(0, 2 * np.pi)))
    f0 = np.clip(f0, speaker.model.f0_min, 100.0)
    voiced = _segments(n_pitch, rng, voiced_only)
    pitch = PitchTrack(hop, np.where(voiced, f0, 0.0), fs)

    # formant tracks: a new vowel per voiced run, 50 ms transitions
    ehop = fs // 200
    n_env = int(np.ceil(n / ehop)) + 1
    names = list(vowels or speaker.vowels)
    starts = np.flatnonzero(np.diff(np.concatenate([[0], voiced.astype(int)])) == 1)
    targets = np.zeros((n_env, 4))
    current = np.array(VOWELS[names[int(rng.integers(len(names)))]])
    marks = sorted(int(s * hop / ehop) for s in starts)
    k = 0
    for i in range(n_env):
        if k < len(marks) and i >= marks[k]:
            current = np.array(VOWELS[names[int(rng.integers(len(names)))]])
            k += 1
        targets[i] = current
    kernel = np.ones(10) / 10
    tracks = np.column_stack([np.convolve(np.pad(targets[:, j], (9, 0), mode="edge"), kernel,
                                          mode="valid") for j in range(4)])
    coefs = np.array([np.convolve(formant_polynomial(fr, BANDWIDTHS, fs), [1.0, -TILT])
                      for fr in tracks])
    env_voiced = pitch.voiced_mask(n_env * ehop)[np.arange(n_env) * ehop]
    gains = np.where(env_voiced, 0.002, 0.0004) * (1 + 0.1 * rng.standard_normal(n_env).clip(-2, 2))
    envelope = EnvelopeTrack(ehop, coefs, gains, fs)
    plan = SynthesisPlan(pitch, envelope, int(rng.integers(2 ** 63)), n)
    return synth_speech(speaker.model, plan), plan


def sustained_vowel(duration=5.0, f0=100.0, sample_rate=16000, vowel="a", noise=0.0, seed=0):
    """Impulse train through a fixed formant filter, with optional white noise
    added to the excitation."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    e = np.zeros(n)
    period = sample_rate / f0
    e[np.round(np.arange(period / 2, n, period)).astype(int)] = -1.0
    if noise:
        e += noise * rng.standard_normal(n)
    a = formant_polynomial(VOWELS[vowel], BANDWIDTHS, sample_rate)
    y = sps.lfilter([1.0], a, e)
    y *= 0.5 / np.max(np.abs(y))
    return AudioSignal(y, sample_rate)


def white_noise(duration=1.0, sample_rate=16000, seed=0, scale=0.1):
    rng = np.random.default_rng(seed)
    return AudioSignal(scale * rng.standard_normal(int(round(duration * sample_rate))), sample_rate)
