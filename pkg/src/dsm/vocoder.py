"""Training of speaker models and GCI-synchronous excitation synthesis."""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal as sps

from . import analysis as an
from . import deterministic as det
from . import dsp, lpc
from . import stochastic as sto
from .audio import AudioSignal, DataError
from .config import CONVERGENCE_GUIDANCE, FewFramesWarning, RunConfig, require_pitch_constraint

#: Below this many residual frames a model cannot be trusted at all.
MIN_COPY_FRAMES = 100


@dataclass(frozen=True)
class DsmModel:
    basis: det.EigenBasis
    noise: sto.NoiseModel
    fm: float
    f0_star: float
    sample_rate: int
    k_det: int = 1
    f0_min: float = 60.0
    f0_max: float = 400.0
    det_weights: np.ndarray = field(default_factory=lambda: np.ones(1))
    n_frames: int = 0

    def __post_init__(self):
        if self.k_det < 1:
            raise ValueError("k_det must be >= 1")
        if self.k_det > self.basis.eigenresiduals.shape[0]:
            raise ValueError("k_det exceeds the number of stored eigenresiduals")
        if not (self.basis.f0_star == self.noise.f0_star == self.f0_star):
            raise ValueError("basis, noise model and model disagree on f0_star")
        require_pitch_constraint(self.f0_star, self.fm, self.sample_rate, self.f0_min)

    @property
    def m(self):
        return self.basis.m

    @property
    def t0_range(self):
        return (int(np.floor(self.sample_rate / self.f0_max)),
                int(np.ceil(self.sample_rate / self.f0_min)))

    def without_noise(self):
        return replace(self, noise=replace(self.noise, gain=0.0))

    def deterministic_waveform(self):
        w = np.asarray(self.det_weights[: self.k_det], dtype=float)
        return w @ self.basis.eigenresiduals[: self.k_det]

    def stochastic_energy(self):
        """Expected energy of a stochastic frame at the normalized length."""
        n = self.noise
        return float(n.gain ** 2 * np.sum(n.energy_envelope ** 2)
                     * sto.impulse_energy(n.ar_coefficients, highpass=self.highpass))

    @property
    def highpass(self):
        """``(fm, sample_rate)`` of the noise high-pass, or None at Nyquist."""
        return (self.fm, self.sample_rate) if self.fm < self.sample_rate / 2.0 else None


@dataclass(frozen=True)
class SynthesisPlan:
    pitch: an.PitchTrack
    envelope: an.EnvelopeTrack
    rng_seed: int = 0
    n_samples: int | None = None

    @property
    def length(self):
        if self.n_samples is not None:
            return int(self.n_samples)
        return self.pitch.n_frames * self.pitch.frame_hop


@dataclass
class TrainingReport:
    n_signals: int
    n_gcis: int
    n_frames: int
    n_dropped_edges: int
    n_skipped_no_period: int
    crd: np.ndarray
    constraint_bound: float
    constraint_ok: bool
    highband_fraction: float
    warnings: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def train_model(signals, cfg=None, source_ids=None):
    """Train a speaker model from a list of :class:`AudioSignal`.

    Returns ``(model, report)``.  Emits :class:`FewFramesWarning` when fewer
    than ``cfg.min_frames`` frames were collected.
    """
    cfg = cfg or RunConfig()
    signals = list(signals)
    if not signals:
        raise DataError("empty corpus")
    fs = signals[0].sample_rate
    cfg.check(fs)
    raw = an.collect_frames(signals, cfg, source_ids)
    if len(raw) == 0:
        raise DataError("no voiced residual frames found in the training corpus")
    frames = an.normalize_frames(raw, cfg.f0_star, cfg.fm, fs, cfg.f0_min)
    if frames.n_frames < 2:
        raise DataError(f"insufficient frames: {frames.n_frames} usable residual frame(s)")
    notes = []
    if frames.n_frames < cfg.min_frames:
        msg = (f"only {frames.n_frames} residual frames (< {cfg.min_frames}); "
               f"{CONVERGENCE_GUIDANCE}")
        warnings.warn(msg, FewFramesWarning, stacklevel=2)
        notes.append(msg)
    model = fit_model(raw, frames, cfg)
    nyq = fs / 2.0
    report = TrainingReport(
        n_signals=len(signals), n_gcis=raw.n_gcis, n_frames=frames.n_frames,
        n_dropped_edges=raw.n_dropped_edges, n_skipped_no_period=raw.n_skipped_no_period,
        crd=det.crd_curve(model.basis), constraint_bound=nyq / cfg.fm * cfg.f0_min,
        constraint_ok=True, highband_fraction=sto.highband_energy_fraction(frames),
        warnings=notes)
    return model, report


def fit_model(raw, frames, cfg):
    """Assemble a :class:`DsmModel` from pooled raw and normalized frames.

    The noise gain is calibrated so that, relative to a unit-energy first
    eigenresidual, a stochastic frame carries the training data's mean
    high-band energy divided by the first eigenvalue.
    """
    basis = det.pca_decompose(frames)
    k = min(cfg.k_det, basis.m)
    weights = det.mean_projection_weights(frames, basis, k)
    noise = sto.fit_noise_model(raw.frames, frames, cfg.noise_order)
    lam1 = max(float(basis.eigenvalues[0]), 1e-12)
    rho = sto.highband_energy_fraction(frames) / lam1
    hp = (cfg.fm, frames.sample_rate) if cfg.fm < frames.sample_rate / 2.0 else None
    shape_energy = (float(np.sum(noise.energy_envelope ** 2))
                    * sto.impulse_energy(noise.ar_coefficients, highpass=hp))
    gain = np.sqrt(rho / shape_energy) if shape_energy > 0 else 0.0
    noise = replace(noise, gain=float(gain))
    return DsmModel(basis=basis, noise=noise, fm=float(cfg.fm), f0_star=float(cfg.f0_star),
                    sample_rate=frames.sample_rate, k_det=k, f0_min=float(cfg.f0_min),
                    f0_max=float(cfg.f0_max), det_weights=weights, n_frames=frames.n_frames)


# ---------------------------------------------------------------------------
# frame construction
# ---------------------------------------------------------------------------


def _check_t0(model, t0):
    lo, hi = model.t0_range
    if not lo <= t0 <= hi:
        raise ValueError(f"target period {t0} samples outside [{lo}, {hi}]")


def make_deterministic_frame(model, t0):
    """Deterministic waveform resampled to ``2 * t0`` samples (GCI at ``t0``).

    The energy is rescaled to ``2 t0 / m`` times that of the stored waveform,
    as plain time scaling would give, so the content cut off by the
    anti-aliasing filter when raising the pitch does not shift the balance
    against the stochastic part.
    """
    t0 = int(t0)
    _check_t0(model, t0)
    wave = model.deterministic_waveform()
    if 2 * t0 == wave.size:
        return wave.copy()
    y = dsp.resample_frame(wave, 2 * t0)
    e = float(np.dot(y, y))
    if e > 0:
        y *= np.sqrt(2 * t0 / wave.size * float(np.dot(wave, wave)) / e)
    return y


def _resampled_envelope(model, t0):
    env = model.noise.energy_envelope
    if 2 * t0 != env.size:
        env = np.maximum(dsp.resample_frame(env, 2 * t0), 0.0)
        peak = env.max()
        if peak > 0:
            env = env / peak
    return env


_WARMUP = 1024


def make_stochastic_frame(model, t0, rng, envelope=None):
    """``e(t) * (h * n)(t)`` on ``2 * t0`` samples with fresh Gaussian noise.

    ``h`` is the fitted all-pole shaper followed by a causal high-pass at
    ``fm``.  ``envelope`` overrides the model's time envelope (test hook).
    """
    t0 = int(t0)
    _check_t0(model, t0)
    n = model.noise
    env = _resampled_envelope(model, t0) if envelope is None else np.asarray(envelope, float)
    white = rng.standard_normal(2 * t0 + _WARMUP)
    shaped = sps.lfilter([n.gain], n.ar_coefficients, white)
    hp = model.highpass
    if hp is not None:
        shaped = sps.sosfilt(sto.band_sos(*hp), shaped)
    return env * shaped[_WARMUP:]


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------


def synthesis_gci_times(f0, sample_rate):
    """Fractional GCI times (in samples) from a per-sample F0 contour
    (0 = unvoiced).

    The instantaneous frequency is integrated over each voiced run and a GCI
    is placed where the phase completes a cycle, interpolating linearly
    between the two samples that bracket the crossing.
    """
    f0 = np.asarray(f0, dtype=float)
    voiced = f0 > 0
    if not voiced.any():
        return np.zeros(0)
    edges = np.diff(np.concatenate([[0], voiced.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    out = []
    for a, b in zip(starts, stops):
        phase = np.concatenate([[0.0], np.cumsum(f0[a:b] / sample_rate)])
        cycles = np.floor(phase)
        hits = np.flatnonzero(np.diff(cycles) > 0)
        k = cycles[hits + 1]
        frac = (k - phase[hits]) / (phase[hits + 1] - phase[hits])
        out.append(a + hits - 1 + frac)
    return np.concatenate(out)


def synthesis_gcis(f0, sample_rate):
    """Integer GCI positions (nearest samples of :func:`synthesis_gci_times`)."""
    return np.rint(synthesis_gci_times(f0, sample_rate)).astype(np.int64)


_SHIFT_PAD = 8


def _shifter(frame):
    """Return ``f(delta)`` giving ``frame`` delayed by ``delta`` samples
    (|delta| <= 0.5), band-limited, with ``_SHIFT_PAD`` samples of margin on
    each side."""
    x = np.pad(frame, _SHIFT_PAD)
    n = x.size
    spec = np.fft.rfft(x)
    k = np.fft.rfftfreq(n)

    def shift(delta):
        if delta == 0.0:
            return x
        return np.fft.irfft(spec * np.exp(-2j * np.pi * k * delta), n)

    return shift


def synth_residual(model, plan, deterministic_only=False):
    """GCI-synchronous overlap-add of deterministic + stochastic frames, with
    white Gaussian noise in unvoiced regions.

    The summed excitation is scaled to unit mean power; loudness comes from
    the envelope gain at the filtering stage.
    """
    n = plan.length
    if n == 0 or plan.pitch.n_frames == 0:
        return AudioSignal(np.zeros(0), plan.pitch.sample_rate)
    fs = plan.pitch.sample_rate
    rng = np.random.default_rng(np.uint64(plan.rng_seed))
    f0 = plan.pitch.f0_at(np.arange(n))
    voiced = f0 > 0
    if voiced.any() and model is None:
        raise ValueError("a model is required to synthesize voiced excitation")
    out = np.zeros(n)
    if voiced.any():
        if model.sample_rate != fs:
            raise DataError(f"model sample rate {model.sample_rate} != plan sample rate {fs}")
        f0 = np.where(voiced, np.clip(f0, model.f0_min, model.f0_max), 0.0)
        times = synthesis_gci_times(f0, fs)
        lo, hi = model.t0_range
        noisy = not deterministic_only and model.noise.gain > 0
        wave = model.deterministic_waveform()
        rho = model.stochastic_energy() if noisy else 0.0
        scale = np.sqrt(model.m / (2.0 * (float(np.dot(wave, wave)) + rho)))
        pad = hi + 1 + _SHIFT_PAD
        buf = np.zeros(n + 2 * pad)
        cache, envs = {}, {}
        for t in times:
            g = int(np.rint(t))
            g = min(max(g, 0), n - 1)
            t0 = int(np.clip(round(fs / f0[g]), lo, hi))
            shift = cache.get(t0)
            if shift is None:
                shift = cache[t0] = _shifter(make_deterministic_frame(model, t0))
            frame = shift(float(t - g))
            if noisy:
                # truncating high-passed noise leaves a random DC offset per
                # frame, which the envelope filter would turn into rumble
                env = envs.get(t0)
                if env is None:
                    env = envs[t0] = _resampled_envelope(model, t0)
                noise = make_stochastic_frame(model, t0, rng)
                frame = frame.copy()
                frame[_SHIFT_PAD:-_SHIFT_PAD] += noise - env * (noise.sum() / env.sum())
            a = pad + g - t0 - _SHIFT_PAD
            buf[a : a + frame.size] += scale * frame
        out = buf[pad : pad + n]
    unvoiced = ~voiced
    if unvoiced.any():
        out = out + np.where(unvoiced, rng.standard_normal(n), 0.0)
    return AudioSignal(out, fs)


def check_envelope(env):
    """Raise ``ValueError`` naming the first envelope frame with an unstable
    synthesis filter."""
    for i, a in enumerate(env.coefs):
        if not lpc.is_stable(a):
            raise ValueError(f"unstable envelope frame {i}: synthesis filter has poles on or outside the unit circle")


def synthesis_filter(excitation, env, apply_gain=True):
    """Time-varying all-pole filtering ``g_n e / A_n`` of an excitation."""
    check_envelope(env)
    gains = env.gains if apply_gain else np.ones(env.n_frames)
    y = lpc.tv_allpole(excitation.samples, env.coefs, gains, env.frame_hop)
    return AudioSignal(y, excitation.sample_rate)


def synth_speech(model, plan, deterministic_only=False, peak=0.99):
    """Excitation through the plan's envelope; attenuated if the peak exceeds
    ``peak``."""
    res = synth_residual(model, plan, deterministic_only)
    if len(res) == 0:
        return res
    y = synthesis_filter(res, plan.envelope).samples
    top = np.max(np.abs(y))
    if top > peak:
        y = y * (peak / top)
    return AudioSignal(y, res.sample_rate)


# ---------------------------------------------------------------------------
# copy synthesis
# ---------------------------------------------------------------------------


def copy_synthesis(signal, cfg=None, model=None, pitch_scale=1.0, deterministic_only=False,
                   seed=None):
    """Analyze ``signal``, train on it (unless ``model`` is given) and
    resynthesize it from its own pitch and envelope.

    Returns ``(output, metrics)``.
    """
    cfg = cfg or RunConfig()
    fs = signal.sample_rate
    cfg.check(fs)
    if model is not None and model.sample_rate != fs:
        raise DataError(f"model sample rate {model.sample_rate} Hz does not match input {fs} Hz")
    res = an.analyze(signal, cfg)
    if model is None and res.pitch.voiced.any():
        raw = res.raw
        if len(raw) < MIN_COPY_FRAMES:
            raise DataError(
                f"too little voiced data: {len(raw)} residual frames (< {MIN_COPY_FRAMES}); "
                f"{CONVERGENCE_GUIDANCE}")
        frames = an.normalize_frames(raw, cfg.f0_star, cfg.fm, fs, cfg.f0_min)
        model = fit_model(raw, frames, cfg)
    plan = SynthesisPlan(res.pitch.scaled(pitch_scale), res.envelope,
                         cfg.rng_seed if seed is None else seed, len(signal))
    out = synth_speech(model, plan, deterministic_only)
    return out, copy_metrics(signal, out, cfg, reference=res)


def _median_f0(pitch):
    v = pitch.f0[pitch.voiced]
    return float(np.median(v)) if v.size else 0.0


def copy_metrics(original, output, cfg, reference=None):
    """F0, envelope distortion and band-wise spectral SNR of a resynthesis."""
    fs = original.sample_rate
    fm = min(cfg.fm, fs / 2.0)
    p_in = reference.pitch if reference is not None else an.estimate_pitch(original, cfg.pitch)
    p_out = an.estimate_pitch(output, cfg.pitch)
    f0_in, f0_out = _median_f0(p_in), _median_f0(p_out)

    e_in = reference.envelope if reference is not None else an.fit_envelope(original, cfg.envelope)
    e_out = an.fit_envelope(output, cfg.envelope)
    nfft = 1024
    freqs = np.fft.rfftfreq(nfft, 1.0 / fs)
    low = freqs < fm
    n_env = min(e_in.n_frames, e_out.n_frames)
    centres = np.arange(n_env) * e_in.frame_hop
    vin = p_in.voiced_mask(len(original))[np.minimum(centres, len(original) - 1)]
    vout = p_out.voiced_mask(len(output))[np.minimum(centres, len(output) - 1)]
    use = vin & vout & (e_in.gains[:n_env] > 0) & (e_out.gains[:n_env] > 0)
    dist = []
    for i in np.flatnonzero(use):
        d = e_in.response_db(i, nfft)[low] - e_out.response_db(i, nfft)[low]
        dist.append(np.sqrt(np.mean(d ** 2)))
    env_dist = float(np.mean(dist)) if dist else float("nan")

    _, s_in = sps.welch(original.samples, fs, nperseg=1024)
    _, s_out = sps.welch(output.samples, fs, nperseg=1024)
    f = np.fft.rfftfreq(1024, 1.0 / fs)

    def snr(mask):
        num = np.sum(s_in[mask])
        den = np.sum((np.sqrt(s_in[mask]) - np.sqrt(s_out[mask])) ** 2)
        return float(10 * np.log10(num / den)) if den > 0 and num > 0 else float("inf")

    def ratio(s):
        lo, hi = np.mean(s[(f > 0) & (f < fm)]), np.mean(s[f >= fm]) if np.any(f >= fm) else 0.0
        return float(10 * np.log10(lo / hi)) if hi > 0 and lo > 0 else float("inf")

    return {
        "f0_in": f0_in,
        "f0_out": f0_out,
        "f0_ratio": f0_out / f0_in if f0_in > 0 else float("nan"),
        "envelope_distortion_db": env_dist,
        "snr_low_db": snr((f > 0) & (f < fm)),
        "snr_high_db": snr(f >= fm),
        "band_ratio_in_db": ratio(s_in),
        "band_ratio_out_db": ratio(s_out),
    }
