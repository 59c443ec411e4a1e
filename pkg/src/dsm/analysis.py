"""Speech analysis: from a waveform to the pitch-synchronous, prosody-normalized
residual frame dataset used to train the excitation model."""

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from . import dsp, lpc
from .audio import AudioSignal, DataError
from .config import EnvelopeConfig, PitchConfig, require_pitch_constraint


@dataclass(frozen=True)
class PitchTrack:
    """Frame-wise F0; frame ``i`` is centred on sample ``i * frame_hop``."""

    frame_hop: int
    f0: np.ndarray
    sample_rate: int
    strength: np.ndarray | None = None

    @property
    def voiced(self):
        return self.f0 > 0

    @property
    def n_frames(self):
        return self.f0.size

    def scaled(self, factor):
        return PitchTrack(self.frame_hop, self.f0 * factor, self.sample_rate, self.strength)

    def voiced_mask(self, n_samples):
        """Per-sample voicing from the nearest pitch frame."""
        idx = np.clip(np.rint(np.arange(n_samples) / self.frame_hop).astype(int),
                      0, self.n_frames - 1)
        return self.voiced[idx]

    def f0_at(self, positions):
        """Linearly interpolated F0 through voiced frames; 0 where unvoiced."""
        positions = np.asarray(positions, dtype=float)
        voiced = self.voiced
        if not voiced.any():
            return np.zeros_like(positions)
        centres = np.arange(self.n_frames) * self.frame_hop
        f = np.interp(positions, centres[voiced], self.f0[voiced])
        idx = np.clip(np.rint(positions / self.frame_hop).astype(int), 0, self.n_frames - 1)
        return np.where(voiced[idx], f, 0.0)


@dataclass(frozen=True)
class GciSequence:
    """Integer GCI sample indices."""

    positions: np.ndarray

    def __len__(self):
        return self.positions.size


@dataclass(frozen=True)
class EnvelopeTrack:
    """Frame-wise all-pole envelope, frame ``i`` centred on ``i * frame_hop``.

    ``coefs`` holds monic inverse-filter polynomials (pre-emphasis folded in)
    and ``gains`` the excitation RMS that reproduces each frame's level.
    """

    frame_hop: int
    coefs: np.ndarray
    gains: np.ndarray
    sample_rate: int

    @property
    def order(self):
        return self.coefs.shape[1] - 1

    @property
    def n_frames(self):
        return self.coefs.shape[0]

    @classmethod
    def identity(cls, n_frames, order, frame_hop, sample_rate, gain=1.0):
        coefs = np.zeros((n_frames, order + 1))
        coefs[:, 0] = 1.0
        return cls(frame_hop, coefs, np.full(n_frames, float(gain)), sample_rate)

    @classmethod
    def constant(cls, a, gain, n_frames, frame_hop, sample_rate):
        coefs = np.tile(np.asarray(a, dtype=float), (n_frames, 1))
        return cls(frame_hop, coefs, np.full(n_frames, float(gain)), sample_rate)

    def response_db(self, frame, nfft=1024):
        mag = lpc.allpole_response(self.coefs[frame], self.gains[frame], nfft)
        return 20.0 * np.log10(np.maximum(mag, 1e-12))


@dataclass
class RawFrames:
    """GCI-centred, Blackman-windowed two-period residual frames."""

    frames: list
    gcis: np.ndarray
    t0: np.ndarray
    source_ids: list
    sample_rate: int
    n_gcis: int = 0
    n_dropped_edges: int = 0
    n_skipped_no_period: int = 0

    def __len__(self):
        return len(self.frames)

    @classmethod
    def concat(cls, parts, sample_rate):
        parts = list(parts)
        return cls(
            frames=[f for p in parts for f in p.frames],
            gcis=np.concatenate([p.gcis for p in parts]) if parts else np.zeros(0, int),
            t0=np.concatenate([p.t0 for p in parts]) if parts else np.zeros(0, int),
            source_ids=[s for p in parts for s in p.source_ids],
            sample_rate=sample_rate,
            n_gcis=sum(p.n_gcis for p in parts),
            n_dropped_edges=sum(p.n_dropped_edges for p in parts),
            n_skipped_no_period=sum(p.n_skipped_no_period for p in parts),
        )

    def subset(self, mask):
        idx = np.flatnonzero(mask)
        return RawFrames([self.frames[i] for i in idx], self.gcis[idx], self.t0[idx],
                         [self.source_ids[i] for i in idx], self.sample_rate, len(idx))


@dataclass
class ResidualFrameSet:
    """N x m matrix of unit-energy residual frames normalized to ``f0_star``.

    ``highband`` (same shape, optional) holds the frames' content above
    ``fm``, high-passed at their original pitch before resampling.
    """

    frames: np.ndarray
    f0_star: float
    fm: float
    sample_rate: int
    source_ids: list = field(default_factory=list)
    highband: np.ndarray | None = None
    t0: np.ndarray | None = None

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def m(self):
        return self.frames.shape[1]

    def head(self, n):
        return ResidualFrameSet(
            self.frames[:n], self.f0_star, self.fm, self.sample_rate, self.source_ids[:n],
            None if self.highband is None else self.highband[:n],
            None if self.t0 is None else self.t0[:n])

    def select(self, mask):
        idx = np.flatnonzero(mask)
        return ResidualFrameSet(
            self.frames[idx], self.f0_star, self.fm, self.sample_rate,
            [self.source_ids[i] for i in idx],
            None if self.highband is None else self.highband[idx],
            None if self.t0 is None else self.t0[idx])


def frame_length(sample_rate, f0_star):
    """Normalized frame length ``m = round(2 * fs / f0_star)``."""
    return int(round(2.0 * sample_rate / f0_star))


# ---------------------------------------------------------------------------
# pitch
# ---------------------------------------------------------------------------


#: A shorter lag wins when its NCCF peak reaches this fraction of the best one.
OCTAVE_RATIO = 0.8


def estimate_pitch(signal, cfg=None, chunk=2048):
    """Normalized cross-correlation pitch tracker.

    Each 30 ms frame is correlated against the following samples for every
    lag in the admissible range.  The shortest lag whose peak reaches
    ``OCTAVE_RATIO`` of the global maximum is kept (guards against period
    doubling), refined by parabolic interpolation, and the frame is voiced when that peak exceeds
    the voicing threshold.  A 5-frame median filter removes isolated octave
    jumps and voicing blips.
    """
    cfg = cfg or PitchConfig()
    x = signal.samples
    fs = signal.sample_rate
    win = int(round(cfg.window_ms * fs / 1000.0))
    hop = int(round(cfg.hop_ms * fs / 1000.0))
    if x.size <= win:
        raise DataError(f"insufficient samples: {x.size} <= one analysis window ({win})")
    lag_min = max(2, int(np.floor(fs / cfg.f0_max)))
    lag_max = int(np.ceil(fs / cfg.f0_min))
    span = win + lag_max + 1
    n_frames = x.size // hop + 1
    xp = np.concatenate([np.zeros(win // 2), x, np.zeros(span + hop)])
    nfft = 1 << int(np.ceil(np.log2(span + 1)))
    sq_cum = np.concatenate([[0.0], np.cumsum(xp * xp)])

    peaks = np.zeros(n_frames)
    lags = np.zeros(n_frames)
    energy = np.zeros(n_frames)
    offsets = np.arange(span)
    for start in range(0, n_frames, chunk):
        stop = min(start + chunk, n_frames)
        starts = np.arange(start, stop) * hop
        seg = xp[starts[:, None] + offsets[None, :]]
        tmpl = seg[:, :win]
        corr = np.fft.irfft(np.conj(np.fft.rfft(tmpl, nfft)) * np.fft.rfft(seg, nfft), nfft)
        corr = corr[:, : lag_max + 1]
        e0 = sq_cum[starts + win] - sq_cum[starts]
        lag_idx = np.arange(lag_max + 1)
        e_lag = sq_cum[starts[:, None] + lag_idx[None, :] + win] - sq_cum[starts[:, None] + lag_idx]
        denom = np.sqrt(np.maximum(e0[:, None] * e_lag, 0.0))
        nccf = np.where(denom > 1e-20, corr / np.where(denom > 1e-20, denom, 1.0), 0.0)
        energy[start:stop] = e0
        p, lg = _pick_periods(nccf, lag_min, lag_max)
        peaks[start:stop] = p
        lags[start:stop] = lg

    floor = energy.max() * 10.0 ** (cfg.silence_db / 10.0) if energy.max() > 0 else np.inf
    voiced = (peaks >= cfg.voicing_threshold) & (energy > floor) & (lags > 0)
    f0 = np.where(voiced, fs / np.where(lags > 0, lags, 1.0), 0.0)
    if cfg.median_width > 1 and f0.size >= cfg.median_width:
        f0 = sps.medfilt(f0, cfg.median_width)
    f0 = np.where((f0 >= cfg.f0_min) & (f0 <= cfg.f0_max), f0, 0.0)
    return PitchTrack(hop, f0, fs, peaks)


def _pick_periods(nccf, lag_min, lag_max):
    """Per row: (peak value, refined lag) of the preferred NCCF maximum."""
    n = nccf.shape[0]
    c = nccf[:, lag_min - 1 : lag_max + 2]
    mid = c[:, 1:-1]
    is_peak = (mid > c[:, :-2]) & (mid >= c[:, 2:])
    vals = np.where(is_peak, mid, -np.inf)
    best = vals.max(axis=1)
    ok = np.isfinite(best) & (best > 0)
    good = is_peak & (vals >= OCTAVE_RATIO * best[:, None])
    first = np.argmax(good, axis=1)
    rows = np.arange(n)
    lag = lag_min + first
    y0 = nccf[rows, lag - 1]
    y1 = nccf[rows, lag]
    y2 = nccf[rows, np.minimum(lag + 1, nccf.shape[1] - 1)]
    den = y0 - 2.0 * y1 + y2
    shift = np.where(np.abs(den) > 1e-12, 0.5 * (y0 - y2) / np.where(np.abs(den) > 1e-12, den, 1.0), 0.0)
    shift = np.clip(shift, -0.5, 0.5)
    peak = np.where(ok, y1 - 0.25 * (y0 - y2) * shift, 0.0)
    return peak, np.where(ok, lag + shift, 0.0)


# ---------------------------------------------------------------------------
# spectral envelope and inverse filtering
# ---------------------------------------------------------------------------


def fit_envelope(signal, cfg=None):
    """Autocorrelation-method all-pole envelope on pre-emphasized Hamming frames.

    The pre-emphasis ``1 - b z^-1`` is folded into each returned polynomial,
    so ``coefs`` whitens the original (not pre-emphasized) signal and the
    synthesis filter ``gain / A(z)`` restores its spectral tilt.
    """
    cfg = cfg or EnvelopeConfig()
    fs = signal.sample_rate
    order = cfg.resolved_order(fs)
    hop = max(1, int(round(cfg.hop_ms * fs / 1000.0)))
    win = max(order + 1, int(round(cfg.window_ms * fs / 1000.0)))
    x = signal.samples
    if cfg.preemphasis:
        x = np.concatenate([x[:1], x[1:] - cfg.preemphasis * x[:-1]])
    n_frames = x.size // hop + 2
    xp = np.concatenate([np.zeros(win // 2), x, np.zeros(win + 2 * hop)])
    window = np.hamming(win)
    idx = (np.arange(n_frames) * hop)[:, None] + np.arange(win)[None, :]
    frames = xp[idx] * window
    r = lpc.autocorrelation(frames, order)
    # silence (relative to the loudest frame) gets the identity envelope
    scale = r[:, 0].max() if r.size else 0.0
    dead = r[:, 0] <= max(scale * 1e-12, 1e-300)
    r[dead] = 0.0
    a, err, _ = lpc.levinson(r, order, white_noise=1e-9)
    gains = np.sqrt(err / np.sum(window ** 2))
    gains[dead] = 0.0
    if cfg.preemphasis:
        a = np.apply_along_axis(lambda row: np.convolve(row, [1.0, -cfg.preemphasis]), 1, a)
        a[dead, 1:] = 0.0
    return EnvelopeTrack(hop, a, gains, fs)


def inverse_filter(signal, env, apply_gain=False):
    """Residual by frame-wise inverse (FIR) filtering with overlap-add.

    With ``apply_gain`` the result is also divided by the envelope gain, which
    makes this the exact inverse of :func:`dsm.vocoder.synthesis_filter`.
    """
    if env.sample_rate != signal.sample_rate:
        raise DataError("envelope and signal sample rates differ")
    e = lpc.tv_fir(signal.samples, env.coefs, env.frame_hop)
    if apply_gain:
        g = lpc.interpolated_gain(env.gains, env.frame_hop, e.size)
        e = np.where(g > 0, e / np.where(g > 0, g, 1.0), 0.0)
    return AudioSignal(e, signal.sample_rate)


# ---------------------------------------------------------------------------
# glottal closure instants
# ---------------------------------------------------------------------------


def detect_gci(signal, pitch, residual=None, polarity="negative", lp_order=None,
               weak_ratio=0.1, band_hz=None):
    """Simplified mean-based-signal GCI detector.

    A mean-based signal (speech smoothed by a Blackman window of 1.75 mean
    periods) oscillates once per glottal cycle.  Its local minima give one
    search interval per cycle; the GCI is the strongest residual peak of the
    chosen polarity inside it.  Intervals are re-centred on the typical
    minimum-to-GCI phase so that interval edges fall between GCIs.  Peaks
    weaker than ``weak_ratio`` times the median peak of their voiced run are
    discarded.  With ``band_hz`` the peaks are picked on the residual
    low-passed at that frequency, which keeps high-band noise from moving them.
    """
    fs = signal.sample_rate
    x = signal.samples
    voiced = pitch.voiced_mask(x.size)
    if not voiced.any():
        return GciSequence(np.zeros(0, dtype=np.int64))
    f0v = pitch.f0[pitch.voiced]
    f0_lo = max(float(f0v.min()) * 0.8, 1.0)
    f0_hi = float(f0v.max()) * 1.25
    mean_t0 = fs / float(np.mean(f0v))
    if residual is None:
        order = lp_order or max(2, int(round(fs / 1000.0)) + 2)
        env = fit_envelope(signal, EnvelopeConfig(order=order))
        residual = inverse_filter(signal, env)
    res = residual.samples if isinstance(residual, AudioSignal) else np.asarray(residual, float)
    if polarity == "auto":
        polarity = _residual_polarity(res, voiced)
    sign = -1.0 if polarity == "negative" else 1.0
    if band_hz is not None and band_hz < fs / 2.0:
        res = dsp.lowpass_zero_phase(res, band_hz, fs)
    score = sign * res

    wlen = int(round(1.75 * mean_t0)) | 1
    w = np.blackman(wlen)
    mbs = np.convolve(x, w / w.sum(), mode="same")
    t0_min = fs / f0_hi
    minima, _ = sps.find_peaks(-mbs, distance=max(1, int(0.6 * t0_min)))
    minima = minima[voiced[minima]]
    if minima.size < 2:
        return GciSequence(np.zeros(0, dtype=np.int64))

    periods = np.diff(minima)
    t0_max = fs / f0_lo
    valid = (periods >= t0_min * 0.8) & (periods <= t0_max * 1.2)
    # pass 1: typical phase of the GCI inside a minimum-to-minimum cycle
    phases = []
    for a, b in zip(minima[:-1][valid], minima[1:][valid]):
        phases.append((a + np.argmax(score[a:b]) - a) / (b - a))
    if not phases:
        return GciSequence(np.zeros(0, dtype=np.int64))
    ang = 2.0 * np.pi * np.asarray(phases)
    phase = (np.angle(np.mean(np.exp(1j * ang))) / (2.0 * np.pi)) % 1.0

    # pass 2: intervals of one local period centred on the predicted GCI
    local = np.empty(minima.size)
    local[:-1] = np.where(valid, periods, np.nan)
    local[-1] = np.nan
    back = np.concatenate([[np.nan], np.where(valid, periods, np.nan)])
    local = np.where(np.isnan(local), back, local)
    gcis = []
    strengths = []
    n = x.size
    for a, t in zip(minima, local):
        if not np.isfinite(t):
            continue
        centre = a + phase * t
        lo = int(max(0, np.floor(centre - t / 2)))
        hi = int(min(n, np.ceil(centre + t / 2)))
        if hi - lo < 2:
            continue
        g = lo + int(np.argmax(score[lo:hi]))
        if voiced[g]:
            gcis.append(g)
            strengths.append(score[g])
    if not gcis:
        return GciSequence(np.zeros(0, dtype=np.int64))
    order = np.argsort(gcis, kind="stable")
    gcis = np.asarray(gcis)[order]
    strengths = np.asarray(strengths)[order]
    gcis, strengths = _enforce_spacing(gcis, strengths, fs / f0_hi * 0.6)
    return GciSequence(_drop_weak(gcis, strengths, 1.5 * t0_max, weak_ratio))


def _enforce_spacing(gcis, strengths, min_gap):
    keep_g = [int(gcis[0])]
    keep_s = [strengths[0]]
    for g, s in zip(gcis[1:], strengths[1:]):
        if g - keep_g[-1] < min_gap:
            if s > keep_s[-1]:
                keep_g[-1], keep_s[-1] = int(g), s
            continue
        keep_g.append(int(g))
        keep_s.append(s)
    return np.asarray(keep_g, dtype=np.int64), np.asarray(keep_s)


def _drop_weak(gcis, strengths, max_gap, ratio):
    # peaks far below the typical peak of their voiced run are decay tails
    if gcis.size == 0 or ratio <= 0:
        return gcis
    breaks = np.flatnonzero(np.diff(gcis) > max_gap) + 1
    keep = np.ones(gcis.size, dtype=bool)
    for run in np.split(np.arange(gcis.size), breaks):
        ref = np.median(strengths[run])
        keep[run] = strengths[run] >= ratio * ref
    return gcis[keep]


def _residual_polarity(res, voiced):
    r = res[voiced]
    r = r - r.mean()
    sd = r.std()
    if sd == 0:
        return "negative"
    skew = np.mean((r / sd) ** 3)
    return "positive" if skew > 0 else "negative"


# ---------------------------------------------------------------------------
# framing and prosody normalization
# ---------------------------------------------------------------------------


def local_periods(gcis, pitch, f0_min, f0_max):
    """Local period at each GCI, or 0 where none can be established.

    Uses the distance to the nearest neighbouring GCI when that distance is a
    plausible period, otherwise the pitch track's F0 at the GCI.
    """
    fs = pitch.sample_rate
    lo, hi = fs / f0_max, fs / f0_min
    g = np.asarray(gcis, dtype=float)
    if g.size == 0:
        return np.zeros(0, dtype=np.int64)
    gaps = np.full((2, g.size), np.inf)
    if g.size > 1:
        d = np.diff(g)
        gaps[0, 1:] = d
        gaps[1, :-1] = d
    near = gaps.min(axis=0)
    f0 = pitch.f0_at(g)
    from_pitch = np.where(f0 > 0, fs / np.where(f0 > 0, f0, 1.0), 0.0)
    t0 = np.where((near >= lo) & (near <= hi), near, from_pitch)
    t0 = np.where(t0 > 0, np.clip(t0, lo, hi), 0.0)
    return np.rint(t0).astype(np.int64)


def extract_frames(residual, gcis, pitch, f0_min=60.0, f0_max=400.0, source_id=""):
    """Cut one GCI-centred, two-period Blackman-windowed frame per GCI.

    Frames reaching past either signal edge are dropped; GCIs without a
    usable local period are skipped.  Both counts are reported.
    """
    r = residual.samples
    positions = gcis.positions if isinstance(gcis, GciSequence) else np.asarray(gcis)
    t0 = local_periods(positions, pitch, f0_min, f0_max)
    frames, kept_g, kept_t = [], [], []
    dropped = skipped = 0
    windows = {}
    for g, t in zip(positions, t0):
        if t <= 0:
            skipped += 1
            continue
        start, stop = int(g) - int(t), int(g) + int(t)
        if start < 0 or stop > r.size:
            dropped += 1
            continue
        w = windows.get(t)
        if w is None:
            w = windows[t] = dsp.blackman_periodic(2 * t)
        frames.append(r[start:stop] * w)
        kept_g.append(int(g))
        kept_t.append(int(t))
    return RawFrames(frames, np.asarray(kept_g, dtype=np.int64), np.asarray(kept_t, dtype=np.int64),
                     [source_id] * len(frames), residual.sample_rate, len(positions),
                     dropped, skipped)


def normalize_frames(raw, f0_star, fm, sample_rate, f0_min, highband=True):
    """Resample every frame to ``m = round(2 fs / f0_star)`` samples and scale
    it to unit energy.

    Raises :class:`~dsm.config.ConfigError` when ``f0_star`` is too high for
    ``fm`` and ``f0_min`` (the deterministic band would no longer reach
    ``fm`` after stretching a frame to the lowest pitch).
    """
    require_pitch_constraint(f0_star, fm, sample_rate, f0_min)
    m = frame_length(sample_rate, f0_star)
    frames = list(raw.frames) if isinstance(raw, RawFrames) else list(raw)
    out = np.zeros((len(frames), m))
    hb = np.zeros((len(frames), m)) if highband else None
    keep = np.ones(len(frames), dtype=bool)
    nyq = sample_rate / 2.0
    for i, f in enumerate(frames):
        e = np.sqrt(np.dot(f, f))
        if e <= 0:
            keep[i] = False
            continue
        y = dsp.resample_frame(f, m)
        ny = np.sqrt(np.dot(y, y))
        if ny <= 0:
            keep[i] = False
            continue
        out[i] = y / ny
        if highband and fm < nyq:
            # same scale as the full-band row, so row energy = high-band share
            h = dsp.highpass_zero_phase(f, fm, sample_rate)
            hb[i] = dsp.resample_frame(h, m) / ny
    ids = raw.source_ids if isinstance(raw, RawFrames) else [""] * len(frames)
    t0 = raw.t0 if isinstance(raw, RawFrames) else np.array([len(f) // 2 for f in frames])
    idx = np.flatnonzero(keep)
    return ResidualFrameSet(
        out[idx], float(f0_star), float(fm), int(sample_rate), [ids[i] for i in idx],
        None if hb is None or fm >= nyq else hb[idx], np.asarray(t0)[idx])


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


@dataclass
class Analysis:
    pitch: PitchTrack
    envelope: EnvelopeTrack
    residual: AudioSignal
    gcis: GciSequence
    raw: RawFrames


def analyze(signal, cfg, source_id=""):
    """Pitch, envelope, residual, GCIs and raw frames for one utterance."""
    pitch = estimate_pitch(signal, cfg.pitch)
    env = fit_envelope(signal, cfg.envelope)
    residual = inverse_filter(signal, env)
    gcis = detect_gci(signal, pitch, residual=residual, polarity=cfg.gci_polarity,
                      band_hz=cfg.fm)
    raw = extract_frames(residual, gcis, pitch, cfg.f0_min, cfg.f0_max, source_id)
    return Analysis(pitch, env, residual, gcis, raw)


def collect_frames(signals, cfg, source_ids=None):
    """Analyze a corpus and pool its raw residual frames."""
    signals = list(signals)
    if not signals:
        raise DataError("empty corpus")
    rate = signals[0].sample_rate
    if source_ids is None:
        source_ids = [str(i) for i in range(len(signals))]
    parts = []
    for sig, sid in zip(signals, source_ids):
        if sig.sample_rate != rate:
            raise DataError(f"mixed sample rates in corpus ({sig.sample_rate} vs {rate})")
        parts.append(analyze(sig, cfg, sid).raw)
    return RawFrames.concat(parts, rate)
