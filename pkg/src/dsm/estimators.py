"""scikit-learn style wrappers around the analysis, vocoder and speaker-id
functions, with the input checks they share."""

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import analysis as an
from . import speakerid as sid
from . import vocoder
from .audio import AudioSignal, DataError
from .config import RunConfig


def check_signal(x, sample_rate=None):
    """Coerce ``x`` to :class:`AudioSignal`.

    Accepts an AudioSignal or a ``(samples, sample_rate)`` pair.
    """
    if isinstance(x, AudioSignal):
        sig = x
    elif isinstance(x, tuple) and len(x) == 2:
        sig = AudioSignal(np.asarray(x[0], dtype=float), int(x[1]))
    else:
        raise TypeError(f"expected AudioSignal or (samples, sample_rate), got {type(x).__name__}")
    if sig.samples.size == 0:
        raise DataError("empty signal")
    if not np.all(np.isfinite(sig.samples)):
        raise DataError("signal contains NaN or infinite samples")
    if sample_rate is not None and sig.sample_rate != sample_rate:
        raise DataError(f"sample rate {sig.sample_rate} Hz, expected {sample_rate} Hz")
    return sig


def check_signals(xs):
    """Non-empty list of signals sharing one sample rate."""
    if isinstance(xs, (AudioSignal, tuple)):
        xs = [xs]
    xs = list(xs)
    if not xs:
        raise DataError("empty corpus")
    first = check_signal(xs[0])
    return [first] + [check_signal(x, first.sample_rate) for x in xs[1:]]


def check_signatures(sigs):
    sigs = list(sigs)
    if not sigs:
        raise DataError("no signatures")
    for s in sigs:
        if not isinstance(s, sid.GlottalSignature):
            raise TypeError(f"expected GlottalSignature, got {type(s).__name__}")
    return sigs


class _ConfigMixin:
    def _config(self):
        return RunConfig(f0_star=self.f0_star, fm=self.fm, f0_min=self.f0_min,
                         f0_max=self.f0_max, lp_order=self.lp_order,
                         noise_order=getattr(self, "noise_order", 12),
                         k_det=getattr(self, "k_det", 1),
                         min_frames=getattr(self, "min_frames", 1000),
                         rng_seed=getattr(self, "random_state", 0) or 0,
                         gci_polarity=self.gci_polarity,
                         n_eigen_signature=getattr(self, "n_eigen", 1))


class ResidualFrameTransformer(_ConfigMixin, TransformerMixin, BaseEstimator):
    """Signals to the N x m matrix of normalized residual frames."""

    def __init__(self, f0_star=100.0, fm=4000.0, f0_min=60.0, f0_max=400.0, lp_order=None,
                 gci_polarity="negative"):
        self.f0_star = f0_star
        self.fm = fm
        self.f0_min = f0_min
        self.f0_max = f0_max
        self.lp_order = lp_order
        self.gci_polarity = gci_polarity

    def fit(self, X, y=None):
        sigs = check_signals(X)
        self._config().check(sigs[0].sample_rate)
        self.sample_rate_ = sigs[0].sample_rate
        self.m_ = an.frame_length(self.sample_rate_, self.f0_star)
        return self

    def transform_frames(self, X):
        check_is_fitted(self, "m_")
        sigs = check_signals(X)
        return sid.corpus_frames(sigs, self._config())

    def transform(self, X):
        return self.transform_frames(X).frames


class DSMVocoder(_ConfigMixin, BaseEstimator):
    """Train a speaker model with :meth:`fit`; synthesize or copy-synthesize."""

    def __init__(self, f0_star=100.0, fm=4000.0, f0_min=60.0, f0_max=400.0, lp_order=None,
                 noise_order=12, k_det=1, min_frames=1000, gci_polarity="negative",
                 random_state=0):
        self.f0_star = f0_star
        self.fm = fm
        self.f0_min = f0_min
        self.f0_max = f0_max
        self.lp_order = lp_order
        self.noise_order = noise_order
        self.k_det = k_det
        self.min_frames = min_frames
        self.gci_polarity = gci_polarity
        self.random_state = random_state

    def fit(self, X, y=None):
        sigs = check_signals(X)
        self.model_, self.report_ = vocoder.train_model(sigs, self._config())
        return self

    def synthesize(self, plan, deterministic_only=False):
        check_is_fitted(self, "model_")
        return vocoder.synth_speech(self.model_, plan, deterministic_only)

    def copy_synthesis(self, signal, pitch_scale=1.0, deterministic_only=False):
        """Resynthesize ``signal`` with the fitted model; returns ``(audio, metrics)``."""
        check_is_fitted(self, "model_")
        sig = check_signal(signal, self.model_.sample_rate)
        return vocoder.copy_synthesis(sig, self._config(), self.model_, pitch_scale,
                                      deterministic_only)


class GlottalSignatureExtractor(_ConfigMixin, TransformerMixin, BaseEstimator):
    """Each item of ``X`` (a list of signals from one speaker) to a signature."""

    def __init__(self, f0_star=100.0, fm=4000.0, f0_min=60.0, f0_max=400.0, lp_order=None,
                 min_frames=1000, n_eigen=1, gci_polarity="negative"):
        self.f0_star = f0_star
        self.fm = fm
        self.f0_min = f0_min
        self.f0_max = f0_max
        self.lp_order = lp_order
        self.min_frames = min_frames
        self.n_eigen = n_eigen
        self.gci_polarity = gci_polarity

    def fit(self, X, y=None):
        return self

    def transform(self, X, labels=None):
        cfg = self._config()
        X = list(X)
        labels = [str(i) for i in range(len(X))] if labels is None else [str(v) for v in labels]
        return [sid.extract_signature(check_signals(c), cfg, lab) for c, lab in zip(X, labels)]

    def fit_transform(self, X, y=None):
        """``y`` (optional) labels the signatures."""
        return self.fit(X).transform(X, labels=y)


class SignatureIdentifier(ClassifierMixin, BaseEstimator):
    """Nearest-signature speaker identification.

    ``channel`` is ``eigen``, ``envelope`` or ``both`` (fused with ``fusion``
    = ``mul`` (weight ``alpha``) or ``add`` (weight ``beta``)).
    """

    def __init__(self, channel="both", fusion="mul", alpha=0.5, beta=0.5):
        self.channel = channel
        self.fusion = fusion
        self.alpha = alpha
        self.beta = beta

    def fit(self, X, y):
        sigs = check_signatures(X)
        y = [str(v) for v in y]
        if len(y) != len(sigs):
            raise ValueError("one label per signature is required")
        self.train_ = [replace(s, label=lab) for s, lab in zip(sigs, y)]
        self.classes_ = np.array(sorted(set(y)))
        return self

    def distance_matrix(self, X):
        check_is_fitted(self, "train_")
        test = check_signatures(X)
        if self.channel in ("eigen", "envelope"):
            return sid.distance_matrix(self.train_, test, self.channel)
        if self.channel != "both":
            raise ValueError(f"unknown channel {self.channel!r}")
        mats = {c: sid.distance_matrix(self.train_, test, c) for c in sid.CHANNELS}
        return sid.fuse(mats, self.fusion, self.alpha, self.beta)

    def predict(self, X):
        d = self.distance_matrix(X)
        return np.array(sid.identify(d).labels)

