"""Speaker identification from glottal signatures: RTSE distances, distance
matrices, fusion of the two channels and rank-based decisions."""

import warnings
from dataclasses import dataclass

import numpy as np

from . import analysis as an
from . import deterministic as det
from . import stochastic as sto
from .audio import DataError
from .config import CONVERGENCE_GUIDANCE, FewFramesWarning, RunConfig

EPSILON = 1e-12
CHANNELS = ("eigen", "envelope")


@dataclass(frozen=True)
class GlottalSignature:
    eigenresidual: np.ndarray
    energy_envelope: np.ndarray | None
    f0_star: float
    fm: float
    sample_rate: int
    n_frames_used: int
    label: str = ""
    higher: np.ndarray | None = None  # mu_2, mu_3, ... when requested

    @property
    def m(self):
        return self.eigenresidual.size

    @property
    def constants(self):
        return (float(self.f0_star), float(self.fm), int(self.sample_rate), int(self.m))

    def channel(self, name):
        """Waveform for ``eigen``, ``envelope`` or ``eigenK`` (K >= 1)."""
        if name == "envelope":
            if self.energy_envelope is None:
                raise DataError(f"signature {self.label!r} has no energy envelope")
            return self.energy_envelope
        if name == "eigen" or name == "eigen1":
            return self.eigenresidual
        if name.startswith("eigen") and name[5:].isdigit():
            k = int(name[5:])
            if self.higher is None or k - 2 >= len(self.higher):
                raise DataError(f"signature {self.label!r} holds no eigenresidual {k}")
            return self.higher[k - 2]
        raise ValueError(f"unknown channel {name!r}")


def rtse(estimate, reference):
    """Relative time squared error ``sum((est - ref)^2) / sum(ref^2)``."""
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {ref.shape}")
    den = float(np.dot(ref.ravel(), ref.ravel()))
    if den == 0.0:
        raise ValueError("undefined relative error: reference is all zeros")
    d = (est - ref).ravel()
    return float(np.dot(d, d) / den)


# ---------------------------------------------------------------------------
# signatures
# ---------------------------------------------------------------------------


def signature_from_frames(frames, n_eigen=1, label=""):
    """Signature of a normalized frame set (first eigenresidual + envelope)."""
    basis = det.pca_decompose(frames)
    envelope = None
    if frames.highband is not None and np.any(frames.highband):
        envelope = sto.fit_energy_envelope(frames.highband)
    higher = basis.eigenresiduals[1:n_eigen].copy() if n_eigen > 1 else None
    return GlottalSignature(basis.first.copy(), envelope, frames.f0_star, frames.fm,
                            frames.sample_rate, frames.n_frames, label, higher)


def corpus_frames(corpus, cfg, source_ids=None):
    signals = list(corpus)
    if not signals:
        raise DataError("empty corpus")
    fs = signals[0].sample_rate
    cfg.check(fs)
    raw = an.collect_frames(signals, cfg, source_ids)
    if len(raw) == 0:
        raise DataError("no voiced residual frames found")
    frames = an.normalize_frames(raw, cfg.f0_star, cfg.fm, fs, cfg.f0_min)
    if frames.n_frames < 2:
        raise DataError(f"insufficient frames: {frames.n_frames}")
    return frames


def extract_signature(corpus, cfg=None, label=""):
    """Glottal signature of a list of :class:`AudioSignal` from one speaker.

    Warns (:class:`FewFramesWarning`) below ``cfg.min_frames`` frames.  The
    energy envelope is absent when ``fm`` reaches the Nyquist frequency.
    """
    cfg = cfg or RunConfig()
    frames = corpus_frames(corpus, cfg)
    if frames.n_frames < cfg.min_frames:
        warnings.warn(f"signature {label!r} uses {frames.n_frames} frames "
                      f"(< {cfg.min_frames}); {CONVERGENCE_GUIDANCE}",
                      FewFramesWarning, stacklevel=2)
    return signature_from_frames(frames, cfg.n_eigen_signature, label)


# ---------------------------------------------------------------------------
# distance matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistanceMatrix:
    """``values[i, j]`` compares train signature ``i`` with test signature ``j``."""

    values: np.ndarray
    train_labels: tuple
    test_labels: tuple
    channel: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape != (len(self.train_labels), len(self.test_labels)):
            raise ValueError("distance matrix shape does not match its labels")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("distances must be finite and non-negative")

    @property
    def shape(self):
        return self.values.shape


def distance_matrix(train, test, channel="eigen"):
    """RTSE of every test signature against every train signature."""
    train, test = list(train), list(test)
    for i, a in enumerate(train):
        for j, b in enumerate(test):
            if a.constants != b.constants:
                raise DataError(
                    f"signature constants differ between train {i} ({a.label!r}: {a.constants}) "
                    f"and test {j} ({b.label!r}: {b.constants})")
    values = np.zeros((len(train), len(test)))
    for i, a in enumerate(train):
        ref = a.channel(channel)
        for j, b in enumerate(test):
            values[i, j] = rtse(b.channel(channel), ref)
    return DistanceMatrix(values, tuple(s.label for s in train), tuple(s.label for s in test),
                          channel)


def _check_pair(dx, dy, weight, name):
    if dx.values.shape != dy.values.shape:
        raise ValueError(f"shape mismatch: {dx.values.shape} vs {dy.values.shape}")
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {weight}")


def combine_mul(dx, dy, alpha=0.5):
    """``Dx^alpha * Dy^(1 - alpha)`` with distances floored at ``EPSILON``."""
    _check_pair(dx, dy, alpha, "alpha")
    if alpha == 1.0:
        v = dx.values.copy()
    elif alpha == 0.0:
        v = dy.values.copy()
    else:
        v = np.maximum(dx.values, EPSILON) ** alpha * np.maximum(dy.values, EPSILON) ** (1 - alpha)
    return DistanceMatrix(v, dx.train_labels, dx.test_labels, f"mul({alpha:g})")


def combine_add(dx, dy, beta=0.5):
    """``beta * Dx + (1 - beta) * Dy``."""
    _check_pair(dx, dy, beta, "beta")
    if beta == 1.0:
        v = dx.values.copy()
    elif beta == 0.0:
        v = dy.values.copy()
    else:
        v = beta * dx.values + (1 - beta) * dy.values
    return DistanceMatrix(v, dx.train_labels, dx.test_labels, f"add({beta:g})")


@dataclass
class Identification:
    predicted: np.ndarray  # train index per test column
    labels: list
    ranks: np.ndarray  # 1-based rank of the true speaker, 0 when absent from train
    accuracy: float


def identify(d):
    """Closest train signature for each test column (ties: lowest index)."""
    v = np.asarray(d.values, dtype=float)
    n_train, n_test = v.shape
    pred = np.argmin(v, axis=0) if n_train else np.zeros(n_test, dtype=int)
    labels = [d.train_labels[i] for i in pred]
    ranks = np.zeros(n_test, dtype=int)
    for j, lab in enumerate(d.test_labels):
        truth = [i for i, t in enumerate(d.train_labels) if t == lab]
        if truth:
            order = np.argsort(v[:, j], kind="stable")
            ranks[j] = int(np.flatnonzero(order == truth[0])[0]) + 1
    known = ranks > 0
    acc = float(np.mean(ranks[known] == 1)) if known.any() else 0.0
    return Identification(pred, labels, ranks, acc)


def separation_ratio(d):
    """Mean off-diagonal over mean diagonal distance of a square, aligned matrix."""
    v = np.asarray(d.values, dtype=float)
    if v.shape[0] != v.shape[1] or v.shape[0] < 2:
        raise ValueError("separation ratio needs a square matrix of size >= 2")
    diag = np.diag(v)
    off = v[~np.eye(v.shape[0], dtype=bool)]
    return float(off.mean() / max(diag.mean(), EPSILON))


def fuse(mats, fusion="mul", alpha=0.5, beta=0.5):
    dx, dy = mats["eigen"], mats["envelope"]
    if fusion == "mul":
        return combine_mul(dx, dy, alpha)
    if fusion == "add":
        return combine_add(dx, dy, beta)
    raise ValueError(f"unknown fusion {fusion!r}")


# ---------------------------------------------------------------------------
# analyses
# ---------------------------------------------------------------------------


def convergence_curve(frames, reference, sizes):
    """RTSE of signatures estimated on growing frame prefixes.

    Returns a list of ``(size, rtse_eigen, rtse_env)``; ``rtse_env`` is NaN
    when either side lacks an envelope.
    """
    out = []
    for n in sizes:
        n = int(n)
        if n < 2 or n > frames.n_frames:
            raise ValueError(f"size {n} outside [2, {frames.n_frames}]")
        sig = signature_from_frames(frames.head(n))
        r_env = float("nan")
        if sig.energy_envelope is not None and reference.energy_envelope is not None:
            r_env = rtse(sig.energy_envelope, reference.energy_envelope)
        out.append((n, rtse(sig.eigenresidual, reference.eigenresidual), r_env))
    return out


def phonetic_report(signals, classes, cfg=None):
    """Per-class signatures against the pooled signature.

    ``classes`` gives one class label per signal.  Returns a list of
    ``(label, n_frames, rtse_eigen, rtse_env)`` sorted by label.
    """
    cfg = cfg or RunConfig()
    classes = [str(c) for c in classes]
    if len(classes) != len(signals):
        raise ValueError("one class label per signal is required")
    frames = corpus_frames(signals, cfg, source_ids=classes)
    pooled = signature_from_frames(frames, label="pooled")
    ids = np.asarray(frames.source_ids)
    rows = []
    for lab in sorted(set(classes)):
        mask = ids == lab
        if mask.sum() < 2:
            rows.append((lab, int(mask.sum()), float("nan"), float("nan")))
            continue
        sig = signature_from_frames(frames.select(mask), label=lab)
        r_env = float("nan")
        if sig.energy_envelope is not None and pooled.energy_envelope is not None:
            r_env = rtse(sig.energy_envelope, pooled.energy_envelope)
        rows.append((lab, int(mask.sum()), rtse(sig.eigenresidual, pooled.eigenresidual), r_env))
    return rows
