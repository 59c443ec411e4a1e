"""Eigenresiduals: PCA of the normalized residual frames (no mean removal),
cumulative relative dispersion and truncated reconstruction."""

from dataclasses import dataclass

import numpy as np

from .audio import DataError
from .config import validate_pitch_constraint  # noqa: F401  (re-exported)


@dataclass(frozen=True)
class EigenBasis:
    """Orthonormal eigenresiduals (rows, by descending eigenvalue)."""

    eigenresiduals: np.ndarray
    eigenvalues: np.ndarray
    f0_star: float

    @property
    def m(self):
        return self.eigenresiduals.shape[1]

    @property
    def first(self):
        return self.eigenresiduals[0]


def second_moment(frames, chunk=4096):
    """``F^T F / N`` accumulated over row chunks in a fixed order."""
    frames = np.asarray(frames, dtype=float)
    n, m = frames.shape
    acc = np.zeros((m, m))
    for start in range(0, n, chunk):
        block = frames[start : start + chunk]
        acc += block.T @ block
    return acc / n


def orient(vectors, centre):
    """Flip each row so its sample at ``centre`` is <= 0.

    Rows whose centre sample is numerically zero instead get their first
    non-negligible component positive.
    """
    vectors = np.array(vectors, dtype=float)
    for i, v in enumerate(vectors):
        tol = 1e-12 * max(np.abs(v).max(), 1e-300)
        c = v[centre]
        if abs(c) > tol:
            if c > 0:
                vectors[i] = -v
        else:
            nz = np.flatnonzero(np.abs(v) > tol)
            if nz.size and v[nz[0]] < 0:
                vectors[i] = -v
    return vectors


def pca_decompose(frames, f0_star=None):
    """Eigen-decompose the second-moment matrix of a residual frame set.

    Accepts a :class:`~dsm.analysis.ResidualFrameSet` or an N x m array.
    Eigenvalues below zero (round-off) are clamped to 0.
    """
    matrix = getattr(frames, "frames", frames)
    if f0_star is None:
        f0_star = getattr(frames, "f0_star", float("nan"))
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise DataError(f"insufficient frames for PCA: need at least 2, got {matrix.shape[0] if matrix.ndim == 2 else 0}")
    cov = second_moment(matrix)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals, kind="stable")[::-1]
    vals = np.maximum(vals[order], 0.0)
    vecs = orient(vecs[:, order].T, matrix.shape[1] // 2)
    return EigenBasis(vecs, vals, float(f0_star))


def crd(basis, k):
    """Fraction of the total eigenvalue mass carried by the first ``k`` axes."""
    vals = basis.eigenvalues if isinstance(basis, EigenBasis) else np.asarray(basis)
    m = vals.size
    if not 1 <= k <= m:
        raise ValueError(f"k must lie in [1, {m}], got {k}")
    total = vals.sum()
    if total <= 0:
        return 1.0
    if k == m:
        return 1.0
    return float(min(vals[:k].sum() / total, 1.0))


def crd_curve(basis):
    """CRD for every ``k = 1..m`` (non-decreasing, ends exactly at 1)."""
    vals = basis.eigenvalues
    total = vals.sum()
    if total <= 0:
        return np.ones(vals.size)
    curve = np.minimum(np.cumsum(vals) / total, 1.0)
    curve = np.maximum.accumulate(curve)
    curve[-1] = 1.0
    return curve


def reconstruct(frame, basis, k):
    """Projection of ``frame`` onto the span of the first ``k`` eigenresiduals."""
    frame = np.asarray(frame, dtype=float)
    if frame.shape != (basis.m,):
        raise ValueError(f"frame length {frame.shape} does not match basis length {basis.m}")
    if not 1 <= k <= basis.m:
        raise ValueError(f"k must lie in [1, {basis.m}], got {k}")
    mu = basis.eigenresiduals[:k]
    return (mu @ frame) @ mu


def mean_projection_weights(frames, basis, k):
    """Projections of the mean frame on the first ``k`` eigenresiduals,
    scaled so the first weight is 1 (used for multi-eigenresidual synthesis)."""
    mean = np.asarray(getattr(frames, "frames", frames), dtype=float).mean(axis=0)
    proj = basis.eigenresiduals[:k] @ mean
    if abs(proj[0]) < 1e-300:
        w = np.zeros(k)
        w[0] = 1.0
        return w
    return proj / proj[0]
