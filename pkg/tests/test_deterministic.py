import numpy as np
import pytest

import oracles
from dsm import deterministic as det
from dsm.audio import DataError


def _unit_rows(x):
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _sign_align(v, ref):
    return v if np.dot(v, ref) >= 0 else -v


def test_rank_one_dataset():
    v = _unit_rows(np.random.default_rng(0).standard_normal((1, 24)))[0]
    basis = det.pca_decompose(np.tile(v, (30, 1)))
    np.testing.assert_allclose(np.abs(np.dot(basis.first, v)), 1.0, atol=1e-12)
    assert abs(basis.eigenvalues[0] - 1.0) < 1e-12
    assert np.all(np.abs(basis.eigenvalues[1:]) < 1e-12)


def test_eigenpairs_match_jacobi_oracle():
    frames = np.random.default_rng(1).standard_normal((50, 16))
    basis = det.pca_decompose(frames)
    vals, vecs = oracles.jacobi_eigh(frames.T @ frames / 50)
    np.testing.assert_allclose(basis.eigenvalues, vals, atol=1e-6)
    for mine, ref in zip(basis.eigenresiduals, vecs):
        np.testing.assert_allclose(_sign_align(mine, ref), ref, atol=1e-6)


def test_isotropic_second_moment():
    m = 12
    basis = det.pca_decompose(np.eye(m) * 3.0)
    np.testing.assert_allclose(basis.eigenvalues, 9.0 / m, atol=1e-12)
    unit = det.pca_decompose(np.eye(m))
    np.testing.assert_allclose(unit.eigenvalues, 1.0 / m, atol=1e-12)


def test_no_mean_removal():
    # a constant offset must show up as the dominant axis, not be subtracted
    frames = np.ones((40, 8)) + 0.01 * np.random.default_rng(2).standard_normal((40, 8))
    basis = det.pca_decompose(frames)
    assert abs(abs(basis.first @ np.ones(8)) / np.sqrt(8) - 1.0) < 1e-3


def test_orthonormal_basis_and_trace():
    frames = _unit_rows(np.random.default_rng(3).standard_normal((200, 20)))
    basis = det.pca_decompose(frames)
    np.testing.assert_allclose(basis.eigenresiduals @ basis.eigenresiduals.T, np.eye(20),
                               atol=1e-10)
    assert abs(basis.eigenvalues.sum() - 1.0) < 1e-10
    assert np.all(np.diff(basis.eigenvalues) <= 0)


def test_sign_rule_negative_centre():
    frames = np.random.default_rng(4).standard_normal((60, 16))
    basis = det.pca_decompose(frames)
    assert np.all(basis.eigenresiduals[:, 8] <= 0)


def test_pca_needs_two_frames():
    with pytest.raises(DataError):
        det.pca_decompose(np.ones((1, 8)))


def test_second_moment_chunking_is_exact():
    frames = np.random.default_rng(5).standard_normal((1000, 10))
    np.testing.assert_allclose(det.second_moment(frames, chunk=7),
                               frames.T @ frames / 1000, atol=1e-12)


# ---------------------------------------------------------------- CRD


def test_crd_full_is_one():
    basis = det.pca_decompose(np.random.default_rng(6).standard_normal((30, 10)))
    assert det.crd(basis, 10) == 1.0
    assert det.crd_curve(basis)[-1] == 1.0


def test_crd_rank_one():
    basis = det.pca_decompose(np.tile(np.arange(1.0, 9.0), (5, 1)))
    assert abs(det.crd(basis, 1) - 1.0) < 1e-12


def test_crd_uniform_spectrum():
    basis = det.pca_decompose(np.eye(16))
    assert abs(det.crd(basis, 8) - 0.5) < 1e-12


def test_crd_matches_definition():
    basis = det.pca_decompose(np.random.default_rng(7).standard_normal((40, 12)))
    vals = basis.eigenvalues
    for k in range(1, 12):
        assert abs(det.crd(basis, k) - vals[:k].sum() / vals.sum()) < 1e-12


@pytest.mark.parametrize("k", [0, 13])
def test_crd_bounds(k):
    basis = det.pca_decompose(np.eye(12))
    with pytest.raises(ValueError):
        det.crd(basis, k)


# ---------------------------------------------------------------- reconstruction


def test_full_reconstruction():
    rng = np.random.default_rng(8)
    basis = det.pca_decompose(rng.standard_normal((50, 16)))
    f = rng.standard_normal(16)
    assert np.sqrt(np.mean((det.reconstruct(f, basis, 16) - f) ** 2)) < 1e-6


def test_orthogonal_component_vanishes():
    basis = det.pca_decompose(np.random.default_rng(9).standard_normal((50, 16)))
    assert np.max(np.abs(det.reconstruct(basis.eigenresiduals[1], basis, 1))) < 1e-8


def test_reconstruction_error_decreases():
    rng = np.random.default_rng(10)
    basis = det.pca_decompose(rng.standard_normal((50, 16)))
    f = rng.standard_normal(16)
    errs = []
    for k in range(1, 17):
        # oracle: residual norm from the explicitly projected coefficients
        coef = [sum(basis.eigenresiduals[i][j] * f[j] for j in range(16)) for i in range(k)]
        approx = sum(c * basis.eigenresiduals[i] for i, c in enumerate(coef))
        np.testing.assert_allclose(det.reconstruct(f, basis, k), approx, atol=1e-12)
        errs.append(float(np.sum((f - approx) ** 2)))
    assert all(b < a for a, b in zip(errs, errs[1:-1]))
    assert errs[-1] < 1e-20 + errs[-2]


def test_reconstruct_validates():
    basis = det.pca_decompose(np.eye(4))
    with pytest.raises(ValueError):
        det.reconstruct(np.ones(5), basis, 1)
    with pytest.raises(ValueError):
        det.reconstruct(np.ones(4), basis, 0)


def test_mean_projection_weights():
    rng = np.random.default_rng(11)
    basis = det.pca_decompose(rng.standard_normal((40, 8)))
    w = det.mean_projection_weights(rng.standard_normal((40, 8)), basis, 3)
    assert w.shape == (3,) and w[0] == 1.0
