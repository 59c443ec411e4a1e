import warnings

import numpy as np
import pytest

import oracles
from conftest import FS
from dsm import datasets
from dsm import speakerid as sid
from dsm.audio import DataError
from dsm.config import FewFramesWarning, RunConfig


def _sig(eig, env=None, label="", fm=4000.0):
    eig = np.asarray(eig, float)
    return sid.GlottalSignature(eig, env, 100.0, fm, FS, 1000, label)


def _matrix(values, channel=""):
    v = np.asarray(values, float)
    return sid.DistanceMatrix(v, tuple(f"r{i}" for i in range(v.shape[0])),
                              tuple(f"c{j}" for j in range(v.shape[1])), channel)


def test_rtse_examples():
    x = np.random.default_rng(0).standard_normal(320)
    assert sid.rtse(x, x) == 0.0
    assert sid.rtse(np.zeros(320), x) == pytest.approx(1.0, abs=1e-15)
    assert sid.rtse(2 * x, x) == pytest.approx(1.0, abs=1e-12)
    y = np.random.default_rng(1).standard_normal(320)
    assert sid.rtse(y, x) == pytest.approx(oracles.relative_squared_error(y, x), rel=1e-12)


def test_rtse_errors():
    with pytest.raises(ValueError, match="undefined relative error"):
        sid.rtse(np.ones(4), np.zeros(4))
    with pytest.raises(ValueError):
        sid.rtse(np.ones(4), np.ones(5))


def test_extracted_signature_matches_generating_model(id_signatures):
    speakers, train, _ = id_signatures
    for spk, sig in zip(speakers, train):
        assert sig.n_frames_used >= 1000
        assert sid.rtse(sig.eigenresidual, spk.mu) < 0.02


def test_disjoint_halves_agree(id_signatures):
    _, train, test = id_signatures
    for a, b in zip(train, test):
        assert min(a.n_frames_used, b.n_frames_used) >= 1000
        assert sid.rtse(b.eigenresidual, a.eigenresidual) < 0.02


def test_signature_invariants(id_signatures):
    _, train, _ = id_signatures
    for s in train:
        assert abs(np.linalg.norm(s.eigenresidual) - 1) < 1e-12
        assert s.energy_envelope.max() == 1.0
        assert s.energy_envelope.min() >= 0
        assert s.m == 320


def test_extract_signature_empty_corpus():
    with pytest.raises(DataError):
        sid.extract_signature([], RunConfig())


def test_extract_signature_warns_below_min_frames():
    spk = datasets.make_speaker(3)
    with pytest.warns(FewFramesWarning, match="1000"):
        sig = sid.extract_signature(spk.corpus(4.0, seed=5), RunConfig(), "short")
    assert sig.n_frames_used < 1000


def test_no_envelope_at_nyquist():
    # at 8 kHz with fm at Nyquist the pitch bound allows f0_star up to f0_min
    spk = datasets.make_speaker(1, sample_rate=8000, fm=4000.0, f0_star=60.0)
    cfg = RunConfig(f0_star=60.0, fm=4000.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FewFramesWarning)
        sig = sid.extract_signature(spk.corpus(4.0, seed=1), cfg, "narrow")
    assert sig.energy_envelope is None
    with pytest.raises(DataError):
        sig.channel("envelope")


def test_distance_matrix_self_is_zero_diagonal(id_signatures):
    _, train, _ = id_signatures
    d = sid.distance_matrix(train, train, "eigen")
    assert np.all(np.diag(d.values) == 0.0)
    assert d.shape == (10, 10)


def test_distance_matrix_one_by_one():
    a = _sig([1.0, 0.0, 0.0, 0.0], label="a")
    b = _sig([0.8, 0.6, 0.0, 0.0], label="b")
    d = sid.distance_matrix([a], [b], "eigen")
    assert d.shape == (1, 1)
    assert d.values[0, 0] == sid.rtse(b.eigenresidual, a.eigenresidual)


def test_distance_matrix_orientation():
    a, b = _sig([1.0, 0.0], label="a"), _sig([2.0, 0.0], label="b")
    d = sid.distance_matrix([a], [b], "eigen")
    # test compared against train: sum((2 - 1)^2) / 1^2
    assert d.values[0, 0] == 1.0


def test_distance_matrix_constant_mismatch_names_pair():
    a = _sig([1.0, 0.0], label="a")
    b = _sig([1.0, 0.0], label="b", fm=3000.0)
    with pytest.raises(DataError, match="'b'"):
        sid.distance_matrix([a], [b], "eigen")


def test_distance_matrix_rejects_negative():
    with pytest.raises(ValueError):
        _matrix([[-1.0]])


def test_matched_halves_diagonal_minimal(id_signatures):
    _, train, test = id_signatures
    for channel in sid.CHANNELS:
        v = sid.distance_matrix(train, test, channel).values
        for i in range(v.shape[0]):
            assert v[i, i] == v[i].min()
            assert v[i, i] == v[:, i].min()


def test_fusion_boundaries():
    rng = np.random.default_rng(0)
    dx, dy = _matrix(rng.random((4, 5))), _matrix(rng.random((4, 5)))
    np.testing.assert_array_equal(sid.combine_mul(dx, dy, 1.0).values, dx.values)
    np.testing.assert_array_equal(sid.combine_mul(dx, dy, 0.0).values, dy.values)
    np.testing.assert_array_equal(sid.combine_add(dx, dy, 1.0).values, dx.values)
    np.testing.assert_array_equal(sid.combine_add(dx, dy, 0.0).values, dy.values)
    np.testing.assert_allclose(sid.combine_mul(dx, dy, 0.5).values, np.sqrt(dx.values * dy.values))
    np.testing.assert_allclose(sid.combine_add(dx, dy, 0.25).values,
                               0.25 * dx.values + 0.75 * dy.values)


def test_fusion_half_ranks_like_product():
    rng = np.random.default_rng(1)
    for _ in range(100):
        dx, dy = _matrix(rng.random((6, 6))), _matrix(rng.random((6, 6)))
        fused = sid.combine_mul(dx, dy, 0.5).values
        np.testing.assert_array_equal(np.argsort(fused, axis=0, kind="stable"),
                                      np.argsort(dx.values * dy.values, axis=0, kind="stable"))


def test_fusion_zero_floor():
    dx, dy = _matrix([[0.0, 1.0]]), _matrix([[1.0, 0.0]])
    v = sid.combine_mul(dx, dy, 0.5).values
    assert np.all(np.isfinite(v)) and np.all(v > 0)


def test_fusion_errors():
    with pytest.raises(ValueError):
        sid.combine_mul(_matrix(np.ones((2, 2))), _matrix(np.ones((2, 3))))
    with pytest.raises(ValueError):
        sid.combine_add(_matrix(np.ones((2, 2))), _matrix(np.ones((2, 2))), 1.5)
    with pytest.raises(ValueError):
        sid.fuse({"eigen": _matrix([[1.0]]), "envelope": _matrix([[1.0]])}, "max")


def test_identify_diagonal_dominant():
    v = np.full((4, 4), 2.0)
    np.fill_diagonal(v, 1.0)
    labels = tuple("abcd")
    res = sid.identify(sid.DistanceMatrix(v, labels, labels))
    assert res.accuracy == 1.0
    assert list(res.ranks) == [1, 1, 1, 1]
    assert res.labels == list("abcd")


def test_identify_ranks_and_ties():
    v = np.array([[0.5, 0.1], [0.2, 0.1], [0.1, 0.3]])
    d = sid.DistanceMatrix(v, ("a", "b", "c"), ("a", "b"))
    res = sid.identify(d)
    assert res.labels == ["c", "a"]  # tie on column 1 goes to the lowest index
    assert list(res.ranks) == [3, 2]
    assert res.accuracy == 0.0


def test_identify_permutation_equivariant():
    rng = np.random.default_rng(2)
    v = rng.random((5, 5))
    labels = tuple("abcde")
    base = sid.identify(sid.DistanceMatrix(v, labels, labels))
    perm = rng.permutation(5)
    moved = sid.identify(sid.DistanceMatrix(v[:, perm], labels, tuple(labels[p] for p in perm)))
    assert moved.labels == [base.labels[p] for p in perm]
    rows = rng.permutation(5)
    moved = sid.identify(sid.DistanceMatrix(v[rows], tuple(labels[r] for r in rows), labels))
    assert moved.labels == base.labels


def test_fused_not_worse_than_single_channels(id_signatures):
    _, train, test = id_signatures
    mats = {c: sid.distance_matrix(train, test, c) for c in sid.CHANNELS}
    fused = sid.identify(sid.fuse(mats, "mul", 0.5)).accuracy
    assert fused >= max(sid.identify(m).accuracy for m in mats.values())


def test_separation_ratio():
    v = np.array([[1.0, 5.0], [10.0, 1.0]])
    assert sid.separation_ratio(sid.DistanceMatrix(v, ("a", "b"), ("a", "b"))) == 7.5
    with pytest.raises(ValueError):
        sid.separation_ratio(_matrix([[1.0]]))


@pytest.fixture(scope="module")
def speaker0_frames():
    spk = datasets.make_speaker(0)
    return spk, sid.corpus_frames(spk.corpus(20.0, seed=4), RunConfig())


def test_convergence_self_reference(speaker0_frames):
    _, frames = speaker0_frames
    ref = sid.signature_from_frames(frames)
    n, r_eig, r_env = sid.convergence_curve(frames, ref, [frames.n_frames])[0]
    assert n == frames.n_frames
    assert r_eig < 1e-6
    assert r_env < 1e-6


def test_convergence_size_errors(speaker0_frames):
    spk, frames = speaker0_frames
    ref = sid.GlottalSignature(spk.mu, spk.envelope, 100.0, 4000.0, FS, 0)
    with pytest.raises(ValueError):
        sid.convergence_curve(frames, ref, [frames.n_frames + 1])


def test_convergence_repeatable_across_draws(speaker0_frames):
    spk, frames = speaker0_frames
    other = sid.corpus_frames(spk.corpus(20.0, seed=5), RunConfig())
    ref = sid.GlottalSignature(spk.mu, spk.envelope, 100.0, 4000.0, FS, 0)
    sizes = [50, 200, 1000]
    a = sid.convergence_curve(frames, ref, sizes)
    b = sid.convergence_curve(other, ref, sizes)
    for (_, ea, na), (_, eb, nb) in zip(a, b):
        assert 0.5 <= ea / eb <= 2.0
        assert 0.5 <= na / nb <= 2.0


def test_phonetic_report_shared_excitation():
    spk = datasets.make_speaker(2)
    signals, classes = [], []
    for i, vowels in enumerate((("a", "o", "u"), ("i", "e"))):
        for k in range(3):
            signals.append(spk.utterance(4.0, 100 + 10 * i + k, vowels=vowels))
            classes.append(f"class{i}")
    rows = sid.phonetic_report(signals, classes, RunConfig())
    assert [r[0] for r in rows] == ["class0", "class1"]
    for _, n, r_eig, r_env in rows:
        assert n > 100
        assert r_eig < 0.02
        assert r_env < 0.02


def test_phonetic_report_needs_one_label_per_signal():
    with pytest.raises(ValueError):
        sid.phonetic_report([datasets.sustained_vowel(1.0)], ["a", "b"])
