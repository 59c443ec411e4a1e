import json

import numpy as np
import pytest

from dsm import modelio
from dsm.audio import DataError


def test_model_round_trip(trained, tmp_path):
    model, _ = trained
    path = tmp_path / "m.dsm"
    modelio.save_model(path, model)
    back = modelio.load_model(path)
    np.testing.assert_array_equal(back.basis.eigenresiduals, model.basis.eigenresiduals)
    np.testing.assert_array_equal(back.basis.eigenvalues, model.basis.eigenvalues)
    np.testing.assert_array_equal(back.noise.energy_envelope, model.noise.energy_envelope)
    np.testing.assert_array_equal(back.noise.ar_coefficients, model.noise.ar_coefficients)
    assert back.noise.gain == model.noise.gain
    assert (back.fm, back.f0_star, back.sample_rate, back.k_det, back.n_frames) == (
        model.fm, model.f0_star, model.sample_rate, model.k_det, model.n_frames)
    # a re-save is byte-identical
    modelio.save_model(tmp_path / "again.dsm", back)
    assert (tmp_path / "again.dsm").read_bytes() == path.read_bytes()


def test_header_layout(trained):
    model, _ = trained
    data = modelio.model_bytes(model)
    assert data[:4] == b"DSM1"
    fields = modelio._HEADER.unpack_from(data)
    assert fields[3] == model.sample_rate
    assert fields[4] == model.m
    assert fields[9] == model.f0_star and fields[10] == model.fm
    # little-endian float64 payload starts right after the header
    first = np.frombuffer(data, "<f8", count=1, offset=modelio._HEADER.size)[0]
    assert first == model.basis.eigenresiduals[0, 0]


def test_signature_round_trip(id_signatures, tmp_path):
    _, train, _ = id_signatures
    sig = train[0]
    path = tmp_path / "s.dsm"
    modelio.save_signature(path, sig)
    assert modelio.is_signature_file(path)
    back = modelio.load_signature(path, sig.label)
    np.testing.assert_array_equal(back.eigenresidual, sig.eigenresidual)
    np.testing.assert_array_equal(back.energy_envelope, sig.energy_envelope)
    assert back.constants == sig.constants
    assert back.n_frames_used == sig.n_frames_used
    with pytest.raises(DataError, match="signature"):
        modelio.load_model(path)


def test_model_file_yields_signature(trained, tmp_path):
    model, _ = trained
    path = tmp_path / "m.dsm"
    modelio.save_model(path, model)
    assert not modelio.is_signature_file(path)
    sig = modelio.load_signature(path)
    np.testing.assert_array_equal(sig.eigenresidual, model.basis.first)


def test_corrupt_files(trained, tmp_path):
    model, _ = trained
    data = modelio.model_bytes(model)
    for name, blob, msg in (("short", data[:10], "truncated"),
                            ("magic", b"XXXX" + data[4:], "not a DSM1"),
                            ("size", data[:-8], "header implies")):
        p = tmp_path / name
        p.write_bytes(blob)
        with pytest.raises(DataError, match=msg):
            modelio.load_model(p)
    with pytest.raises(DataError):
        modelio.load_model(tmp_path / "missing.dsm")


def test_json_export(trained, tmp_path):
    model, _ = trained
    path = tmp_path / "m.json"
    modelio.export_json(path, model)
    doc = json.loads(path.read_text())
    assert doc["kind"] == "model" and doc["magic"] == "DSM1"
    assert doc["m"] == model.m
    np.testing.assert_array_equal(np.array(doc["envelope"]), model.noise.energy_envelope)
