"""Binary ``DSM1`` container for trained models and glottal signatures, plus a
JSON export for inspection.

Layout (little-endian): a fixed header followed by float64 arrays in this
order: eigenresiduals (row-major), eigenvalues, energy envelope (if flagged),
noise AR coefficients (``q + 1`` values, if flagged), deterministic weights.
"""

import json
import struct

import numpy as np

from . import deterministic as det
from . import stochastic as sto
from .audio import DataError, atomic_path
from .speakerid import GlottalSignature
from .vocoder import DsmModel

MAGIC = b"DSM1"
VERSION = 1
FLAG_SIGNATURE = 1
FLAG_ENVELOPE = 2
FLAG_NOISE = 4

# magic, version, flags, sample_rate, m, n_eig, k_det, q, n_frames,
# f0_star, fm, f0_min, f0_max, noise_gain
_HEADER = struct.Struct("<4sHHIIIIII5d")


def _pack(flags, sample_rate, m, n_eig, k_det, q, n_frames, f0_star, fm, f0_min, f0_max,
          noise_gain, arrays):
    head = _HEADER.pack(MAGIC, VERSION, flags, int(sample_rate), int(m), int(n_eig),
                        int(k_det), int(q), int(n_frames), float(f0_star), float(fm),
                        float(f0_min), float(f0_max), float(noise_gain))
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    return head + body


def model_bytes(model):
    b, n = model.basis, model.noise
    arrays = [b.eigenresiduals, b.eigenvalues, n.energy_envelope, n.ar_coefficients,
              np.asarray(model.det_weights, float)[: model.k_det]]
    return _pack(FLAG_ENVELOPE | FLAG_NOISE, model.sample_rate, b.m, b.eigenresiduals.shape[0],
                 model.k_det, n.order, model.n_frames, model.f0_star, model.fm, model.f0_min,
                 model.f0_max, n.gain, arrays)


def signature_bytes(sig):
    rows = [sig.eigenresidual]
    if sig.higher is not None:
        rows.extend(sig.higher)
    eig = np.vstack(rows)
    flags = FLAG_SIGNATURE
    arrays = [eig, np.zeros(eig.shape[0])]
    if sig.energy_envelope is not None:
        flags |= FLAG_ENVELOPE
        arrays.append(sig.energy_envelope)
    arrays.append(np.ones(1))
    return _pack(flags, sig.sample_rate, sig.m, eig.shape[0], 1, 0, sig.n_frames_used,
                 sig.f0_star, sig.fm, 0.0, 0.0, 0.0, arrays)


def _write(path, data):
    with atomic_path(path, "wb") as fh:
        fh.write(data)


def save_model(path, model):
    _write(path, model_bytes(model))


def save_signature(path, sig):
    _write(path, signature_bytes(sig))


def _parse(data, source="<bytes>"):
    if len(data) < _HEADER.size:
        raise DataError(f"{source}: truncated model file")
    (magic, version, flags, fs, m, n_eig, k_det, q, n_frames, f0_star, fm, f0_min, f0_max,
     gain) = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataError(f"{source}: not a DSM1 file (magic {magic!r})")
    if version != VERSION:
        raise DataError(f"{source}: unsupported DSM1 version {version}")
    sizes = [n_eig * m, n_eig]
    if flags & FLAG_ENVELOPE:
        sizes.append(m)
    if flags & FLAG_NOISE:
        sizes.append(q + 1)
    sizes.append(k_det)
    expected = _HEADER.size + 8 * sum(sizes)
    if len(data) != expected:
        raise DataError(f"{source}: size {len(data)} bytes, header implies {expected}")
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    out = {
        "flags": flags, "sample_rate": fs, "m": m, "n_frames": n_frames, "f0_star": f0_star,
        "fm": fm, "f0_min": f0_min, "f0_max": f0_max, "noise_gain": gain, "k_det": k_det,
        "eigenresiduals": parts[0].reshape(n_eig, m), "eigenvalues": parts[1],
    }
    i = 2
    out["envelope"] = parts[i] if flags & FLAG_ENVELOPE else None
    i += bool(flags & FLAG_ENVELOPE)
    out["ar"] = parts[i] if flags & FLAG_NOISE else None
    i += bool(flags & FLAG_NOISE)
    out["det_weights"] = parts[i]
    return out


def _read(path):
    try:
        with open(path, "rb") as fh:
            return _parse(fh.read(), str(path))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc


def _to_model(d):
    if d["flags"] & FLAG_SIGNATURE or d["ar"] is None or d["envelope"] is None:
        raise DataError("file holds a signature, not a full model")
    basis = det.EigenBasis(d["eigenresiduals"], d["eigenvalues"], d["f0_star"])
    noise = sto.NoiseModel(d["ar"], d["noise_gain"], d["envelope"], d["fm"], d["f0_star"])
    return DsmModel(basis=basis, noise=noise, fm=d["fm"], f0_star=d["f0_star"],
                    sample_rate=d["sample_rate"], k_det=d["k_det"], f0_min=d["f0_min"],
                    f0_max=d["f0_max"], det_weights=d["det_weights"], n_frames=d["n_frames"])


def _to_signature(d, label=""):
    eig = d["eigenresiduals"]
    return GlottalSignature(eigenresidual=eig[0], energy_envelope=d["envelope"],
                            f0_star=d["f0_star"], fm=d["fm"], sample_rate=d["sample_rate"],
                            n_frames_used=d["n_frames"], label=label,
                            higher=eig[1:] if eig.shape[0] > 1 else None)


def load_model(path):
    return _to_model(_read(path))


def load_signature(path, label=""):
    """Read a signature file, or derive the signature of a full model file."""
    return _to_signature(_read(path), label)


def is_signature_file(path):
    return bool(_read(path)["flags"] & FLAG_SIGNATURE)


def export_json(path, source):
    """Human-readable dump of a model / signature file or object."""
    if isinstance(source, DsmModel):
        d = _parse(model_bytes(source))
    elif isinstance(source, GlottalSignature):
        d = _parse(signature_bytes(source))
    else:
        d = _read(source)
    doc = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}
    doc["kind"] = "signature" if d["flags"] & FLAG_SIGNATURE else "model"
    doc["magic"] = MAGIC.decode()
    doc["version"] = VERSION
    with atomic_path(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
