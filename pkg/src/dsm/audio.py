"""Audio container and WAV / CSV file helpers."""

import csv
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile


class DataError(Exception):
    """Input data is unusable (bad WAV, no voiced speech, mismatched rates)."""


@dataclass(frozen=True)
class AudioSignal:
    """Mono samples (nominally in [-1, 1]) and their sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise DataError(f"expected mono samples, got array of shape {samples.shape}")
        if int(self.sample_rate) <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


def read_wav(path):
    """Read a mono PCM-16 or float-32 WAV file into an :class:`AudioSignal`."""
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read WAV file {path}: {exc}") from exc
    if data.ndim != 1:
        raise DataError(f"{path}: {data.shape[1]} channels found, only mono WAV is supported")
    if data.dtype == np.int16:
        samples = data.astype(float) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(float)
    elif data.dtype == np.int32:
        samples = data.astype(float) / 2147483648.0
    else:
        raise DataError(f"{path}: unsupported sample format {data.dtype}")
    return AudioSignal(samples, rate)


@contextmanager
def atomic_path(path, mode="wb", **kwargs):
    """Open a temp file next to ``path`` and rename it into place on success."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_wav(path, signal):
    """Write 16-bit PCM mono; samples are clipped to [-1, 1)."""
    pcm = np.clip(np.round(signal.samples * 32767.0), -32768, 32767).astype(np.int16)
    with atomic_path(path, "wb") as fh:
        wavfile.write(fh, signal.sample_rate, pcm)


def write_csv(path, header, rows, config=None):
    """Atomically write a CSV with an optional ``# config:`` echo line."""
    with atomic_path(path, "w", newline="", encoding="utf-8") as fh:
        if config is not None:
            echo = " ".join(f"{k}={v}" for k, v in config.items())
            fh.write(f"# config: {echo}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def read_csv_rows(path):
    """Read a UTF-8 CSV with header, skipping ``#`` comment lines."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = (line for line in fh if not line.startswith("#"))
        return list(csv.DictReader(lines))
