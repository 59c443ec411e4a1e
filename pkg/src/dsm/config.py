"""Run-time configuration objects and the ``key=value`` config-file loader."""

from dataclasses import asdict, dataclass, field, fields, replace


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class FewFramesWarning(UserWarning):
    """Fewer residual frames than the configured reliability minimum."""


CONVERGENCE_GUIDANCE = (
    "about 1000 residual frames (roughly 7 s of voiced speech for a male voice, "
    "4 s for a female voice) are needed for a reliable estimate")


@dataclass(frozen=True)
class PitchConfig:
    f0_min: float = 60.0
    f0_max: float = 400.0
    window_ms: float = 30.0
    hop_ms: float = 10.0
    voicing_threshold: float = 0.3
    median_width: int = 5
    silence_db: float = -40.0

    def __post_init__(self):
        if not 0 < self.f0_min < self.f0_max:
            raise ConfigError(f"need 0 < f0_min < f0_max, got {self.f0_min}, {self.f0_max}")


@dataclass(frozen=True)
class EnvelopeConfig:
    order: int | None = None  # None: 24 at 16 kHz, scaled with the sample rate
    window_ms: float = 25.0
    hop_ms: float = 5.0
    preemphasis: float = 0.97

    def __post_init__(self):
        if self.order is not None and self.order < 2:
            raise ConfigError(f"envelope order must be >= 2, got {self.order}")
        if self.window_ms <= 0 or self.hop_ms <= 0:
            raise ConfigError("envelope window and hop must be positive")

    def resolved_order(self, sample_rate):
        if self.order is not None:
            return int(self.order)
        return max(2, int(round(24 * sample_rate / 16000.0)))


def pitch_constraint_bound(fm, f_nyquist, f0_min):
    """Largest normalization pitch for which the deterministic band still
    reaches ``fm`` once a frame is stretched down to ``f0_min``."""
    return f_nyquist / fm * f0_min


def validate_pitch_constraint(f0_star, fm, f_nyquist, f0_min):
    """True iff ``f0_star <= (f_nyquist / fm) * f0_min``.

    All arguments must be strictly positive and ``fm <= f_nyquist``.
    """
    for name, value in (("f0_star", f0_star), ("fm", fm), ("f_nyquist", f_nyquist),
                        ("f0_min", f0_min)):
        if not value > 0:
            raise ConfigError(f"{name} must be strictly positive, got {value}")
    if fm > f_nyquist:
        raise ConfigError(f"fm={fm} Hz exceeds the Nyquist frequency {f_nyquist} Hz")
    return f0_star <= pitch_constraint_bound(fm, f_nyquist, f0_min)


def require_pitch_constraint(f0_star, fm, sample_rate, f0_min):
    """Raise :class:`ConfigError` when the normalization pitch is too high."""
    nyq = sample_rate / 2.0
    if not validate_pitch_constraint(f0_star, min(fm, nyq), nyq, f0_min):
        bound = pitch_constraint_bound(fm, nyq, f0_min)
        raise ConfigError(
            "pitch normalization constraint violated: "
            f"f0_star={f0_star:g} Hz must not exceed (F_nyquist/fm)*f0_min = "
            f"({nyq:g}/{fm:g})*{f0_min:g} = {bound:.1f} Hz; lower f0_star, lower fm "
            "or raise f0_min")


@dataclass(frozen=True)
class RunConfig:
    """Everything a training / identification run needs."""

    f0_star: float = 100.0
    fm: float = 4000.0
    f0_min: float = 60.0
    f0_max: float = 400.0
    lp_order: int | None = None
    noise_order: int = 12
    k_det: int = 1
    min_frames: int = 1000
    rng_seed: int = 0
    voicing_threshold: float = 0.3
    preemphasis: float = 0.97
    gci_polarity: str = "negative"
    n_eigen_signature: int = 1
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.lp_order is not None and self.lp_order < 2:
            raise ConfigError(f"lp_order must be >= 2, got {self.lp_order}")
        if self.noise_order < 2:
            raise ConfigError(f"noise_order must be >= 2, got {self.noise_order}")
        if self.k_det < 1:
            raise ConfigError(f"k_det must be >= 1, got {self.k_det}")
        if not 0 < self.f0_min < self.f0_max:
            raise ConfigError(f"need 0 < f0_min < f0_max, got {self.f0_min}, {self.f0_max}")
        if self.gci_polarity not in ("negative", "positive", "auto"):
            raise ConfigError(f"gci_polarity must be negative, positive or auto")
        if not 0 <= self.rng_seed < 2 ** 64:
            raise ConfigError("rng_seed must be an unsigned 64-bit integer")

    @property
    def pitch(self):
        return PitchConfig(f0_min=self.f0_min, f0_max=self.f0_max,
                           voicing_threshold=self.voicing_threshold)

    @property
    def envelope(self):
        return EnvelopeConfig(order=self.lp_order, preemphasis=self.preemphasis)

    def check(self, sample_rate):
        """Validate against a sample rate (pitch normalization constraint)."""
        if self.fm > sample_rate / 2.0:
            raise ConfigError(f"fm={self.fm:g} Hz exceeds Nyquist ({sample_rate / 2.0:g} Hz)")
        require_pitch_constraint(self.f0_star, self.fm, sample_rate, self.f0_min)
        return self

    def frame_length(self, sample_rate):
        return int(round(2.0 * sample_rate / self.f0_star))

    def as_dict(self):
        d = asdict(self)
        d.pop("extra")
        return d

    def updated(self, **changes):
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes)


def _coerce(name, text):
    types = {f.name: f.type for f in fields(RunConfig)}
    kind = types[name]
    text = text.strip()
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return float(text)
    if kind in ("int | None",) or name == "lp_order":
        return None if text.lower() in ("", "none", "auto") else int(text)
    return text


def load_config(path, base=None):
    """Parse a UTF-8 ``key=value`` file (``#`` comments allowed) into a RunConfig."""
    base = base or RunConfig()
    known = {f.name for f in fields(RunConfig)} - {"extra"}
    changes = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                changes[key] = _coerce(key, value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return replace(base, **changes)
