"""Plain ``key = value`` run configuration.

One key per line, ``#`` starts a comment, sections are key prefixes
(``noise.r``, ``time.dt_levels``).  Floats accept ``2^-k`` shorthand and
lists are comma separated.  Every key is optional; defaults are the
:class:`RunConfig` field defaults.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass

from .errors import ConfigError
from .noise import NoiseSpec, dyadic_factor, step_count
from .scheme import PotentialParams
from .spectral import EigenBasis

EXPERIMENTS = ("simulate", "convolution", "pathwise-rate", "strong", "moments", "holder", "lipschitz", "smoothing")

DEFAULT_PATHS = {
    "simulate": 1,
    "convolution": 200,
    "pathwise-rate": 50,
    "strong": 200,
    "moments": 200,
    "holder": 10,
    "lipschitz": 1,
    "smoothing": 1,
}

MASTER_SEED = 20101

RNG_ALGORITHMS = ("philox",)  # the only generator the noise streams use


def _dyadics(lo: int, hi: int) -> tuple:
    return tuple(2.0**-k for k in range(lo, hi + 1))


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "pathwise-rate"
    seed: int = MASTER_SEED
    rng: str = "philox"
    paths: int | None = None  # None: per-experiment default
    threads: int = 1
    chunk: int = 25
    out: str = "results"
    modes: int = 128
    padded: bool = False
    T: float = 1.0
    dt_levels: tuple = _dyadics(4, 9)
    fine_dt: float = 2.0**-12
    horizons: tuple = (1.0, 2.0, 4.0, 8.0)
    moment_dt: float = 2.0**-6
    smoothing_dt_levels: tuple = _dyadics(3, 9)
    c: float = 1.0
    beta_dw: float = 1.0
    r: float = 1.5
    q0: float = 1000.0
    epsilon: float = 0.1
    p: tuple | None = None  # None: per-experiment default
    batches: int = 10
    beta: float = 2.0
    gamma: float = 0.45
    lipschitz_samples: int = 1000
    lipschitz_decay: float = 2.0
    newton_tol: float = 1e-10
    newton_max: int = 25

    def __post_init__(self):
        validate(self)

    # derived objects
    @property
    def basis(self) -> EigenBasis:
        return EigenBasis(self.modes)

    @property
    def noise(self) -> NoiseSpec:
        return NoiseSpec(self.r, self.q0, self.modes)

    @property
    def potential(self) -> PotentialParams:
        return PotentialParams(self.c, self.beta_dw)

    @property
    def path_count(self) -> int:
        return self.paths if self.paths is not None else DEFAULT_PATHS[self.experiment]

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


# key -> (field, kind)
KEYS = {
    "experiment": ("experiment", "str"),
    "seed": ("seed", "int"),
    "rng": ("rng", "str"),
    "paths": ("paths", "auto_int"),
    "threads": ("threads", "int"),
    "chunk": ("chunk", "int"),
    "out": ("out", "str"),
    "space.modes": ("modes", "int"),
    "space.padded": ("padded", "bool"),
    "time.T": ("T", "float"),
    "time.dt_levels": ("dt_levels", "floats"),
    "time.fine_dt": ("fine_dt", "float"),
    "time.horizons": ("horizons", "floats"),
    "time.moment_dt": ("moment_dt", "float"),
    "smoothing.dt_levels": ("smoothing_dt_levels", "floats"),
    "potential.c": ("c", "float"),
    "potential.beta": ("beta_dw", "float"),
    "noise.r": ("r", "float"),
    "noise.q0": ("q0", "float"),
    "noise.epsilon": ("epsilon", "float"),
    "stats.p": ("p", "auto_floats"),
    "stats.batches": ("batches", "int"),
    "convolution.beta": ("beta", "float"),
    "holder.gamma": ("gamma", "float"),
    "lipschitz.samples": ("lipschitz_samples", "int"),
    "lipschitz.decay": ("lipschitz_decay", "float"),
    "newton.tol": ("newton_tol", "float"),
    "newton.max": ("newton_max", "int"),
}

_POW = re.compile(r"^\s*2\s*\^\s*(-?\d+)\s*$")


def _float(text: str, key: str) -> float:
    m = _POW.match(text)
    try:
        value = 2.0 ** int(m.group(1)) if m else float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite")
    return value


def _int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as an integer") from None


def _convert(kind: str, text: str, key: str):
    text = text.strip()
    if kind == "str":
        return text
    if kind == "int":
        return _int(text, key)
    if kind == "float":
        return _float(text, key)
    if kind == "bool":
        if text.lower() in ("true", "yes", "1"):
            return True
        if text.lower() in ("false", "no", "0"):
            return False
        raise ConfigError(f"{key}: expected true/false, got {text!r}")
    if kind.startswith("auto_") and text.lower() == "auto":
        return None
    if kind == "auto_int":
        return _int(text, key)
    if kind in ("floats", "auto_floats"):
        parts = [t for t in text.split(",") if t.strip()]
        if not parts:
            raise ConfigError(f"{key}: empty list")
        return tuple(_float(t, key) for t in parts)
    raise AssertionError(kind)


def parse_config(text: str, **overrides) -> RunConfig:
    """Build a validated :class:`RunConfig` from ``key = value`` text.

    Unknown keys and invariant violations raise :class:`ConfigError` naming
    the key.  ``overrides`` (field names) are applied after the text.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        name, kind = KEYS[key]
        values[name] = _convert(kind, value, key)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config: RunConfig) -> str:
    """Every key with its effective value; ``parse_config`` inverts it."""
    return "\n".join(f"{key} = {_fmt(getattr(config, name))}" for key, (name, _) in KEYS.items()) + "\n"


def _fail(key: str, message: str):
    raise ConfigError(f"{key}: {message}")


def validate(cfg: RunConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        _fail("experiment", f"unknown experiment {cfg.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    if cfg.seed < 0:
        _fail("seed", "must be a nonnegative integer")
    if cfg.rng not in RNG_ALGORITHMS:
        _fail("rng", f"unsupported generator {cfg.rng!r}; supported: {', '.join(RNG_ALGORITHMS)}")
    if cfg.paths is not None and cfg.paths < 1:
        _fail("paths", "must be at least 1")
    if cfg.threads < 0:
        _fail("threads", "must be >= 0 (0 = auto)")
    if cfg.chunk < 1:
        _fail("chunk", "must be positive")
    if cfg.modes < 1:
        _fail("space.modes", "must be a positive integer")
    for key, value in (("time.T", cfg.T), ("time.fine_dt", cfg.fine_dt), ("time.moment_dt", cfg.moment_dt),
                       ("potential.c", cfg.c), ("potential.beta", cfg.beta_dw), ("noise.q0", cfg.q0),
                       ("newton.tol", cfg.newton_tol)):
        if not value > 0:
            _fail(key, f"must be positive, got {value!r}")
    if cfg.r < 0:
        _fail("noise.r", "must be >= 0")
    if not 0 < cfg.epsilon < 0.5:
        _fail("noise.epsilon", "must lie in (0, 1/2)")
    if not cfg.dt_levels:
        _fail("time.dt_levels", "at least one level required")
    for dt in cfg.dt_levels:
        try:
            dyadic_factor(dt, cfg.fine_dt)
            step_count(cfg.T, dt)
        except ValueError as exc:
            _fail("time.dt_levels", str(exc))
    if len(set(cfg.dt_levels)) != len(cfg.dt_levels):
        _fail("time.dt_levels", "duplicate level")
    try:
        step_count(cfg.T, cfg.fine_dt)
    except ValueError as exc:
        _fail("time.fine_dt", str(exc))
    if list(cfg.horizons) != sorted(set(cfg.horizons)) or min(cfg.horizons) <= 0:
        _fail("time.horizons", "must be positive and strictly increasing")
    for h in cfg.horizons:
        try:
            step_count(h, cfg.moment_dt)
        except ValueError as exc:
            _fail("time.horizons", str(exc))
    for dt in cfg.smoothing_dt_levels:
        if not dt > 0:
            _fail("smoothing.dt_levels", "levels must be positive")
    if cfg.p is not None and any(not v >= 1 for v in cfg.p):
        _fail("stats.p", "moments must be >= 1")
    if cfg.batches < 2:
        _fail("stats.batches", "need at least 2 batches")
    if not 0 <= cfg.beta <= 2:
        _fail("convolution.beta", "must lie in [0, 2]")
    if cfg.lipschitz_samples < 1:
        _fail("lipschitz.samples", "must be positive")
    if cfg.newton_max < 1:
        _fail("newton.max", "must be positive")
