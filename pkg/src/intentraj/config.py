"""Run configuration and the ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

MODES = ("intersection", "grid25")
ABLATIONS = ("no_intention", "no_map", "no_penalty")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    tau: int = 20
    delta: int = 40
    H: int = 160
    W: int = 160
    res: float = 0.5
    G: int = 5
    n: int = 25
    d: int = 64
    m: int = 32
    edge: int = 64
    latent: int = 32
    hidden: int = 128
    conv: int = 16
    sigma_cells: float = 2.0
    pen_every: int = 1  # training evaluates the penetration surrogate every k-th step
    zeta: float = 1.0
    eta: float = 0.1
    mu: float = 0.01
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 20
    seed: int = 0
    no_intention: bool = False
    no_map: bool = False
    no_penalty: bool = False
    mode: str = "intersection"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.tau < 1 or self.delta < 1:
            raise ConfigError("tau and delta must be >= 1")
        if min(self.zeta, self.eta, self.mu) < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        expected_g = 5 if self.mode == "intersection" else 25
        if self.G != expected_g:
            raise ConfigError(f"mode {self.mode} needs G={expected_g}, got {self.G}")
        if self.n != 25:
            raise ConfigError("the node grid is fixed at n=25 (5x5)")
        if self.H % 20 or self.W % 20:
            raise ConfigError("H and W must be multiples of 20")
        if self.res <= 0:
            raise ConfigError("res must be positive")
        for name in ("d", "m", "edge", "latent", "hidden", "conv", "batch_size", "pen_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.H, self.W)

    @property
    def weights(self) -> tuple[float, float, float]:
        if self.no_penalty:
            return (0.0, 0.0, 0.0)
        return (self.zeta, self.eta, self.mu)

    @property
    def sigma(self) -> float:
        return self.sigma_cells * self.res

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def echo(self) -> str:
        return "config " + " ".join(f"{f.name}={getattr(self, f.name)}" for f in fields(self))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def small(cls, **changes) -> "RunConfig":
        """Desk-scale dimensions used by tests and the synthetic benchmark."""
        base = dict(H=80, W=80, res=1.0, d=8, m=8, edge=16, latent=8, hidden=64, conv=8, pen_every=4,
                    epochs=50)
        base.update(changes)
        return cls(**base)


def _coerce(value: str, kind):
    value = value.strip()
    if kind is bool or kind == "bool":
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if kind is int or kind == "int":
        return int(value)
    if kind is float or kind == "float":
        return float(value)
    return value


def parse_kv_lines(text: str, allowed: dict) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys fail."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in allowed:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = _coerce(value, allowed[key])
        except ValueError as err:
            raise ConfigError(f"line {lineno}: {err}") from None
    return out


def config_types(cls) -> dict:
    return {f.name: f.type for f in fields(cls)}


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    values = parse_kv_lines(Path(path).read_text(), config_types(RunConfig))
    base = base or RunConfig()
    try:
        return base.replace(**values)
    except TypeError as err:
        raise ConfigError(str(err)) from None
