"""Declarative run configuration: ``key = value`` text files plus CLI overrides.

Lines are ``key = value``; blank lines and ``#`` comments are ignored.
Unknown keys are rejected so a misspelt ``gamma`` cannot pass silently.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .linalg import RngState
from .optimizer import LotusHyperparams, MomentPolicy
from .policy import PolicyKind, SwitchConfig
from .subspace import ProjectionConfig
from .problems import ProblemKind, ProblemSpec


def _dims(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).replace("x", ",").split(",") if x.strip())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class RunConfig:
    # problem
    problem: str = "drift"
    dims: tuple = (64, 64, 8)
    drift_rate: float = 0.01
    noise_std: float = 0.005
    mu: float = 0.2
    seed: int = 0
    # switching policy defaults
    policy: str = "avg"
    gamma: float = 0.01
    eta: int = 50
    t_min: int = 100
    fixed_interval: int = 500
    window: int = 0  # 0 means "same as eta"
    # optimizer
    rank: int = 8
    lr: float = 0.05
    scale: float = 0.25
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    use_moments: bool = True
    moment_policy: str = "reset"
    projection: str = "rsvd"
    oversample: int = 5
    power_iters: int = 2
    # run control
    max_steps: int = 20000
    eps: float = 1.0
    tolerance_mode: str = "window"
    epochs: int = 200
    batch_size: int = 0
    timing: bool = False
    format: str = "csv"
    out: str = ""

    def switch_config(self, policy: str | None = None, fixed_interval: int | None = None) -> SwitchConfig:
        return SwitchConfig(
            gamma=self.gamma,
            verify_gap=self.eta,
            t_min=self.t_min,
            kind=PolicyKind(policy or self.policy),
            fixed_interval=fixed_interval or self.fixed_interval,
            window_len=self.window or None,
        )

    def hyperparams(self) -> LotusHyperparams:
        return LotusHyperparams(
            learning_rate=self.lr,
            rank=self.rank,
            scale=self.scale,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.adam_eps,
            switch=self.switch_config(),
            rng=RngState(self.seed),
            projection=ProjectionConfig(self.projection, self.oversample, self.power_iters),
            use_moments=self.use_moments,
            moment_policy=MomentPolicy(self.moment_policy),
        )

    def problem_spec(self) -> ProblemSpec:
        options = {}
        kind = ProblemKind(self.problem)
        if kind is ProblemKind.DRIFTING_STREAM:
            options["mu"] = self.mu
        if kind is ProblemKind.MLP and self.batch_size:
            options["batch_size"] = self.batch_size
        return ProblemSpec(kind, self.dims, self.drift_rate, self.noise_std, self.seed, options)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(key, value):
    default = getattr(RunConfig, key)
    try:
        if key == "dims":
            return _dims(value)
        if isinstance(default, bool):
            return _bool(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then non-``None`` ``overrides``."""
    values = {}
    if path:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        values.update(parse_config_text(text, str(path)))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _coerce(key, value)
    cfg = replace(RunConfig(), **values)
    try:
        ProblemKind(cfg.problem)
        PolicyKind(cfg.policy)
        MomentPolicy(cfg.moment_policy)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg
