"""Run configuration: a flat key=value file, flag-overridable.

The canonical text form (fixed field order) is echoed into report
headers and hashed so any two artifacts produced under the same
configuration can be compared byte for byte.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields

from .errors import InvalidSpecError, IoError

ENV_VAR = "CROWNFORGE_CONFIG"

# dataclass attribute -> file key ("lambda" is reserved in Python)
_FILE_KEYS = {"lambda_": "lambda"}


@dataclass
class RunConfig:
    resolution: int = 128
    sigma: float = 2.0
    lambda_: float = 1.0
    f_score_tau: float = 0.3
    sample_count: int = 16384
    seeds: int = 0
    smoothing: float = 1.0

    def __post_init__(self):
        if self.resolution < 8:
            raise InvalidSpecError(f"resolution too small: {self.resolution}")
        if self.sigma < 0 or self.lambda_ < 0 or self.smoothing < 0:
            raise InvalidSpecError("sigma, lambda, smoothing must be non-negative")
        if self.f_score_tau <= 0:
            raise InvalidSpecError(f"f_score_tau must be positive: {self.f_score_tau}")
        if self.sample_count < 1:
            raise InvalidSpecError(f"sample_count must be >= 1: {self.sample_count}")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            key = _FILE_KEYS.get(f.name, f.name)
            lines.append(f"{key}={getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def with_overrides(self, **kwargs) -> "RunConfig":
        """New config with the non-None keyword values applied."""
        current = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, val in kwargs.items():
            if val is None:
                continue
            if key not in current:
                raise InvalidSpecError(f"unknown config key: {key}")
            current[key] = val
        return RunConfig(**current)


def _coerce(name, value):
    int_fields = {"resolution", "sample_count", "seeds"}
    try:
        return int(value) if name in int_fields else float(value)
    except ValueError as exc:
        raise InvalidSpecError(f"bad value for {name}: {value!r}") from exc


def load_config(path=None) -> RunConfig:
    """Config from `path`, the CROWNFORGE_CONFIG file, or defaults."""
    if path is None:
        path = os.environ.get(ENV_VAR)
    if path is None:
        return RunConfig()
    attr_by_key = {_FILE_KEYS.get(f.name, f.name): f.name for f in fields(RunConfig)}
    kwargs = {}
    try:
        with open(path) as fh:
            for raw in fh:
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise InvalidSpecError(f"{path}: bad config line: {line}")
                key, val = (s.strip() for s in line.split("=", 1))
                if key not in attr_by_key:
                    raise InvalidSpecError(f"{path}: unknown config key: {key}")
                name = attr_by_key[key]
                kwargs[name] = _coerce(name, val)
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    return RunConfig(**kwargs)
