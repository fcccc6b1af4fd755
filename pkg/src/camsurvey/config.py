"""Pipeline configuration.

One flat key-value namespace shared by every stage. Values resolve with
precedence: command-line flags > config file > defaults. The file format is
plain ``key = value`` lines with ``#`` comments, and round-trips losslessly.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path


@dataclass
class PipelineConfig:
    seed: int = 17
    sample_count: int = 100_000
    prob_threshold: float = 0.75
    size_threshold: int = 50
    recall: float = 0.63
    availability_radius_m: float = 10.0
    coverage_cutoff_m: float = 30.0
    coverage_horizon_m: float = 120.0
    imputed_road_width_m: float = 29.0
    date_policy: str = "oldest-in-range"
    date_min_year: int = 2015
    date_max_year: int = 2021
    endpoint: str = ""
    api_key: str = ""
    rate_limit_rps: float = 10.0
    image_size_px: int = 640
    fov_deg: float = 90.0
    quorum: int = 3

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.sample_count < 1:
            raise ValueError("sample_count: must be >= 1")
        if not 0.0 < self.prob_threshold < 1.0:
            raise ValueError("prob_threshold: must lie in (0, 1)")
        if self.size_threshold < 1:
            raise ValueError("size_threshold: must be >= 1")
        if not 0.0 < self.recall <= 1.0:
            raise ValueError("recall: must lie in (0, 1]")
        if self.availability_radius_m <= 0:
            raise ValueError("availability_radius_m: must be positive")
        if self.coverage_cutoff_m <= 0:
            raise ValueError("coverage_cutoff_m: must be positive")
        if self.coverage_horizon_m < self.coverage_cutoff_m:
            raise ValueError("coverage_horizon_m: must be >= coverage_cutoff_m")
        if self.imputed_road_width_m <= 0:
            raise ValueError("imputed_road_width_m: must be positive")
        if self.date_policy not in ("oldest-in-range", "oldest", "newest"):
            raise ValueError("date_policy: must be oldest-in-range, oldest, or newest")
        if self.quorum < 1:
            raise ValueError("quorum: must be >= 1")

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        values = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        defaults = cls()
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _coerce(value, getattr(defaults, key))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
        return cls(**values)

    def to_file(self, path) -> None:
        Path(path).write_text(self.dumps())

    def dumps(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)!r}")
        return "\n".join(lines) + "\n"

    def merged(self, overrides: dict) -> "PipelineConfig":
        """A copy with non-None override values applied (CLI flags win)."""
        values = dataclasses.asdict(self)
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in values:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = value
        return PipelineConfig(**values)

    def sha256(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()


def _coerce(text: str, default):
    if isinstance(default, bool):
        if text in ("true", "True", "1"):
            return True
        if text in ("false", "False", "0"):
            return False
        raise ValueError("expected a boolean")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if text and text[0] in "'\"" and text[-1] == text[0]:
        return text[1:-1]
    return text
