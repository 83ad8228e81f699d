"""Run configuration shared by the CLI subcommands."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from tradeshape.distfit import ClassifierConfig
from tradeshape.fitness import FitnessConfig
from tradeshape.ingest import ColumnMap


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GofConfig:
    alpha_ks: float = 0.05
    alpha_cvm: float = 0.01
    bootstrap: int = 1000

    def __post_init__(self) -> None:
        if not (0 < self.alpha_ks < 1 and 0 < self.alpha_cvm < 1):
            raise ConfigError("alphas must lie in (0, 1)")
        if self.bootstrap != 0 and self.bootstrap < 100:
            raise ConfigError("bootstrap must be 0 (naive p-values) or >= 100")


@dataclass(frozen=True)
class RunConfig:
    trade_file: str | None = None
    indicator_file: str | None = None
    matrix_file: str | None = None
    out_dir: str = "out"
    rca_threshold: float = 1.0
    bin_width: float = 0.25
    min_left_points: int = 10
    seed: int = 0
    jobs: int | None = None
    dump_histograms: bool = False
    fitness: FitnessConfig = field(default_factory=FitnessConfig)
    gof: GofConfig = field(default_factory=GofConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    columns: ColumnMap = field(default_factory=ColumnMap)

    def __post_init__(self) -> None:
        if not self.rca_threshold > 0:
            raise ConfigError("rca_threshold must be positive")
        if not self.bin_width > 0:
            raise ConfigError("bin_width must be positive")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        paths = [p for p in (self.trade_file, self.indicator_file, self.matrix_file) if p]
        resolved = [str(Path(p).resolve()) for p in paths]
        if len(set(resolved)) != len(resolved):
            raise ConfigError("input paths must be distinct")
        if str(Path(self.out_dir).resolve()) in resolved:
            raise ConfigError("out_dir must differ from the input paths")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def updated(self, **overrides: Any) -> RunConfig:
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


_NESTED = {"fitness": FitnessConfig, "gof": GofConfig, "classifier": ClassifierConfig, "columns": ColumnMap}


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    data = dict(data)
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key, cls in _NESTED.items():
        if key in data:
            sub = data[key] or {}
            allowed = {f.name for f in fields(cls)}
            bad = sorted(set(sub) - allowed)
            if bad:
                raise ConfigError(f"unknown keys in {key!r}: {', '.join(bad)}")
            try:
                data[key] = cls(**sub)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
    return RunConfig(**data)


def load_config(path: str | Path | None) -> RunConfig:
    """Read a JSON or YAML config file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    return config_from_dict(data)
