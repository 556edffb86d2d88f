"""Experiment configuration: a plain-text key-value file plus command-line overrides."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..acopf import DOMAINS, LOAD_ONLY
from ..models.spec import ARCHITECTURES, HEADS, parse_kv

WARM_START, FEASIBILITY_TEST = "warm_start", "feasibility_test"
STRATEGIES = (WARM_START, FEASIBILITY_TEST)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    case: str = "case14"
    domain: str = LOAD_ONLY
    dataset: str = ""
    output: str = "results"
    architectures: tuple[str, ...] = ARCHITECTURES
    tasks: tuple[str, ...] = HEADS
    epochs: int = 200
    batch_size: int = 32  # 0 = full batch
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    lr: float = 1e-4
    scaling: str = "minmax"
    readout: str = "node"
    weighted: bool = False
    strategies: tuple[str, ...] = STRATEGIES
    gain_samples: int = 0  # 0 = whole test split
    gain_repeats: int = 3
    threshold: float = 0.5
    workers: int = 1

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for a in self.architectures:
            if a not in ARCHITECTURES:
                raise ConfigError(f"unknown architecture {a!r}")
        for t in self.tasks:
            if t not in HEADS:
                raise ConfigError(f"unknown task {t!r}")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}")
        if self.epochs < 0 or self.batch_size < 0 or self.gain_repeats < 1:
            raise ConfigError("epochs and batch_size must be ≥ 0, gain_repeats ≥ 1")

    def check_files(self) -> None:
        if not self.dataset or not Path(self.dataset).is_file():
            raise ConfigError(f"dataset file {self.dataset!r} does not exist")

    @property
    def out(self) -> Path:
        return Path(self.output)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(i) for i in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, pairs: dict[str, str]) -> "ExperimentConfig":
        return replace(self, **_coerce(pairs))

    @classmethod
    def from_text(cls, text: str, overrides: dict[str, str] | None = None) -> "ExperimentConfig":
        kv = parse_kv(text)
        kv.update(overrides or {})
        return cls(**_coerce(kv))

    @classmethod
    def load(cls, path: str | Path, overrides: dict[str, str] | None = None) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(), overrides)


def _coerce(kv: dict[str, str]) -> dict:
    types = {f.name: str(f.type) for f in fields(ExperimentConfig)}
    out = {}
    for k, v in kv.items():
        if k not in types:
            raise ConfigError(f"unknown config key {k!r}")
        t = types[k]
        v = str(v).strip()
        if t.startswith("tuple[int"):
            out[k] = tuple(int(s) for s in v.split(",") if s.strip())
        elif t.startswith("tuple"):
            out[k] = tuple(s.strip() for s in v.split(",") if s.strip())
        elif t == "bool":
            out[k] = v.lower() in ("1", "true", "yes")
        elif t == "int":
            out[k] = int(v)
        elif t == "float":
            out[k] = float(v)
        else:
            out[k] = v
    return out


def parse_overrides(items) -> dict[str, str]:
    """``["epochs=10", "seeds=0,1"]`` → dict."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out
