"""Model specifications and their plain-text key-value file format."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

ARCHITECTURES = ("FCNN", "CNN", "GCN", "CHNN", "SNN")
GNNS = ("GCN", "CHNN", "SNN")
REGRESSION, CLASSIFICATION = "regression", "classification"
HEADS = (REGRESSION, CLASSIFICATION)
READOUTS = ("node", "flatten")

DEFAULT_HIDDEN = {"FCNN": (512, 256), "CNN": (8, 16), "GCN": (64, 64, 64), "CHNN": (64, 64, 64),
                  "SNN": (64, 64, 64)}
DEFAULT_K = {"FCNN": 0, "CNN": 0, "GCN": 1, "CHNN": 5, "SNN": 5}


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    architecture: str
    head: str
    out_dim: int
    hidden: tuple[int, ...] = ()
    K: int = -1  # -1: architecture default
    fc_hidden: tuple[int, ...] = (256,)  # CNN fully-connected blocks after the conv stack
    dropout: float = 0.4
    readout: str = "node"  # GNN regression head
    scaling: str = "minmax"  # CNN / GNN input scaling
    weighted: bool = False  # GNN adjacency weighted by 1/|x|
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise SpecError(f"unknown architecture {self.architecture!r}")
        if self.head not in HEADS:
            raise SpecError(f"unknown head {self.head!r}")
        if self.out_dim < 1:
            raise SpecError("out_dim must be positive")
        if not self.hidden:
            object.__setattr__(self, "hidden", DEFAULT_HIDDEN[self.architecture])
        if self.K < 0:
            object.__setattr__(self, "K", DEFAULT_K[self.architecture])
        if self.architecture == "GCN" and self.K != 1:
            raise SpecError("GCN is first-order: K must be 1")
        if any(h < 1 for h in self.hidden + self.fc_hidden):
            raise SpecError("layer widths must be positive")
        if self.architecture in GNNS and len(self.hidden) != 3:
            raise SpecError("graph networks use three convolution layers")
        if self.readout not in READOUTS:
            raise SpecError(f"unknown readout {self.readout!r}")
        if not 0 <= self.dropout < 1:
            raise SpecError("dropout must be in [0, 1)")

    def with_(self, **kw) -> "ModelSpec":
        return replace(self, **kw)

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

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    @classmethod
    def from_text(cls, text: str) -> "ModelSpec":
        kv = parse_kv(text)
        types = {f.name: f.type for f in fields(cls)}
        unknown = set(kv) - set(types)
        if unknown:
            raise SpecError(f"unknown model spec keys: {sorted(unknown)}")
        args = {}
        for k, v in kv.items():
            t = str(types[k])
            if "tuple" in t:
                args[k] = tuple(int(s) for s in v.split(",") if s.strip())
            elif t == "bool":
                args[k] = v.lower() in ("1", "true", "yes")
            elif t == "int":
                args[k] = int(v)
            elif t == "float":
                args[k] = float(v)
            else:
                args[k] = v
        return cls(**args)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> "ModelSpec":
        return cls.from_text(Path(path).read_text())


def parse_kv(text: str) -> dict[str, str]:
    """``key = value`` lines; '#' starts a comment; later keys override earlier ones."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {n}: expected 'key = value', got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out
