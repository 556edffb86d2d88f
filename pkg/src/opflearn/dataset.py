"""Labelled OPF corpora: samples, splits, non-trivial constraints, JSONL storage."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .acopf import (ConstraintId, ParameterVector, apply_parameters, build_problem, extract_regression_target,
                    nominal_parameters)
from .grid import GridCase, load_case
from .sampler import SamplerConfig, run_chains
from .solver import SolveOptions, SolveResult, solve

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SPLIT_FRACTIONS = (0.8, 0.1, 0.1)
MAX_UNCONVERGED = 0.05


class DatasetError(RuntimeError):
    pass


@dataclass
class Sample:
    x: np.ndarray
    y: np.ndarray
    binding: np.ndarray  # uint8 over the full inequality set, canonical order
    objective: float
    iterations: int = 0
    time: float = 0.0

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)
                and np.array_equal(self.binding, other.binding) and self.objective == other.objective
                and self.iterations == other.iterations and self.time == other.time)


@dataclass(frozen=True)
class NonTrivialSet:
    ids: tuple[ConstraintId, ...]
    positions: tuple[int, ...]  # positions in the full inequality order
    derived_from: str = "train"

    def __len__(self):
        return len(self.ids)


@dataclass
class Dataset:
    case: GridCase
    domain: str
    samples: list[Sample]
    split: dict[str, np.ndarray]
    constraint_order_hash: str
    split_seed: int = 0
    _nontrivial: NonTrivialSet | None = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def constraints(self) -> list[ConstraintId]:
        return build_problem(self.case).constraints

    @property
    def nontrivial(self) -> NonTrivialSet:
        if self._nontrivial is None:
            self._nontrivial = derive_nontrivial(self)
        return self._nontrivial

    def parameter_template(self) -> ParameterVector:
        return nominal_parameters(self.case, self.domain)

    def arrays(self, part: str | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(X, Y, B) stacked for one split part (or everything)."""
        idx = np.arange(self.n) if part is None else self.split[part]
        X = np.array([self.samples[i].x for i in idx]).reshape(len(idx), -1)
        Y = np.array([self.samples[i].y for i in idx]).reshape(len(idx), -1)
        B = np.array([self.samples[i].binding for i in idx], dtype=np.uint8).reshape(len(idx), -1)
        return X, Y, B

    def subset(self, part: str) -> list[Sample]:
        return [self.samples[i] for i in self.split[part]]


# --------------------------------------------------------------------------
# labelling

def label_sample(x: np.ndarray, result: SolveResult) -> Sample:
    return Sample(x=np.asarray(x, dtype=float).copy(), y=extract_regression_target(result),
                  binding=np.asarray(result.binding, dtype=np.uint8), objective=float(result.objective),
                  iterations=int(result.iterations), time=float(result.wall_time))


def solve_parameters(case: GridCase, x: ParameterVector, opts: SolveOptions | None = None) -> SolveResult:
    return solve(build_problem(apply_parameters(case, x)), opts=opts)


def label_parameters(case: GridCase, xs: Sequence[ParameterVector], opts: SolveOptions | None = None,
                     max_unconverged: float = MAX_UNCONVERGED) -> list[Sample]:
    """Solve each x with the standard strategy; drop (and count) unconverged ones."""
    out, dropped = [], 0
    for x in xs:
        res = solve_parameters(case, x, opts)
        if res.converged:
            out.append(label_sample(x.values, res))
        else:
            dropped += 1
            log.info("dropped sample: solve ended %s", res.status)
    if xs and dropped / len(xs) > max_unconverged:
        raise DatasetError(f"{dropped}/{len(xs)} samples did not converge; sampler and solver disagree")
    return out


def split_sizes(n: int) -> tuple[int, int, int]:
    n_val = int(math.floor(SPLIT_FRACTIONS[1] * n + 0.5))
    n_test = int(math.floor(SPLIT_FRACTIONS[2] * n + 0.5))
    return n - n_val - n_test, n_val, n_test


def split_dataset(n: int | Dataset, seed: int = 0) -> dict[str, np.ndarray]:
    """Uniform shuffle by seed, then 80:10:10 (nearest rounding, train takes the rest)."""
    n = n.n if isinstance(n, Dataset) else int(n)
    if n < 10:
        raise ValueError("need at least 10 samples to split")
    perm = np.random.default_rng(seed).permutation(n)
    a, b, _ = split_sizes(n)
    return {"train": np.sort(perm[:a]), "val": np.sort(perm[a:a + b]), "test": np.sort(perm[a + b:])}


def generate_dataset(case: GridCase, config: SamplerConfig | None = None, n: int = 100,
                     split_seed: int | None = None, n_chains: int = 1, workers: int = 1) -> Dataset:
    """Sample n feasible parameter vectors and label them.

    Every accepted chain state already carries its standard solve, which is
    used as the label directly.
    """
    if n < 10:
        raise ValueError("n must be at least 10")
    config = config or SamplerConfig()
    chains = run_chains(case, config, n, n_chains=n_chains, workers=workers)
    samples = [label_sample(x.values, r) for ch in chains for x, r in zip(ch.samples, ch.results)]
    acc = sum(ch.accepted for ch in chains) / max(1, sum(ch.proposed for ch in chains))
    log.info("%s: %d samples, acceptance %.3f", case.name, len(samples), acc)
    return make_dataset(case, config.domain, samples, config.seed if split_seed is None else split_seed)


def make_dataset(case: GridCase, domain: str, samples: list[Sample], split_seed: int = 0) -> Dataset:
    problem = build_problem(case)
    for s in samples:
        if s.binding.size != problem.n_ineq:
            raise DatasetError(f"binding vector length {s.binding.size} != {problem.n_ineq}")
    return Dataset(case, domain, samples, split_dataset(len(samples), split_seed),
                   problem.constraint_order_hash(), split_seed)


# --------------------------------------------------------------------------
# constraint statistics

def derive_nontrivial(dataset: Dataset, part: str = "train") -> NonTrivialSet:
    """Constraints whose binding status takes both values within ``part``."""
    idx = dataset.split[part]
    if len(idx) == 0:
        raise DatasetError(f"{part} split is empty")
    B = np.array([dataset.samples[i].binding for i in idx], dtype=np.uint8)
    varies = B.min(axis=0) != B.max(axis=0)
    pos = tuple(int(k) for k in np.flatnonzero(varies))
    if not pos:
        log.warning("%s: no constraint changes binding status in %s", dataset.case.name, part)
    cons = dataset.constraints
    return NonTrivialSet(tuple(cons[k] for k in pos), pos, part)


def count_unique_active_sets(dataset: Dataset, nontrivial: NonTrivialSet | None = None,
                             indices: Iterable[int] | None = None) -> int:
    nt = dataset.nontrivial if nontrivial is None else nontrivial
    idx = range(dataset.n) if indices is None else indices
    cols = list(nt.positions)
    return len({dataset.samples[i].binding[cols].tobytes() for i in idx})


def audit(dataset: Dataset, k: int = 10, seed: int = 0, opts: SolveOptions | None = None,
          rtol: float = 1e-8) -> list[int]:
    """Re-solve k random samples; return indices whose stored labels do not reproduce."""
    rng = np.random.default_rng(seed)
    picks = rng.choice(dataset.n, size=min(k, dataset.n), replace=False)
    template = dataset.parameter_template()
    bad = []
    for i in sorted(int(p) for p in picks):
        s = dataset.samples[i]
        res = solve_parameters(dataset.case, template.with_values(s.x), opts)
        ok = (res.converged and abs(res.objective - s.objective) <= rtol * max(1.0, abs(s.objective))
              and np.allclose(extract_regression_target(res), s.y, rtol=0, atol=1e-8)
              and np.array_equal(res.binding, s.binding))
        if not ok:
            bad.append(i)
    return bad


# --------------------------------------------------------------------------
# storage

def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def save(dataset: Dataset, path: str | Path) -> None:
    header = {
        "record": "header", "schema_version": SCHEMA_VERSION, "case": dataset.case.name,
        "domain": dataset.domain, "constraint_order_hash": dataset.constraint_order_hash,
        "n": dataset.n, "split_seed": dataset.split_seed,
        "split": {k: v.tolist() for k, v in dataset.split.items()},
    }
    lines = [_dumps(header)]
    for s in dataset.samples:
        lines.append(_dumps({
            "x": s.x.tolist(), "y": s.y.tolist(), "binding": "".join("1" if b else "0" for b in s.binding),
            "objective": s.objective, "iterations": s.iterations, "time": s.time,
        }))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load(path: str | Path, case: GridCase | None = None) -> Dataset:
    text = Path(path).read_text(encoding="utf-8")
    if not text.endswith("\n"):
        raise DatasetError(f"{path}: truncated (no trailing newline)")
    lines = text.split("\n")[:-1]
    try:
        header = json.loads(lines[0])
        records = [json.loads(ln) for ln in lines[1:]]
    except (json.JSONDecodeError, IndexError) as e:
        raise DatasetError(f"{path}: corrupt record ({e})") from None
    if header.get("record") != "header":
        raise DatasetError(f"{path}: missing header record")
    if header.get("schema_version") != SCHEMA_VERSION:
        raise DatasetError(f"{path}: schema version {header.get('schema_version')} != {SCHEMA_VERSION}")
    if len(records) != header["n"]:
        raise DatasetError(f"{path}: header says {header['n']} samples, found {len(records)}")
    case = case or load_case(header["case"])
    problem = build_problem(case)
    if problem.constraint_order_hash() != header["constraint_order_hash"]:
        raise DatasetError(f"{path}: constraint order differs from case {case.name}")
    samples = []
    for r in records:
        b = np.frombuffer(r["binding"].encode(), dtype=np.uint8) - ord("0")
        samples.append(Sample(np.array(r["x"], dtype=float), np.array(r["y"], dtype=float),
                              b.astype(np.uint8), float(r["objective"]), int(r["iterations"]), float(r["time"])))
    split = {k: np.array(v, dtype=int) for k, v in header["split"].items()}
    return Dataset(case, header["domain"], samples, split, header["constraint_order_hash"], header["split_seed"])
