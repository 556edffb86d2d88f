"""Training runs: z-scored regression targets, non-trivial binding labels, best-val checkpoints."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import Dataset
from ..models import CLASSIFICATION, REGRESSION, Model, ModelSpec, build_model, parity_specs, regression_dim
from ..nn import Adam, RNGStreams, bce_loss, mse_loss
from ..nn.checkpoint import load_checkpoint, read_header, save_checkpoint
from .metrics import ClassificationMetrics, bce, classification_metrics, mse

log = logging.getLogger(__name__)

# target variation below the solver tolerance is numerical noise, not signal
STD_FLOOR = 1e-6


class TrainingError(RuntimeError):
    pass


@dataclass
class Targets:
    """Task-specific targets: z-scored [Vm, Pg] or binding labels of the non-trivial constraints."""
    task: str
    mean: np.ndarray | None = None
    std: np.ndarray | None = None
    positions: np.ndarray | None = None

    @classmethod
    def fit(cls, dataset: Dataset, task: str) -> "Targets":
        if task == REGRESSION:
            _, Y, _ = dataset.arrays("train")
            std = Y.std(axis=0)
            # constant targets (e.g. Vm or Pg pinned at a limit) are left unscaled
            std = np.where(std > STD_FLOOR, std, 1.0)
            return cls(task, mean=Y.mean(axis=0), std=std)
        nt = dataset.nontrivial
        if len(nt) == 0:
            raise TrainingError("no non-trivial constraints in the training split: nothing to classify")
        return cls(task, positions=np.array(nt.positions, dtype=int))

    @property
    def dim(self) -> int:
        return len(self.mean) if self.task == REGRESSION else len(self.positions)

    def of(self, dataset: Dataset, part: str) -> np.ndarray:
        _, Y, B = dataset.arrays(part)
        if self.task == REGRESSION:
            return (Y - self.mean) / self.std
        return B[:, self.positions].astype(float)

    def physical(self, Z: np.ndarray) -> np.ndarray:
        """Normalized regression outputs back to p.u. [Vm, Pg]."""
        return Z * self.std + self.mean

    def to_dict(self) -> dict:
        return {k: (None if v is None else np.asarray(v).tolist()) for k, v in
                (("task", self.task), ("mean", self.mean), ("std", self.std), ("positions", self.positions))}

    @classmethod
    def from_dict(cls, d: dict) -> "Targets":
        arr = lambda v, dt=float: None if v is None else np.asarray(v, dtype=dt)
        return cls(d["task"], arr(d["mean"]), arr(d["std"]), arr(d["positions"], int))


@dataclass
class TrainedRun:
    spec: ModelSpec
    model: Model
    targets: Targets
    curve: list[tuple[int, float, float]]  # (epoch, train loss, val loss); epoch 0 = initialization
    best_epoch: int
    best_val: float
    seconds: float
    checkpoint: Path | None = None

    def record(self) -> dict:
        return {"architecture": self.spec.architecture, "task": self.spec.head, "seed": self.spec.seed,
                "best_epoch": self.best_epoch, "best_val": self.best_val, "seconds": self.seconds,
                "n_parameters": self.model.n_parameters(), "spec_hash": self.spec.hash,
                "checkpoint": str(self.checkpoint) if self.checkpoint else None}


def _loss(task: str):
    return mse_loss if task == REGRESSION else bce_loss


def _snapshot(model: Model):
    return [p.data.copy() for p in model.parameters()] + [b.copy() for _, b in model.net.buffers()]


def _restore(model: Model, snap) -> None:
    arrays = [p.data for p in model.parameters()] + [b for _, b in model.net.buffers()]
    for a, s in zip(arrays, snap):
        a[...] = s


def evaluate_loss(model: Model, enc, T: np.ndarray, task: str, batch: int = 512) -> float:
    P = model.predict(enc, batch)
    return mse(P, T) if task == REGRESSION else bce(P, T)


def train_model(dataset: Dataset, spec: ModelSpec, epochs: int, batch_size: int = 32, lr: float = 1e-4,
                targets: Targets | None = None, checkpoint: str | Path | None = None) -> TrainedRun:
    """One seeded run. The returned model holds the best-validation weights (epoch 0 = init)."""
    t0 = time.perf_counter()
    targets = targets or Targets.fit(dataset, spec.head)
    if targets.dim != spec.out_dim:
        raise TrainingError(f"spec out_dim {spec.out_dim} != target width {targets.dim}")
    model = build_model(spec, dataset.case, dataset.domain)
    streams = RNGStreams(spec.seed)
    shuffle = streams.stream("shuffle")
    loss_fn = _loss(spec.head)
    Xtr, _, _ = dataset.arrays("train")
    Xva, _, _ = dataset.arrays("val")
    enc_tr, enc_va = model.encode(Xtr), model.encode(Xva)
    Ttr, Tva = targets.of(dataset, "train"), targets.of(dataset, "val")
    n = len(Ttr)
    if n < 2:
        raise TrainingError("training split needs at least two samples")
    bs = n if batch_size <= 0 else min(batch_size, n)
    opt = Adam(model.parameters(), lr=lr)

    best_val = evaluate_loss(model, enc_va, Tva, spec.head) if len(Tva) else np.inf
    curve = [(0, evaluate_loss(model, enc_tr, Ttr, spec.head), best_val)]
    best, best_epoch = _snapshot(model), 0
    for epoch in range(1, epochs + 1):
        model.net.train()
        perm = shuffle.permutation(n)
        total, seen = 0.0, 0
        for b, start in enumerate(range(0, n, bs)):
            idx = perm[start:start + bs]
            if len(idx) < 2:  # batchnorm needs two samples
                continue
            loss = loss_fn(model(enc_tr.take(idx)), Ttr[idx])
            val = loss.item()
            if not np.isfinite(val):
                raise TrainingError(f"{spec.architecture} seed {spec.seed}: non-finite loss at epoch {epoch}, "
                                    f"batch {b}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += val * len(idx)
            seen += len(idx)
        v = evaluate_loss(model, enc_va, Tva, spec.head) if len(Tva) else total / seen
        if not np.isfinite(v):
            raise TrainingError(f"{spec.architecture} seed {spec.seed}: non-finite validation loss at epoch {epoch}")
        curve.append((epoch, total / seen, v))
        if v < best_val:
            best_val, best_epoch, best = v, epoch, _snapshot(model)
    _restore(model, best)
    model.net.eval()
    run = TrainedRun(spec, model, targets, curve, best_epoch, float(best_val), time.perf_counter() - t0)
    if checkpoint is not None:
        run.checkpoint = Path(checkpoint)
        save_run(run, run.checkpoint)
    return run


# --------------------------------------------------------------------------
# persistence

def save_run(run: TrainedRun, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    run.spec.save(path.with_suffix(".spec"))
    save_checkpoint(path, run.model.net, run.spec.hash, run.spec.seed, run.best_epoch,
                    extra={"targets": run.targets.to_dict(), "best_val": run.best_val})
    with open(path.with_suffix(".curve.tsv"), "w") as fh:
        fh.write("epoch\ttrain_loss\tval_loss\n")
        for e, tr, va in run.curve:
            fh.write(f"{e}\t{tr!r}\t{va!r}\n")


def load_run(path: str | Path, dataset: Dataset) -> tuple[Model, Targets, dict]:
    path = Path(path)
    spec = ModelSpec.load(path.with_suffix(".spec"))
    model = build_model(spec, dataset.case, dataset.domain)
    header = load_checkpoint(path, model.net, spec.hash)
    model.net.eval()
    return model, Targets.from_dict(header["extra"]["targets"]), header


# --------------------------------------------------------------------------
# evaluation

def evaluate_regression(model: Model, targets: Targets, dataset: Dataset, part: str = "test") -> float:
    """MSE on z-scored targets."""
    if part not in dataset.split or len(dataset.split[part]) == 0:
        raise TrainingError(f"dataset has no {part!r} split")
    X, _, _ = dataset.arrays(part)
    return mse(model.predict(X), targets.of(dataset, part))


def evaluate_classification(model: Model, targets: Targets, dataset: Dataset, part: str = "test",
                            threshold: float = 0.5) -> ClassificationMetrics:
    if part not in dataset.split or len(dataset.split[part]) == 0:
        raise TrainingError(f"dataset has no {part!r} split")
    X, _, _ = dataset.arrays(part)
    return classification_metrics(model.predict(X), targets.of(dataset, part), threshold)


# --------------------------------------------------------------------------
# training plans

def model_specs(dataset: Dataset, task: str, seed: int, architectures=None, **common) -> dict[str, ModelSpec]:
    """Parity-sized specs for one task; output width from the dataset."""
    out_dim = regression_dim(dataset.case) if task == REGRESSION else len(dataset.nontrivial)
    if out_dim == 0:
        raise TrainingError("no non-trivial constraints in the training split: nothing to classify")
    specs = parity_specs(dataset.case, dataset.domain, task, out_dim, seed=seed, **common)
    return {a: s for a, s in specs.items() if architectures is None or a in architectures}


def run_name(task: str, architecture: str, seed: int) -> str:
    return f"{task}_{architecture}_seed{seed}"


def write_jsonl(path: Path, records) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def read_jsonl(path: Path) -> list[dict]:
    if not Path(path).exists():
        return []
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def checkpoint_header(path: str | Path) -> dict:
    return read_header(path)
