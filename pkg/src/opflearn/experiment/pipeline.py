"""Train / evaluate / gain steps over an ExperimentConfig, writing records into its output directory.

Layout of ``config.output``::

    checkpoints/<task>_<arch>_seed<k>.{ckpt,spec,curve.tsv}
    train.jsonl  metrics.jsonl  gain.jsonl  dataset.jsonl
    roc/<case>_<domain>_<arch>_seed<k>.tsv
    gain/<case>_<domain>_<model>_<strategy>.tsv
    tables/table{1,2,3,4}.tsv, report.json
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import dataset as ds
from ..models import CLASSIFICATION, REGRESSION
from .config import FEASIBILITY_TEST, WARM_START, ExperimentConfig
from .gain import compute_gain, truth_predictions
from .report import TRUTH, write_roc
from .training import (evaluate_classification, evaluate_regression, load_run, model_specs, run_name,
                       train_model, write_jsonl)

log = logging.getLogger(__name__)

NEEDS = {WARM_START: REGRESSION, FEASIBILITY_TEST: CLASSIFICATION}


def _base(cfg: ExperimentConfig, d: ds.Dataset) -> dict:
    return {"case": d.case.name, "domain": d.domain}


def load_dataset(cfg: ExperimentConfig) -> ds.Dataset:
    cfg.check_files()
    d = ds.load(cfg.dataset)
    if d.domain != cfg.domain:
        raise ValueError(f"dataset domain {d.domain!r} differs from config domain {cfg.domain!r}")
    return d


def checkpoint_path(cfg: ExperimentConfig, task: str, arch: str, seed: int) -> Path:
    return cfg.out / "checkpoints" / f"{run_name(task, arch, seed)}.ckpt"


def dataset_summary(cfg: ExperimentConfig, d: ds.Dataset | None = None) -> dict:
    d = d or load_dataset(cfg)
    nt = d.nontrivial
    rec = {**_base(cfg, d), "n": d.n, "dim_x": len(d.samples[0].x) if d.n else 0,
           "n_nontrivial": len(nt), "unique_active_sets": ds.count_unique_active_sets(d, nt),
           "nontrivial": [str(c) for c in nt.ids]}
    write_jsonl(cfg.out / "dataset.jsonl", [rec])
    return rec


def _common(cfg: ExperimentConfig) -> dict:
    return {"scaling": cfg.scaling, "readout": cfg.readout, "weighted": cfg.weighted}


def _train_job(args):
    cfg, task, arch, seed = args
    d = load_dataset(cfg)
    spec = model_specs(d, task, seed, [arch], **_common(cfg))[arch]
    run = train_model(d, spec, cfg.epochs, cfg.batch_size, cfg.lr,
                      checkpoint=checkpoint_path(cfg, task, arch, seed))
    log.info("trained %s %s seed %d: best val %.4g at epoch %d (%.0fs)", task, arch, seed, run.best_val,
             run.best_epoch, run.seconds)
    return {**_base(cfg, d), **run.record()}


def train(cfg: ExperimentConfig) -> list[dict]:
    jobs = [(cfg, t, a, s) for t in cfg.tasks for a in cfg.architectures for s in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(_train_job, jobs))
    else:
        records = [_train_job(j) for j in jobs]
    write_jsonl(cfg.out / "train.jsonl", records)
    return records


def evaluate(cfg: ExperimentConfig) -> list[dict]:
    d = load_dataset(cfg)
    records = []
    for task in cfg.tasks:
        for arch in cfg.architectures:
            for seed in cfg.seeds:
                path = checkpoint_path(cfg, task, arch, seed)
                if not path.exists():
                    log.warning("missing checkpoint %s", path)
                    continue
                model, targets, header = load_run(path, d)
                rec = {**_base(cfg, d), "task": task, "architecture": arch, "seed": seed,
                       "epoch": header["epoch"]}
                if task == REGRESSION:
                    rec["mse"] = evaluate_regression(model, targets, d)
                else:
                    m = evaluate_classification(model, targets, d, threshold=cfg.threshold)
                    rec.update(m.as_record())
                    write_roc(cfg.out / "roc" / f"{d.case.name}_{d.domain}_{arch}_seed{seed}.tsv", m.roc)
                records.append(rec)
    write_jsonl(cfg.out / "metrics.jsonl", records)
    return records


def _test_indices(cfg: ExperimentConfig, d: ds.Dataset) -> np.ndarray:
    idx = d.split["test"]
    return idx[:cfg.gain_samples] if cfg.gain_samples > 0 else idx


def _write_gain_raw(path: Path, rep) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("index\tt_standard\tt_method\tgain\trounds\titer_standard\titer_method\tconverged\n")
        for s in rep.samples:
            fh.write(f"{s.index}\t{float(s.t_standard)!r}\t{float(s.t_method)!r}\t{float(s.gain)!r}\t{s.rounds}\t"
                     f"{s.iterations_standard}\t{s.iterations_method}\t{int(s.converged)}\n")


def gain(cfg: ExperimentConfig, include_truth: bool = True) -> list[dict]:
    """Table-4 gains for the first seed of every architecture, plus ground-truth predictions."""
    d = load_dataset(cfg)
    idx = _test_indices(cfg, d)
    seed = cfg.seeds[0]
    cache: dict = {}
    records = []
    for strategy in cfg.strategies:
        models = []
        if include_truth:
            models.append((TRUTH, truth_predictions(d, strategy, idx)))
        for arch in cfg.architectures:
            path = checkpoint_path(cfg, NEEDS[strategy], arch, seed)
            if not path.exists():
                log.warning("missing checkpoint %s; %s gap in the gain table", path, arch)
                continue
            model, targets, _ = load_run(path, d)
            X = np.array([d.samples[i].x for i in idx])
            P = model.predict(X)
            models.append((arch, targets.physical(P) if strategy == WARM_START else P))
        for name, pred in models:
            rep = compute_gain(d, pred, strategy, name, idx, repeats=cfg.gain_repeats,
                               threshold=cfg.threshold, standard_cache=cache)
            _write_gain_raw(cfg.out / "gain" / f"{d.case.name}_{d.domain}_{name}_{strategy}.tsv", rep)
            records.append({**_base(cfg, d), **rep.record()})
    write_jsonl(cfg.out / "gain.jsonl", records)
    return records
