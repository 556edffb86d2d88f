"""Tables from the line-delimited records in a results directory.

Records are read from dataset.jsonl, metrics.jsonl and gain.jsonl; when a key repeats the
latest record wins. Missing cells are written as "-".
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..models.spec import ARCHITECTURES
from .training import read_jsonl

GAP = "-"
CLASS_METRICS = ("bce", "recall", "precision", "auc")
TRUTH = "truth"


def _latest(records, key):
    out = {}
    for r in records:
        out[key(r)] = r
    return list(out.values())


def _fmt(v) -> str:
    if v is None:
        return GAP
    if isinstance(v, str):
        return v
    return f"{v:.6g}"


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


def _cell(row: dict, key: str):
    """Missing runs are gaps; runs whose metric was undefined on every seed say so."""
    if key not in row:
        return GAP
    return "undefined" if row[key] is None else row[key]


def _write(path: Path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def _case_key(r) -> str:
    return f"{r['case']}/{r['domain']}"


def aggregate(results: str | Path) -> dict:
    """Mean-over-seeds aggregates, keyed like the emitted tables."""
    results = Path(results)
    data = _latest(read_jsonl(results / "dataset.jsonl"), _case_key)
    metrics = _latest(read_jsonl(results / "metrics.jsonl"),
                      lambda r: (_case_key(r), r["task"], r["architecture"], r["seed"]))
    gains = _latest(read_jsonl(results / "gain.jsonl"), lambda r: (_case_key(r), r["strategy"], r["model"]))
    agg = {"table1": {_case_key(r): {k: r[k] for k in ("dim_x", "n_nontrivial", "unique_active_sets", "n")}
                      for r in data},
           "table2": {}, "table3": {}, "table4": {}}
    for r in metrics:
        ck, a = _case_key(r), r["architecture"]
        if r["task"] == "regression":
            agg["table2"].setdefault(ck, {}).setdefault(a, []).append(r["mse"])
        else:
            for m in CLASS_METRICS:
                agg["table3"].setdefault(ck, {}).setdefault(m, {}).setdefault(a, []).append(r[m])
    agg["table2"] = {ck: {a: _mean(v) for a, v in row.items()} for ck, row in agg["table2"].items()}
    agg["table3"] = {ck: {m: {a: _mean(v) for a, v in row.items()} for m, row in ms.items()}
                     for ck, ms in agg["table3"].items()}
    for r in gains:
        agg["table4"].setdefault(_case_key(r), {}).setdefault(r["strategy"], {})[r["model"]] = r["mean_gain"]
    return agg


def report(results: str | Path, out: str | Path | None = None) -> list[Path]:
    """Write table1..table4 TSV files (and report.json) under ``out`` (default results/tables)."""
    results = Path(results)
    out = Path(out) if out else results / "tables"
    out.mkdir(parents=True, exist_ok=True)
    agg = aggregate(results)
    cases = sorted(set(agg["table1"]) | set(agg["table2"]) | set(agg["table3"]) | set(agg["table4"]))
    paths = []

    p = out / "table1.tsv"
    _write(p, ["case", "dim_x", "n_nontrivial", "unique_active_sets", "n_samples"],
           [[ck] + [agg["table1"].get(ck, {}).get(k) for k in ("dim_x", "n_nontrivial", "unique_active_sets", "n")]
            for ck in cases])
    paths.append(p)

    p = out / "table2.tsv"
    _write(p, ["case"] + list(ARCHITECTURES),
           [[ck] + [agg["table2"].get(ck, {}).get(a) for a in ARCHITECTURES] for ck in cases if ck in agg["table2"]])
    paths.append(p)

    p = out / "table3.tsv"
    rows = []
    for ck in cases:
        for m in CLASS_METRICS:
            if ck in agg["table3"]:
                row = agg["table3"][ck].get(m, {})
                rows.append([ck, m] + [_cell(row, a) for a in ARCHITECTURES])
    _write(p, ["case", "metric"] + list(ARCHITECTURES), rows)
    paths.append(p)

    p = out / "table4.tsv"
    models = list(ARCHITECTURES) + [TRUTH]
    rows = [[ck, st] + [agg["table4"][ck][st].get(mdl) for mdl in models]
            for ck in cases if ck in agg["table4"] for st in sorted(agg["table4"][ck])]
    _write(p, ["case", "strategy"] + models, rows)
    paths.append(p)

    p = out / "report.json"
    p.write_text(json.dumps(agg, sort_keys=True, indent=1) + "\n")
    paths.append(p)
    return paths


def write_roc(path: str | Path, roc: np.ndarray | None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("threshold\tfpr\ttpr\n")
        if roc is not None:
            for t, f, r in roc:
                fh.write(f"{float(t)!r}\t{float(f)!r}\t{float(r)!r}\n")


def read_table(path: str | Path) -> list[list[str]]:
    return [line.split("\t") for line in Path(path).read_text().splitlines()]
