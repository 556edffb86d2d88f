"""Command-line entry point: ``opf inspect|solve|sample|dataset|train|eval|gain|report``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from .acopf import DOMAINS, LOAD_ONLY, ConstraintId, apply_parameters, build_problem, nominal_parameters
from .grid import CaseError, build_graph, load_case
from .sampler import SamplerConfig, SamplerError, parameter_box, run_chains, suggest_alpha
from .solver import FeasibilityTestError, SolveOptions, SolveStrategy, active_set, iterative_feasibility_test, solve


def _alpha(value: str, case, domain: str) -> float:
    if value == "auto":
        return suggest_alpha(parameter_box(nominal_parameters(case, domain)).dim)
    return float(value)


def _print(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_inspect(a) -> int:
    case = load_case(a.case)
    problem = build_problem(case)
    fams = {}
    for c in problem.constraints:
        fams[c.family] = fams.get(c.family, 0) + 1
    info = {"case": case.name, "buses": case.n_bus, "branches": case.n_branch, "generators": case.n_gen,
            "base_mva": case.base_mva, "inequalities": problem.n_ineq, "families": fams,
            "constraint_order_hash": problem.constraint_order_hash()}
    deg = build_graph(case).degree.astype(int)
    info["degree_histogram"] = {str(k): int(v) for k, v in zip(*np.unique(deg, return_counts=True))}
    for dom in DOMAINS:
        x0 = nominal_parameters(case, dom)
        info[f"dim_{dom}"] = len(x0.values)
        info[f"free_{dom}"] = parameter_box(x0).dim
    _print(info)
    return 0


def cmd_solve(a) -> int:
    case = load_case(a.case)
    if a.params:
        x = nominal_parameters(case, a.domain).with_values(np.loadtxt(a.params, ndmin=1))
        case = apply_parameters(case, x)
    problem = build_problem(case)
    opts = SolveOptions(tol=a.tol, max_iter=a.max_iter)
    active = _active_ids(a)
    if a.strategy == "feasibility_test":
        predicted = active if active is not None else active_set(problem, solve(problem, opts=opts))
        try:
            out = iterative_feasibility_test(problem, predicted, opts)
        except FeasibilityTestError as e:
            print(f"feasibility test failed after {e.rounds} rounds: {e}", file=sys.stderr)
            return 1
        r = out.result
        extra = {"rounds": out.rounds, "added": [str(c) for c in out.added], "total_time": out.total_time}
    else:
        strat = SolveStrategy.standard()
        if a.strategy == "warm_start":
            if a.warm_start:
                y0 = np.loadtxt(a.warm_start, ndmin=1)
            else:
                ref = solve(problem, opts=opts)
                y0 = np.r_[ref.point.vm, ref.point.pg]
            strat = SolveStrategy.warm_start(y0)
        elif a.strategy == "reduced":
            act = active if active is not None else active_set(problem, solve(problem, opts=opts))
            strat = SolveStrategy.reduced(act)
        r = solve(problem, strat, opts)
        extra = {"clipped": r.clipped} if a.strategy == "warm_start" else {}
    _print({"case": case.name, "strategy": a.strategy, "status": r.status, "objective": r.objective,
            "iterations": r.iterations, "wall_time": r.wall_time, "kkt_residual": r.kkt_residual,
            "binding": [str(c) for c, b in zip(r.constraints, r.binding) if b], **extra})
    return 0 if r.converged else 1


def _active_ids(a):
    ids = list(a.active or [])
    if a.active_set:
        ids += [ln.strip() for ln in open(a.active_set) if ln.strip() and not ln.startswith("#")]
    if not ids and not a.active_set:
        return None
    return {ConstraintId.parse(t) for t in ids}


def _sampler_config(a, case) -> SamplerConfig:
    return SamplerConfig(alpha=_alpha(a.alpha, case, a.domain), seed=a.seed, burn_in=a.burn_in,
                         thinning=a.thinning, domain=a.domain)


def cmd_sample(a) -> int:
    case = load_case(a.case)
    cfg = _sampler_config(a, case)
    chains = run_chains(case, cfg, a.n, n_chains=a.chains, workers=a.workers)
    out = open(a.out, "w") if a.out else None
    try:
        for ch in chains:
            if out:
                for x in ch.samples:
                    out.write(json.dumps({"chain": ch.chain_id, "x": x.values.tolist()}) + "\n")
            _print({"chain": ch.chain_id, "samples": len(ch.samples), "proposed": ch.proposed,
                    "accepted": ch.accepted, "acceptance": ch.accepted / max(ch.proposed, 1),
                    "rejected": ch.rejected, "alpha": cfg.alpha})
    finally:
        if out:
            out.close()
    return 0


def cmd_dataset(a) -> int:
    case = load_case(a.case)
    cfg = _sampler_config(a, case)
    d = ds.generate_dataset(case, cfg, n=a.n, split_seed=a.split_seed, n_chains=a.chains, workers=a.workers)
    ds.save(d, a.out)
    nt = d.nontrivial
    info = {"path": a.out, "case": case.name, "domain": d.domain, "n": d.n, "dim_x": len(d.samples[0].x),
            "split": {k: len(v) for k, v in d.split.items()}, "n_nontrivial": len(nt),
            "unique_active_sets": ds.count_unique_active_sets(d, nt)}
    if a.audit:
        info["audit_mismatches"] = ds.audit(d, k=a.audit)
    _print(info)
    return 0


def _config(a):
    from .experiment import ExperimentConfig, parse_overrides
    return ExperimentConfig.load(a.config, parse_overrides(a.overrides))


def cmd_train(a) -> int:
    from .experiment import pipeline
    cfg = _config(a)
    pipeline.dataset_summary(cfg)
    for rec in pipeline.train(cfg):
        _print(rec)
    return 0


def cmd_eval(a) -> int:
    from .experiment import pipeline
    for rec in pipeline.evaluate(_config(a)):
        _print(rec)
    return 0


def cmd_gain(a) -> int:
    from .experiment import pipeline
    from .experiment.report import report
    cfg = _config(a)
    for rec in pipeline.gain(cfg):
        _print(rec)
    for p in report(cfg.out):
        if p.name == "table4.tsv":
            print(p.read_text(), end="")
    return 0


def cmd_report(a) -> int:
    from .experiment.report import report
    target = Path(a.config)
    results = target if target.is_dir() else _config(a).out
    for p in report(results, a.out):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="opf", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("inspect", help="summarize a case")
    s.add_argument("case")
    s.set_defaults(func=cmd_inspect)

    s = sub.add_parser("solve", help="solve one AC-OPF instance")
    s.add_argument("case")
    s.add_argument("--strategy", choices=["standard", "warm_start", "reduced", "feasibility_test"],
                   default="standard",
                   help="without --warm-start / --active-set the standard solution serves as the prediction")
    s.add_argument("--active", nargs="*", help="constraint ids family:element:side for reduced solves")
    s.add_argument("--active-set", help="file with one constraint id per line (reduced / feasibility_test)")
    s.add_argument("--warm-start", help="text file with y0 = [Vm, Pg] in p.u.")
    s.add_argument("--params", help="text file with a parameter vector for --domain")
    s.add_argument("--domain", choices=DOMAINS, default=LOAD_ONLY)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iter", type=int, default=300)
    s.set_defaults(func=cmd_solve)

    for name, fn, hlp in (("sample", cmd_sample, "run Metropolis-Hastings chains"),
                          ("dataset", cmd_dataset, "generate and label a dataset")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("case")
        s.add_argument("-n", type=int, default=100, help="samples to emit")
        s.add_argument("--domain", choices=DOMAINS, default=LOAD_ONLY)
        s.add_argument("--alpha", default="0.05", help="proposal std in the unit cube, or 'auto'")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--burn-in", type=int, default=50)
        s.add_argument("--thinning", type=int, default=5)
        s.add_argument("--chains", type=int, default=1)
        s.add_argument("--workers", type=int, default=1)
        s.set_defaults(func=fn)
        if name == "sample":
            s.add_argument("--out", help="JSONL file for the emitted parameter vectors")
        else:
            s.add_argument("--out", required=True, help="dataset JSONL path")
            s.add_argument("--split-seed", type=int, default=0)
            s.add_argument("--audit", type=int, default=0, help="re-solve this many samples and compare labels")

    for name, fn, hlp in (("train", cmd_train, "train the configured models"),
                          ("eval", cmd_eval, "test-split metrics of trained models"),
                          ("gain", cmd_gain, "computational gain of warm starts and reduced problems"),
                          ("report", cmd_report, "write Table 1-4 style files")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("config", help="experiment config file" + (" or results directory" if name == "report" else ""))
        s.add_argument("overrides", nargs="*", help="key=value config overrides")
        if name == "report":
            s.add_argument("--out", help="table directory (default <results>/tables)")
        s.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CaseError, SamplerError, ds.DatasetError, FileNotFoundError, ValueError) as e:
        print(f"opf {args.command}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
