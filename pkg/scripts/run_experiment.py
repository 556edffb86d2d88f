"""Run one experiment config end to end: dataset, train, eval, gain, report.

The dataset named in the config is generated first if the file does not exist.

    python scripts/run_experiment.py scripts/configs/case14_desk.cfg [--n 500] [key=value ...]
"""
import argparse
import logging
import time
from pathlib import Path

from opflearn import dataset as ds
from opflearn.experiment import ExperimentConfig, parse_overrides, pipeline, report
from opflearn.grid import load_case
from opflearn.sampler import SamplerConfig

log = logging.getLogger("run_experiment")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("overrides", nargs="*", help="key=value config overrides")
    ap.add_argument("--n", type=int, default=500, help="samples to generate when the dataset is missing")
    ap.add_argument("--sampler-seed", type=int, default=0)
    ap.add_argument("--skip", nargs="*", default=(), choices=["train", "eval", "gain"])
    a = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")

    cfg = ExperimentConfig.load(a.config, parse_overrides(a.overrides))
    path = Path(cfg.dataset)
    if not path.exists():
        t = time.perf_counter()
        path.parent.mkdir(parents=True, exist_ok=True)
        d = ds.generate_dataset(load_case(cfg.case), SamplerConfig(seed=a.sampler_seed, domain=cfg.domain), n=a.n)
        ds.save(d, path)
        log.info("generated %s (%d samples, %d non-trivial) in %.0fs", path, d.n, len(d.nontrivial),
                 time.perf_counter() - t)
    pipeline.dataset_summary(cfg)
    steps = [("train", pipeline.train), ("eval", pipeline.evaluate), ("gain", pipeline.gain)]
    for name, fn in steps:
        if name in a.skip:
            continue
        t = time.perf_counter()
        fn(cfg)
        log.info("%s done in %.0fs", name, time.perf_counter() - t)
    for p in report(cfg.out):
        print(p)


if __name__ == "__main__":
    main()
