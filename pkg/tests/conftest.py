import json
from pathlib import Path

import numpy as np
import pytest

from opflearn import dataset as ds
from opflearn.grid import load_case, parse_matpower
from opflearn.sampler import SamplerConfig

FIXTURES = Path(__file__).parent / "fixtures"


def case_text(buses, gens, branches, base=100.0, name="tiny", costs=None):
    """MATPOWER text from compact rows.

    buses: (id, type, pd, qd); gens: (bus, pmax, pmin, qmax, qmin);
    branches: (from, to, r, x, b, rate).
    """
    costs = costs or [(0.0, 10.0 + k, 0.0) for k in range(len(gens))]
    lines = [f"function mpc = {name}", f"mpc.baseMVA = {base};", "mpc.bus = ["]
    lines += [f"\t{i}\t{t}\t{pd}\t{qd}\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;" for i, t, pd, qd in buses]
    lines += ["];", "mpc.gen = ["]
    lines += [f"\t{b}\t0\t0\t{qmax}\t{qmin}\t1\t{base}\t1\t{pmax}\t{pmin};" for b, pmax, pmin, qmax, qmin in gens]
    lines += ["];", "mpc.gencost = ["]
    lines += [f"\t2\t0\t0\t3\t{c2}\t{c1}\t{c0};" for c2, c1, c0 in costs]
    lines += ["];", "mpc.branch = ["]
    lines += [f"\t{f}\t{t}\t{r}\t{x}\t{b}\t{rate}\t{rate}\t{rate}\t0\t0\t1\t-360\t360;"
              for f, t, r, x, b, rate in branches]
    lines += ["];"]
    return "\n".join(lines) + "\n"


THREE_BUS = case_text(
    buses=[(1, 3, 0, 0), (2, 2, 50, 10), (3, 1, 60, 20)],
    gens=[(1, 200, 0, 100, -100), (2, 200, 0, 100, -100)],
    branches=[(1, 2, 0.01, 0.1, 0.0, 250), (2, 3, 0.01, 0.1, 0.0, 250), (1, 3, 0.01, 0.1, 0.0, 250)],
)

TWO_BUS = case_text(
    buses=[(1, 3, 0, 0), (2, 1, 40, 10)],
    gens=[(1, 200, 0, 100, -100)],
    branches=[(1, 2, 0.0, 0.1, 0.0, 0)],
)


@pytest.fixture(scope="session")
def three_bus():
    return parse_matpower(THREE_BUS, name="three")


@pytest.fixture(scope="session")
def two_bus():
    return parse_matpower(TWO_BUS, name="two")


@pytest.fixture(scope="session")
def case5():
    return load_case("case5")


@pytest.fixture(scope="session")
def case14():
    return load_case("case14")


@pytest.fixture(scope="session")
def reference_objectives():
    return json.loads((FIXTURES / "reference_objectives.json").read_text())


@pytest.fixture(scope="session")
def small_dataset(case14):
    """60 load-only case14 samples with a non-empty non-trivial set."""
    return ds.generate_dataset(case14, SamplerConfig(seed=3, burn_in=10, thinning=2), n=60, split_seed=0)


@pytest.fixture(scope="session")
def case5_dataset(case5):
    return ds.generate_dataset(case5, SamplerConfig(seed=1, burn_in=5, thinning=1), n=20, split_seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance summary

ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (title, ok, detail)
    print(f"criterion {number:2d} [{title}]: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} [{title}]: {'PASS' if ok else 'FAIL'} - {detail}")
