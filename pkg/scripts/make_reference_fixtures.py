"""Solve the bundled cases with PYPOWER's OPF and freeze the objectives.

The tables are read raw (file units) and handed straight to PYPOWER, so the
fixture is independent of this package's per-unit handling and solver.
Requires ``pypower``.

    python scripts/make_reference_fixtures.py tests/fixtures/reference_objectives.json
"""
import json
import sys
from importlib import resources

import numpy as np

from opflearn.grid import _read_tables


def to_ppc(text):
    base, tables = _read_tables(text)
    arr = {k: np.array([row for _, row in rows], dtype=float) for k, rows in tables.items()}
    return {"version": "2", "baseMVA": base, "bus": arr["bus"], "gen": arr["gen"],
            "branch": arr["branch"], "gencost": arr["gencost"]}


def main(out):
    from pypower.api import ppoption, runopf

    opt = ppoption(VERBOSE=0, OUT_ALL=0, PDIPM_FEASTOL=1e-9, PDIPM_GRADTOL=1e-9,
                   PDIPM_COMPTOL=1e-9, PDIPM_COSTTOL=1e-10)
    fixtures = {}
    for name in ("case5", "case14", "case30"):
        text = (resources.files("opflearn") / "cases" / f"{name}.m").read_text()
        res = runopf(to_ppc(text), opt)
        assert res["success"], name
        fixtures[name] = {"objective": float(res["f"]), "solver": "PYPOWER runopf (PIPS)"}
    with open(out, "w") as fh:
        json.dump(fixtures, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(fixtures, indent=2))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/reference_objectives.json")
