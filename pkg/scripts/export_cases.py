"""Export the bundled MATPOWER-subset case files.

case5 is written from the pglib-opf ``case5_pjm`` tables. case14, case30,
case118 and case300 come from the PYPOWER copies of the MATPOWER cases.
case14 ships without thermal ratings, so ratings are assigned here; four
lines are rated close to their nominal optimal flow so that congestion
actually shows up under load perturbation.

Requires ``pypower`` (not a runtime dependency of the package).

    python scripts/export_cases.py src/opflearn/cases
"""
import sys
from pathlib import Path

import numpy as np

CASE14_RATES = [120, 63, 80, 70, 37, 20, 75, 35, 25, 65,
                15, 15, 30, 20, 45, 15, 11.5, 10, 10, 10]

CASE5_PJM = """function mpc = case5
%% pglib-opf case5_pjm (5-bus PJM example, thermal limits and linear costs)
mpc.version = '2';
mpc.baseMVA = 100.0;

%% bus data
%	bus_i	type	Pd	Qd	Gs	Bs	area	Vm	Va	baseKV	zone	Vmax	Vmin
mpc.bus = [
	1	2	0.0	0.0	0.0	0.0	1	1.0	0.0	230.0	1	1.1	0.9;
	2	1	300.0	98.61	0.0	0.0	1	1.0	0.0	230.0	1	1.1	0.9;
	3	2	300.0	98.61	0.0	0.0	1	1.0	0.0	230.0	1	1.1	0.9;
	4	3	400.0	131.47	0.0	0.0	1	1.0	0.0	230.0	1	1.1	0.9;
	5	2	0.0	0.0	0.0	0.0	1	1.0	0.0	230.0	1	1.1	0.9;
];

%% generator data
%	bus	Pg	Qg	Qmax	Qmin	Vg	mBase	status	Pmax	Pmin
mpc.gen = [
	1	20.0	0.0	30.0	-30.0	1.0	100.0	1	40.0	0.0;
	1	85.0	0.0	127.5	-127.5	1.0	100.0	1	170.0	0.0;
	3	260.0	0.0	390.0	-390.0	1.0	100.0	1	520.0	0.0;
	4	100.0	0.0	150.0	-150.0	1.0	100.0	1	200.0	0.0;
	5	300.0	0.0	450.0	-450.0	1.0	100.0	1	600.0	0.0;
];

%% generator cost data
%	2	startup	shutdown	n	c(n-1)	...	c0
mpc.gencost = [
	2	0.0	0.0	3	0.0	14.0	0.0;
	2	0.0	0.0	3	0.0	15.0	0.0;
	2	0.0	0.0	3	0.0	30.0	0.0;
	2	0.0	0.0	3	0.0	40.0	0.0;
	2	0.0	0.0	3	0.0	10.0	0.0;
];

%% branch data
%	fbus	tbus	r	x	b	rateA	rateB	rateC	ratio	angle	status	angmin	angmax
mpc.branch = [
	1	2	0.00281	0.0281	0.00712	400.0	400.0	400.0	0.0	0.0	1	-30.0	30.0;
	1	4	0.00304	0.0304	0.00658	426.0	426.0	426.0	0.0	0.0	1	-30.0	30.0;
	1	5	0.00064	0.0064	0.03126	426.0	426.0	426.0	0.0	0.0	1	-30.0	30.0;
	2	3	0.00108	0.0108	0.01852	426.0	426.0	426.0	0.0	0.0	1	-30.0	30.0;
	3	4	0.00297	0.0297	0.00674	426.0	426.0	426.0	0.0	0.0	1	-30.0	30.0;
	4	5	0.00297	0.0297	0.00674	240.0	240.0	240.0	0.0	0.0	1	-30.0	30.0;
];
"""


def _rows(a, ncols):
    out = []
    for row in a:
        out.append("\t" + "\t".join(repr(float(v)) if not float(v).is_integer()
                                    else str(int(v)) for v in row[:ncols]) + ";")
    return "\n".join(out)


def render(name, ppc, comment):
    return "\n".join([
        f"function mpc = {name}",
        f"%% {comment}",
        "mpc.version = '2';",
        f"mpc.baseMVA = {ppc['baseMVA']};",
        "",
        "mpc.bus = [", _rows(ppc["bus"], 13), "];",
        "",
        "mpc.gen = [", _rows(ppc["gen"], 10), "];",
        "",
        "mpc.gencost = [", _rows(ppc["gencost"], ppc["gencost"].shape[1]), "];",
        "",
        "mpc.branch = [", _rows(ppc["branch"], 13), "];",
        "",
    ])


def main(out_dir):
    from pypower.api import case14, case30, case118, case300

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "case5.m").write_text(CASE5_PJM)

    c14 = case14()
    c14["branch"][:, 5] = np.asarray(CASE14_RATES, dtype=float)
    c14["branch"][:, 6:8] = c14["branch"][:, 5:6]
    (out / "case14.m").write_text(render(
        "case14", c14, "IEEE 14-bus (MATPOWER data) with thermal ratings assigned"))
    (out / "case30.m").write_text(render("case30", case30(), "IEEE 30-bus OPF case (MATPOWER data)"))
    (out / "case118.m").write_text(render("case118", case118(), "IEEE 118-bus (MATPOWER data)"))
    (out / "case300.m").write_text(render("case300", case300(), "IEEE 300-bus (MATPOWER data)"))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/opflearn/cases")
