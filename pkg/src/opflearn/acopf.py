"""The AC-OPF program for one grid case.

Variables (in solver order) are ``z = [Va without slack, Vm, Pg, Qg]`` in
per-unit/radians. Power expressions are sums of "pair terms"

    T = Vm_i * Vm_j * (a * cos(Va_i - Va_j) + b * sin(Va_i - Va_j))

which covers bus injections (one term per Ybus entry) and branch-end flows
(two terms per end). First and second derivatives of pair terms are closed
form, so every Jacobian and Lagrangian Hessian below is analytic.

Inequality values are >= 0 when satisfied and come in a fixed canonical
order: generator P bounds, generator Q bounds, bus voltage bounds, branch
flow (from end), branch flow (to end), angle differences. Within a family
elements are ascending and the lower side precedes the upper side.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .grid import GridCase, ValidationError
from .ipm import NLPProblem

FAMILIES = ("pg", "qg", "vm", "flow_from", "flow_to", "angle")
LOWER, UPPER = "lower", "upper"

DEFAULT_BINDING_TOL = 1e-5

LOAD_ONLY, ALL_PARAMS = "load_only", "all_params"
DOMAINS = (LOAD_ONLY, ALL_PARAMS)
NODE_FIELDS = {LOAD_ONLY: ("pd", "qd"), ALL_PARAMS: ("pd", "qd", "pmax", "qmax")}
EDGE_FIELDS = {LOAD_ONLY: (), ALL_PARAMS: ("rate_a", "r", "x")}
_FIELD_KIND = {"pd": "bus", "qd": "bus", "pmax": "gen", "qmax": "gen",
               "rate_a": "branch", "r": "branch", "x": "branch"}


class ConstraintId(NamedTuple):
    family: str
    element: int
    side: str

    def __str__(self) -> str:
        return f"{self.family}:{self.element}:{self.side}"

    @classmethod
    def parse(cls, text: str) -> "ConstraintId":
        family, element, side = text.strip().split(":")
        if family not in FAMILIES or side not in (LOWER, UPPER):
            raise ValueError(f"bad constraint id {text!r}")
        return cls(family, int(element), side)


@dataclass(frozen=True)
class Primal:
    vm: np.ndarray
    va: np.ndarray
    pg: np.ndarray
    qg: np.ndarray


# --------------------------------------------------------------------------
# parameter vectors

@dataclass(frozen=True)
class ParameterVector:
    domain: str
    values: np.ndarray
    index_map: tuple[tuple[str, int, str], ...]  # (kind, element position, field)

    def __post_init__(self):
        if len(self.values) != len(self.index_map):
            raise ValueError("values and index_map lengths differ")

    def with_values(self, values) -> "ParameterVector":
        return ParameterVector(self.domain, np.asarray(values, dtype=float), self.index_map)


def parameter_index(case: GridCase, domain: str) -> tuple[tuple[str, int, str], ...]:
    """Canonical entry list of the control-variable vector for ``domain``.

    Grouped by field; every bus carries a load entry, every branch an r and x entry,
    and only finitely-rated branches a rate entry.
    """
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    out: list[tuple[str, int, str]] = []
    for fld in NODE_FIELDS[domain] + EDGE_FIELDS[domain]:
        kind = _FIELD_KIND[fld]
        if kind == "bus":
            out += [(kind, k, fld) for k in range(case.n_bus)]
        elif kind == "gen":
            out += [(kind, k, fld) for k in range(case.n_gen)]
        else:
            out += [(kind, k, fld) for k, br in enumerate(case.branches)
                    if fld != "rate_a" or math.isfinite(br.rate_a)]
    return tuple(out)


def _elements(case: GridCase, kind: str):
    return {"bus": case.buses, "gen": case.generators, "branch": case.branches}[kind]


def nominal_parameters(case: GridCase, domain: str) -> ParameterVector:
    imap = parameter_index(case, domain)
    vals = np.array([getattr(_elements(case, kind)[k], fld) for kind, k, fld in imap], dtype=float)
    return ParameterVector(domain, vals, imap)


def apply_parameters(case: GridCase, x: ParameterVector) -> GridCase:
    """Copy of ``case`` with the mapped fields overwritten by ``x.values``."""
    pending: dict[tuple[str, int], dict[str, float]] = {}
    sizes = {"bus": case.n_bus, "gen": case.n_gen, "branch": case.n_branch}
    for (kind, k, fld), v in zip(x.index_map, x.values):
        if not 0 <= k < sizes[kind]:
            raise IndexError(f"{kind} index {k} out of range")
        pending.setdefault((kind, k), {})[fld] = float(v)
    lists = {kind: list(_elements(case, kind)) for kind in sizes}
    for (kind, k), changes in pending.items():
        lists[kind][k] = replace(lists[kind][k], **changes)
    for k, br in enumerate(lists["branch"]):
        if not br.rate_a > 0:
            raise ValidationError(f"branch {k}: rate_a must stay positive")
        if br.x == 0:
            raise ValidationError(f"branch {k}: reactance became zero")
    return replace(case, buses=tuple(lists["bus"]), generators=tuple(lists["gen"]),
                   branches=tuple(lists["branch"]))


# --------------------------------------------------------------------------
# admittances and pair terms

def branch_admittances(case: GridCase):
    """Per-branch (Yff, Yft, Ytf, Ytt) and the dense bus admittance matrix."""
    idx = case.bus_index
    nb, nl = case.n_bus, case.n_branch
    yff, yft, ytf, ytt = (np.zeros(nl, dtype=complex) for _ in range(4))
    f = np.array([idx[br.from_bus] for br in case.branches], dtype=int)
    t = np.array([idx[br.to_bus] for br in case.branches], dtype=int)
    for k, br in enumerate(case.branches):
        ys = 1.0 / complex(br.r, br.x)
        tap = br.tap * np.exp(1j * br.shift)
        ytt[k] = ys + 0.5j * br.b
        yff[k] = ytt[k] / (tap * np.conj(tap))
        yft[k] = -ys / np.conj(tap)
        ytf[k] = -ys / tap
    ybus = np.zeros((nb, nb), dtype=complex)
    np.add.at(ybus, (f, f), yff)
    np.add.at(ybus, (f, t), yft)
    np.add.at(ybus, (t, f), ytf)
    np.add.at(ybus, (t, t), ytt)
    ybus[np.arange(nb), np.arange(nb)] += np.array([complex(b.gs, b.bs) for b in case.buses])
    return f, t, (yff, yft, ytf, ytt), ybus


class PairTerms:
    """Rows ``k`` of P_k = sum ViVj(G cos + B sin), Q_k = sum ViVj(G sin - B cos)."""

    def __init__(self, row, i, j, y, n_rows: int, n_bus: int):
        self.row = np.asarray(row, dtype=int)
        self.i = np.asarray(i, dtype=int)
        self.j = np.asarray(j, dtype=int)
        y = np.asarray(y, dtype=complex)
        self.g, self.b = y.real.copy(), y.imag.copy()
        self.n_rows, self.n_bus = n_rows, n_bus

    def _trig(self, va, vm):
        th = va[self.i] - va[self.j]
        return np.cos(th), np.sin(th), vm[self.i] * vm[self.j]

    def values(self, va, vm):
        cos, sin, vv = self._trig(va, vm)
        p = np.zeros(self.n_rows)
        q = np.zeros(self.n_rows)
        np.add.at(p, self.row, vv * (self.g * cos + self.b * sin))
        np.add.at(q, self.row, vv * (self.g * sin - self.b * cos))
        return p, q

    def _jac(self, a, b, cos, sin, vv, vm):
        n = self.n_bus
        c = a * cos + b * sin
        s = -a * sin + b * cos
        out = np.zeros((self.n_rows, 2 * n))
        np.add.at(out, (self.row, self.i), vv * s)
        np.add.at(out, (self.row, self.j), -vv * s)
        np.add.at(out, (self.row, n + self.i), vm[self.j] * c)
        np.add.at(out, (self.row, n + self.j), vm[self.i] * c)
        return out

    def jacobians(self, va, vm):
        """dP, dQ with columns ordered [Va (all buses), Vm (all buses)]."""
        cos, sin, vv = self._trig(va, vm)
        return (self._jac(self.g, self.b, cos, sin, vv, vm),
                self._jac(-self.b, self.g, cos, sin, vv, vm))

    def weighted_hessian(self, va, vm, wp, wq):
        """Hessian of sum_k wp_k P_k + wq_k Q_k over [Va, Vm] (2n x 2n)."""
        n = self.n_bus
        cos, sin, vv = self._trig(va, vm)
        a = wp[self.row] * self.g - wq[self.row] * self.b
        b = wp[self.row] * self.b + wq[self.row] * self.g
        c = a * cos + b * sin
        s = -a * sin + b * cos
        vi, vj = vm[self.i], vm[self.j]
        ti, tj, ui, uj = self.i, self.j, n + self.i, n + self.j
        rows = np.concatenate([ti, ti, tj, tj, ti, ti, tj, tj, ui, uj, ui, uj, ui, uj])
        cols = np.concatenate([ti, tj, ti, tj, ui, uj, ui, uj, ti, ti, tj, tj, uj, ui])
        vals = np.concatenate([-vv * c, vv * c, vv * c, -vv * c,
                               vj * s, vi * s, -vj * s, -vi * s,
                               vj * s, vi * s, -vj * s, -vi * s,
                               c, c])
        out = np.zeros((2 * n, 2 * n))
        np.add.at(out, (rows, cols), vals)
        return out

    def subset(self, rows: Sequence[int]) -> "PairTerms":
        rows = list(rows)
        remap = {r: k for k, r in enumerate(rows)}
        keep = np.isin(self.row, rows)
        new_rows = np.array([remap[r] for r in self.row[keep]], dtype=int)
        return PairTerms(new_rows, self.i[keep], self.j[keep],
                         self.g[keep] + 1j * self.b[keep], len(rows), self.n_bus)


# --------------------------------------------------------------------------
# the program

class OPFProblem:
    """AC-OPF for a fixed case: evaluation of objective, constraints, labels."""

    def __init__(self, case: GridCase):
        self.case = case
        nb, ng = case.n_bus, case.n_gen
        self.n_bus, self.n_gen = nb, ng
        self.slack = case.slack_index
        idx = case.bus_index
        self.gen_bus = np.array([idx[g.bus] for g in case.generators], dtype=int)
        self.cg = np.zeros((nb, ng))
        self.cg[self.gen_bus, np.arange(ng)] = 1.0
        self.pd = np.array([b.pd for b in case.buses])
        self.qd = np.array([b.qd for b in case.buses])
        self.vmin = np.array([b.vmin for b in case.buses])
        self.vmax = np.array([b.vmax for b in case.buses])
        self.pmin = np.array([g.pmin for g in case.generators])
        self.pmax = np.array([g.pmax for g in case.generators])
        self.qmin = np.array([g.qmin for g in case.generators])
        self.qmax = np.array([g.qmax for g in case.generators])
        self.cost = np.array([g.cost for g in case.generators]).reshape(ng, 3)
        self.rate = np.array([br.rate_a for br in case.branches])
        self.angmin = np.array([br.angmin for br in case.branches])
        self.angmax = np.array([br.angmax for br in case.branches])

        self.f_bus, self.t_bus, (yff, yft, ytf, ytt), self.ybus = branch_admittances(case)
        r, c = np.nonzero(self.ybus)
        self.injection = PairTerms(r, r, c, self.ybus[r, c], nb, nb)
        nl = case.n_branch
        k = np.arange(nl)
        self.flow_from = PairTerms(np.r_[k, k], np.r_[self.f_bus, self.f_bus],
                                   np.r_[self.f_bus, self.t_bus], np.r_[yff, yft], nl, nb)
        self.flow_to = PairTerms(np.r_[k, k], np.r_[self.t_bus, self.t_bus],
                                 np.r_[self.t_bus, self.f_bus], np.r_[ytt, ytf], nl, nb)

        self.constraints = self._constraint_ids()
        self.constraint_pos = {cid: k for k, cid in enumerate(self.constraints)}
        # variable layout
        self.va_cols = np.array([b for b in range(nb) if b != self.slack], dtype=int)
        self.n_var = (nb - 1) + nb + 2 * ng
        self.sl_va = slice(0, nb - 1)
        self.sl_vm = slice(nb - 1, 2 * nb - 1)
        self.sl_pg = slice(2 * nb - 1, 2 * nb - 1 + ng)
        self.sl_qg = slice(2 * nb - 1 + ng, self.n_var)

    # ---- layout helpers
    def _constraint_ids(self) -> list[ConstraintId]:
        ids = []
        for fam, n in (("pg", self.n_gen), ("qg", self.n_gen), ("vm", self.n_bus)):
            for e in range(n):
                ids += [ConstraintId(fam, e, LOWER), ConstraintId(fam, e, UPPER)]
        for fam in ("flow_from", "flow_to"):
            ids += [ConstraintId(fam, e, UPPER) for e in range(len(self.rate)) if math.isfinite(self.rate[e])]
        for e in range(len(self.rate)):
            if math.isfinite(self.angmin[e]):
                ids.append(ConstraintId("angle", e, LOWER))
            if math.isfinite(self.angmax[e]):
                ids.append(ConstraintId("angle", e, UPPER))
        return ids

    @property
    def n_ineq(self) -> int:
        return len(self.constraints)

    def constraint_order_hash(self) -> str:
        text = "\n".join(str(c) for c in self.constraints)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def pack(self, point: Primal) -> np.ndarray:
        return np.concatenate([np.asarray(point.va)[self.va_cols], point.vm, point.pg, point.qg]).astype(float)

    def unpack(self, z: np.ndarray) -> Primal:
        va = np.zeros(self.n_bus)
        va[self.va_cols] = z[self.sl_va]
        return Primal(vm=z[self.sl_vm].copy(), va=va, pg=z[self.sl_pg].copy(), qg=z[self.sl_qg].copy())

    def _to_z_cols(self, full: np.ndarray) -> np.ndarray:
        """Columns [Va all, Vm all] -> [Va non-slack, Vm]; works on rows or square blocks."""
        nb = self.n_bus
        keep = np.r_[self.va_cols, nb + np.arange(nb)]
        return full[..., keep]

    # ---- evaluation on physical points
    def objective(self, point: Primal) -> float:
        pg_mw = np.asarray(point.pg) * self.case.base_mva
        c2, c1, c0 = self.cost.T
        return float(np.sum(c2 * pg_mw ** 2 + c1 * pg_mw + c0))

    def equality_residuals(self, point: Primal) -> np.ndarray:
        p, q = self.injection.values(point.va, point.vm)
        rp = self.cg @ point.pg - self.pd - p
        rq = self.cg @ point.qg - self.qd - q
        return np.concatenate([rp, rq])

    def inequality_values(self, point: Primal) -> np.ndarray:
        return self._ineq_eval(self.constraints, point.va, point.vm, point.pg, point.qg)

    def binding_status(self, point: Primal, tol: float = DEFAULT_BINDING_TOL) -> np.ndarray:
        if tol < 0:
            raise ValueError("binding tolerance must be non-negative")
        return (self.inequality_values(point) <= tol).astype(np.uint8)

    def flow_sq(self, point: Primal, side: str = "from") -> np.ndarray:
        terms = self.flow_from if side == "from" else self.flow_to
        p, q = terms.values(point.va, point.vm)
        return p ** 2 + q ** 2

    def _ineq_eval(self, ids, va, vm, pg, qg) -> np.ndarray:
        out = np.empty(len(ids))
        flows = {}
        for k, (fam, e, side) in enumerate(ids):
            if fam in ("flow_from", "flow_to"):
                if fam not in flows:
                    terms = self.flow_from if fam == "flow_from" else self.flow_to
                    p, q = terms.values(va, vm)
                    flows[fam] = p ** 2 + q ** 2
                out[k] = self.rate[e] ** 2 - flows[fam][e]
                continue
            if fam == "angle":
                val, lo, hi = va[self.f_bus[e]] - va[self.t_bus[e]], self.angmin[e], self.angmax[e]
            elif fam == "pg":
                val, lo, hi = pg[e], self.pmin[e], self.pmax[e]
            elif fam == "qg":
                val, lo, hi = qg[e], self.qmin[e], self.qmax[e]
            else:
                val, lo, hi = vm[e], self.vmin[e], self.vmax[e]
            out[k] = val - lo if side == LOWER else hi - val
        return out

    def flat_start(self) -> Primal:
        return Primal(vm=0.5 * (self.vmin + self.vmax), va=np.zeros(self.n_bus),
                      pg=0.5 * (self.pmin + self.pmax), qg=0.5 * (self.qmin + self.qmax))

    def variable_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        nb = self.n_bus
        lo = np.r_[np.full(nb - 1, -np.inf), self.vmin, self.pmin, self.qmin]
        hi = np.r_[np.full(nb - 1, np.inf), self.vmax, self.pmax, self.qmax]
        return lo, hi

    def objective_scale(self) -> float:
        """Scaling so the largest marginal cost at pmax is O(1) per p.u."""
        base = self.case.base_mva
        c2, c1, _ = self.cost.T
        marg = base * np.abs(c1 + 2 * c2 * self.pmax * base)
        top = float(marg.max()) if marg.size else 0.0
        return 1.0 / top if top > 1.0 else 1.0

    # ---- NLP adapter
    def to_nlp(self, active: Sequence[ConstraintId] | None = None) -> "OPFNLP":
        return OPFNLP(self, list(self.constraints if active is None else active))


def build_problem(case: GridCase) -> OPFProblem:
    return OPFProblem(case)


def extract_regression_target(result) -> np.ndarray:
    """[Vm for every bus, Pg for every generator] from a converged solve."""
    if result.status != "optimal":
        raise ValueError(f"cannot extract a target from a {result.status} solve")
    return np.concatenate([result.point.vm, result.point.pg])


class OPFNLP(NLPProblem):
    """OPF restricted to an inequality subset, in the generic NLP form."""

    def __init__(self, problem: OPFProblem, active: list[ConstraintId]):
        pos = problem.constraint_pos
        for cid in active:
            if cid not in pos:
                raise ValueError(f"{cid} is not an inequality of this problem")
        self.opf = problem
        self.active = sorted(active, key=pos.__getitem__)
        self.scale = problem.objective_scale()
        lo, hi = problem.variable_bounds()
        domain = np.full(problem.n_var, -np.inf)
        domain[problem.sl_vm] = 0.0
        super().__init__(n=problem.n_var, m_eq=2 * problem.n_bus, m_ineq=len(self.active),
                         lower=lo, upper=hi, domain=domain)
        p = problem
        nz = p.n_var
        lin_rows, lin_A, lin_c = [], [], []
        self._flow_sel = {"flow_from": [], "flow_to": []}
        self._flow_pos = {"flow_from": [], "flow_to": []}
        for k, (fam, e, side) in enumerate(self.active):
            if fam in self._flow_sel:
                self._flow_sel[fam].append(e)
                self._flow_pos[fam].append(k)
                continue
            row = np.zeros(nz)
            sign = 1.0 if side == LOWER else -1.0
            if fam == "angle":
                fi, ti = p.f_bus[e], p.t_bus[e]
                if fi != p.slack:
                    row[p.sl_va.start + np.searchsorted(p.va_cols, fi)] += sign
                if ti != p.slack:
                    row[p.sl_va.start + np.searchsorted(p.va_cols, ti)] -= sign
                bound = p.angmin[e] if side == LOWER else p.angmax[e]
            else:
                sl = {"pg": p.sl_pg, "qg": p.sl_qg, "vm": p.sl_vm}[fam]
                row[sl.start + e] = sign
                lo_b, hi_b = {"pg": (p.pmin, p.pmax), "qg": (p.qmin, p.qmax), "vm": (p.vmin, p.vmax)}[fam]
                bound = lo_b[e] if side == LOWER else hi_b[e]
            lin_rows.append(k)
            lin_A.append(row)
            lin_c.append(-sign * bound)
        self._lin_rows = np.array(lin_rows, dtype=int)
        self._lin_A = np.array(lin_A).reshape(len(lin_rows), nz)
        self._lin_c = np.array(lin_c)
        self._flow_terms = {fam: (p.flow_from if fam == "flow_from" else p.flow_to).subset(sel)
                            for fam, sel in self._flow_sel.items() if sel}
        self._flow_rate2 = {fam: p.rate[np.array(sel, dtype=int)] ** 2
                            for fam, sel in self._flow_sel.items() if sel}
        c2, c1, _ = p.cost.T
        base = p.case.base_mva
        self._hess_f = np.zeros((nz, nz))
        ipg = np.arange(p.sl_pg.start, p.sl_pg.stop)
        self._hess_f[ipg, ipg] = self.scale * 2 * c2 * base ** 2
        self._eq_jac_lin = np.zeros((2 * p.n_bus, nz))
        self._eq_jac_lin[:p.n_bus, p.sl_pg] = p.cg
        self._eq_jac_lin[p.n_bus:, p.sl_qg] = p.cg

    def _split(self, z):
        p = self.opf
        va = np.zeros(p.n_bus)
        va[p.va_cols] = z[p.sl_va]
        return va, z[p.sl_vm], z[p.sl_pg], z[p.sl_qg]

    def objective(self, z):
        return self.scale * self.opf.objective(self.opf.unpack(z))

    def gradient(self, z):
        p = self.opf
        base = p.case.base_mva
        c2, c1, _ = p.cost.T
        g = np.zeros(p.n_var)
        g[p.sl_pg] = self.scale * base * (2 * c2 * base * z[p.sl_pg] + c1)
        return g

    def hessian(self, z):
        return self._hess_f

    def eq(self, z):
        va, vm, pg, qg = self._split(z)
        p = self.opf
        pi, qi = p.injection.values(va, vm)
        return np.concatenate([p.cg @ pg - p.pd - pi, p.cg @ qg - p.qd - qi])

    def eq_jac(self, z):
        va, vm, _, _ = self._split(z)
        p = self.opf
        dp, dq = p.injection.jacobians(va, vm)
        jac = self._eq_jac_lin.copy()
        jac[:, :2 * p.n_bus - 1] = -p._to_z_cols(np.vstack([dp, dq]))
        return jac

    def eq_hess(self, z, w):
        va, vm, _, _ = self._split(z)
        p = self.opf
        h = -p.injection.weighted_hessian(va, vm, w[:p.n_bus], w[p.n_bus:])
        return self._embed_v(h)

    def _embed_v(self, h_full):
        p = self.opf
        out = np.zeros((p.n_var, p.n_var))
        nv = 2 * p.n_bus - 1
        keep = np.r_[p.va_cols, p.n_bus + np.arange(p.n_bus)]
        out[:nv, :nv] = h_full[np.ix_(keep, keep)]
        return out

    def ineq(self, z):
        va, vm, _, _ = self._split(z)
        out = np.empty(self.m_ineq)
        if len(self._lin_rows):
            out[self._lin_rows] = self._lin_A @ z + self._lin_c
        for fam, terms in self._flow_terms.items():
            pf, qf = terms.values(va, vm)
            out[self._flow_pos[fam]] = self._flow_rate2[fam] - pf ** 2 - qf ** 2
        return out

    def ineq_jac(self, z):
        va, vm, _, _ = self._split(z)
        p = self.opf
        jac = np.zeros((self.m_ineq, p.n_var))
        if len(self._lin_rows):
            jac[self._lin_rows] = self._lin_A
        for fam, terms in self._flow_terms.items():
            pf, qf = terms.values(va, vm)
            dp, dq = terms.jacobians(va, vm)
            full = -2 * (pf[:, None] * dp + qf[:, None] * dq)
            jac[self._flow_pos[fam], :2 * p.n_bus - 1] = p._to_z_cols(full)
        return jac

    def ineq_hess(self, z, w):
        va, vm, _, _ = self._split(z)
        p = self.opf
        h = np.zeros((2 * p.n_bus, 2 * p.n_bus))
        for fam, terms in self._flow_terms.items():
            wk = w[self._flow_pos[fam]]
            if not np.any(wk):
                continue
            pf, qf = terms.values(va, vm)
            dp, dq = terms.jacobians(va, vm)
            h -= 2 * ((dp.T * wk) @ dp + (dq.T * wk) @ dq)
            h -= terms.weighted_hessian(va, vm, 2 * wk * pf, 2 * wk * qf)
        return self._embed_v(h)
