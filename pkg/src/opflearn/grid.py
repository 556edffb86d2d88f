"""Grid cases: MATPOWER-subset parsing, validation, graph views.

All quantities are stored in per-unit on the case base after parsing
(powers divided by ``base_mva``, angles in radians). Generator costs stay in
$/MW^2h, $/MWh, $/h.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

SLACK, PV, PQ = "slack", "PV", "PQ"
_BUS_TYPES = {1: PQ, 2: PV, 3: SLACK}
_BUS_CODES = {v: k for k, v in _BUS_TYPES.items()}

# MATPOWER marks unbounded angle differences with +-360 deg (or 0/0).
_ANGLE_UNBOUNDED_DEG = 360.0


class CaseError(ValueError):
    """Base class for case parsing and validation problems."""


class ParseError(CaseError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(CaseError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    bus_type: str
    pd: float
    qd: float
    vmin: float
    vmax: float
    gs: float = 0.0
    bs: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float
    rate_a: float  # math.inf when the file gives 0 (unlimited)
    tap: float = 1.0
    shift: float = 0.0
    angmin: float = -math.inf
    angmax: float = math.inf


@dataclass(frozen=True)
class Generator:
    bus: int
    pmin: float
    pmax: float
    qmin: float
    qmax: float
    cost: tuple[float, float, float]  # (c2, c1, c0)


@dataclass(frozen=True)
class GridCase:
    name: str
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def bus_index(self) -> dict[int, int]:
        """Map bus id -> position in ``buses``."""
        return {b.id: k for k, b in enumerate(self.buses)}

    @property
    def slack_index(self) -> int:
        return next(k for k, b in enumerate(self.buses) if b.bus_type == SLACK)

    def validate(self) -> "GridCase":
        validate_case(self)
        return self


@dataclass(frozen=True)
class GridGraph:
    n: int
    edges: tuple[tuple[int, int], ...]
    adjacency: np.ndarray = field(repr=False)
    degree: np.ndarray = field(repr=False)


def validate_case(case: GridCase) -> None:
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate bus ids")
    known = set(ids)
    n_slack = sum(b.bus_type == SLACK for b in case.buses)
    if n_slack != 1:
        raise ValidationError(f"expected exactly one slack bus, found {n_slack}")
    for b in case.buses:
        if not b.vmin < b.vmax:
            raise ValidationError(f"bus {b.id}: vmin must be < vmax")
        if not (math.isfinite(b.pd) and math.isfinite(b.qd)):
            raise ValidationError(f"bus {b.id}: non-finite load")
    for k, br in enumerate(case.branches):
        for end in (br.from_bus, br.to_bus):
            if end not in known:
                raise ValidationError(f"branch {k} references unknown bus {end}")
        if br.from_bus == br.to_bus:
            raise ValidationError(f"branch {k} is a self-loop")
        if br.x == 0:
            raise ValidationError(f"branch {k} has zero reactance")
        if not br.rate_a > 0:
            raise ValidationError(f"branch {k} has non-positive rate_a")
    for k, g in enumerate(case.generators):
        if g.bus not in known:
            raise ValidationError(f"generator {k} references unknown bus {g.bus}")
        if g.pmin > g.pmax or g.qmin > g.qmax:
            raise ValidationError(f"generator {k} has inverted bounds")
        if g.cost[0] < 0:
            raise ValidationError(f"generator {k} has negative quadratic cost")
    if not _connected(case):
        raise ValidationError("network is not connected")


def _connected(case: GridCase) -> bool:
    idx = case.bus_index
    nbrs: dict[int, set[int]] = {k: set() for k in range(case.n_bus)}
    for br in case.branches:
        i, j = idx[br.from_bus], idx[br.to_bus]
        nbrs[i].add(j)
        nbrs[j].add(i)
    seen, stack = {0}, [0]
    while stack:
        for j in nbrs[stack.pop()]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == case.n_bus


# --------------------------------------------------------------------------
# MATPOWER subset

_TABLES = ("bus", "gen", "branch", "gencost")
_MIN_COLS = {"bus": 13, "gen": 10, "branch": 11, "gencost": 4}
_BLOCK_START = re.compile(r"^\s*mpc\.(\w+)\s*=\s*([\[{])")
_BASE_MVA = re.compile(r"^\s*mpc\.baseMVA\s*=\s*([^;%]+)")


def _strip_comment(line: str) -> str:
    return line.split("%", 1)[0]


def _read_tables(text: str) -> tuple[float | None, dict[str, list[tuple[int, list[float]]]]]:
    base_mva = None
    tables: dict[str, list[tuple[int, list[float]]]] = {}
    lines = text.splitlines()
    k = 0
    while k < len(lines):
        raw = _strip_comment(lines[k])
        m_base = _BASE_MVA.match(raw)
        if m_base:
            try:
                base_mva = float(m_base.group(1))
            except ValueError:
                raise ParseError(f"bad baseMVA value {m_base.group(1)!r}", k + 1) from None
            k += 1
            continue
        m = _BLOCK_START.match(raw)
        if not m:
            k += 1
            continue
        name, opener = m.group(1), m.group(2)
        closer = "]" if opener == "[" else "}"
        start_line = k + 1
        body = raw[m.end():]
        rows: list[tuple[int, list[float]]] = []
        while True:
            done = closer in body
            chunk = body.split(closer, 1)[0]
            if name in _TABLES:
                for piece in chunk.split(";"):
                    tokens = piece.replace(",", " ").split()
                    if not tokens:
                        continue
                    try:
                        rows.append((k + 1, [float(t) for t in tokens]))
                    except ValueError:
                        raise ParseError(f"non-numeric entry in mpc.{name}", k + 1) from None
            if done:
                break
            k += 1
            if k >= len(lines):
                raise ParseError(f"unterminated mpc.{name} block", start_line)
            body = _strip_comment(lines[k])
        if name in _TABLES:
            tables[name] = rows
        k += 1
    return base_mva, tables


def parse_matpower(text: str, name: str | None = None) -> GridCase:
    """Parse MATPOWER-subset text into a validated, per-unit ``GridCase``.

    Out-of-service generators and branches are dropped. Buses, generators and
    branches are put in a canonical order (bus id ascending, then by content)
    so that the result does not depend on file row order.
    """
    base_mva, tables = _read_tables(text)
    if base_mva is None:
        raise ParseError("missing mpc.baseMVA")
    for t in _TABLES:
        if t not in tables:
            raise ParseError(f"missing mpc.{t} table")
        for line, row in tables[t]:
            if len(row) < _MIN_COLS[t]:
                raise ParseError(f"mpc.{t} row has {len(row)} columns, need {_MIN_COLS[t]}", line)
    if len(tables["gencost"]) != len(tables["gen"]):
        raise ParseError("mpc.gencost must have one row per generator")
    if name is None:
        m = re.search(r"function\s+\w+\s*=\s*(\w+)", text)
        name = m.group(1) if m else "case"

    buses = []
    for line, row in tables["bus"]:
        code = int(row[1])
        if code not in _BUS_TYPES:
            raise ParseError(f"unsupported bus type {code}", line)
        buses.append(Bus(
            id=int(row[0]), bus_type=_BUS_TYPES[code],
            pd=row[2] / base_mva, qd=row[3] / base_mva,
            gs=row[4] / base_mva, bs=row[5] / base_mva,
            vmax=row[11], vmin=row[12],
        ))

    gens = []
    for (line, row), (cline, crow) in zip(tables["gen"], tables["gencost"]):
        if len(row) > 7 and row[7] <= 0:
            continue
        gens.append(Generator(
            bus=int(row[0]),
            qmax=row[3] / base_mva, qmin=row[4] / base_mva,
            pmax=row[8] / base_mva, pmin=row[9] / base_mva,
            cost=_poly_cost(crow, cline),
        ))

    branches = []
    for line, row in tables["branch"]:
        if row[10] <= 0:
            continue
        angmin, angmax = -math.inf, math.inf
        if len(row) >= 13 and not (row[11] == 0 and row[12] == 0):
            if row[11] > -_ANGLE_UNBOUNDED_DEG:
                angmin = math.radians(row[11])
            if row[12] < _ANGLE_UNBOUNDED_DEG:
                angmax = math.radians(row[12])
        branches.append(Branch(
            from_bus=int(row[0]), to_bus=int(row[1]),
            r=row[2], x=row[3], b=row[4],
            rate_a=row[5] / base_mva if row[5] > 0 else math.inf,
            tap=row[8] if row[8] != 0 else 1.0,
            shift=math.radians(row[9]),
            angmin=angmin, angmax=angmax,
        ))

    case = GridCase(
        name=name, base_mva=base_mva,
        buses=tuple(sorted(buses, key=lambda b: b.id)),
        branches=tuple(sorted(branches, key=_branch_key)),
        generators=tuple(sorted(gens, key=_gen_key)),
    )
    validate_case(case)
    return case


def _poly_cost(row: list[float], line: int) -> tuple[float, float, float]:
    model, ncost = int(row[0]), int(row[3])
    if model != 2:
        raise ParseError("only polynomial gencost (model 2) is supported", line)
    if not 1 <= ncost <= 3:
        raise ParseError(f"polynomial degree too high (n={ncost})", line)
    coeffs = row[4:4 + ncost]
    if len(coeffs) != ncost:
        raise ParseError("gencost row shorter than its declared n", line)
    padded = [0.0] * (3 - ncost) + list(coeffs)
    return (padded[0], padded[1], padded[2])


def _branch_key(br: Branch):
    return (br.from_bus, br.to_bus, br.r, br.x, br.b, br.rate_a, br.tap, br.shift)


def _gen_key(g: Generator):
    return (g.bus, g.pmax, g.pmin, g.qmax, g.qmin, g.cost)


def _exact_scaled(value: float, factor: float, inverse) -> float:
    """Return v ~= value*factor such that inverse(v) == value exactly (when reachable)."""
    if not math.isfinite(value):
        return value
    v = value * factor
    for direction in (math.inf, -math.inf):
        w = v
        for _ in range(4):
            if inverse(w) == value:
                return w
            w = math.nextafter(w, direction)
    return v


def serialize_matpower(case: GridCase) -> str:
    """Write ``case`` back out so that ``parse_matpower`` reproduces it exactly."""
    base = case.base_mva

    def mw(v):
        return _exact_scaled(v, base, lambda w: w / base)

    def deg(v):
        return _exact_scaled(v, 180.0 / math.pi, math.radians)

    def fmt(vals):
        return "\t" + "\t".join(repr(float(v)) for v in vals) + ";"

    out = [f"function mpc = {case.name}", "mpc.version = '2';", f"mpc.baseMVA = {base!r};", "", "mpc.bus = ["]
    for b in case.buses:
        out.append(fmt([b.id, _BUS_CODES[b.bus_type], mw(b.pd), mw(b.qd), mw(b.gs), mw(b.bs),
                        1, 1.0, 0.0, 0.0, 1, b.vmax, b.vmin]))
    out += ["];", "", "mpc.gen = ["]
    for g in case.generators:
        out.append(fmt([g.bus, 0.0, 0.0, mw(g.qmax), mw(g.qmin), 1.0, base, 1, mw(g.pmax), mw(g.pmin)]))
    out += ["];", "", "mpc.gencost = ["]
    for g in case.generators:
        out.append(fmt([2, 0.0, 0.0, 3, *g.cost]))
    out += ["];", "", "mpc.branch = ["]
    for br in case.branches:
        rate = 0.0 if math.isinf(br.rate_a) else mw(br.rate_a)
        angmin = -_ANGLE_UNBOUNDED_DEG if math.isinf(br.angmin) else deg(br.angmin)
        angmax = _ANGLE_UNBOUNDED_DEG if math.isinf(br.angmax) else deg(br.angmax)
        out.append(fmt([br.from_bus, br.to_bus, br.r, br.x, br.b, rate, rate, rate,
                        br.tap, deg(br.shift), 1, angmin, angmax]))
    out += ["];", ""]
    return "\n".join(out)


def bundled_cases() -> list[str]:
    root = resources.files("opflearn") / "cases"
    return sorted(p.name[:-2] for p in root.iterdir() if p.name.endswith(".m"))


def load_case(name_or_path: str | Path) -> GridCase:
    """Load a bundled case by name (``"case14"``) or a case file by path."""
    path = Path(name_or_path)
    if path.suffix == ".m" and path.exists():
        return parse_matpower(path.read_text(), name=path.stem)
    res = resources.files("opflearn") / "cases" / f"{name_or_path}.m"
    if not res.is_file():
        raise FileNotFoundError(f"no bundled case or file named {name_or_path!r}")
    return parse_matpower(res.read_text(), name=str(name_or_path))


# --------------------------------------------------------------------------
# graph views

def build_graph(case: GridCase, weighted: bool = False) -> GridGraph:
    """Undirected bus graph. Parallel branches collapse into one edge.

    With ``weighted=True`` the adjacency holds summed inverse reactances of
    the branches on each edge, scaled so the largest weight is 1.
    """
    idx = case.bus_index
    n = case.n_bus
    w = np.zeros((n, n))
    for br in case.branches:
        i, j = idx[br.from_bus], idx[br.to_bus]
        w[i, j] += 1.0 / abs(br.x)
        w[j, i] = w[i, j]
    adj = (w > 0).astype(float)
    if weighted:
        adj = w / w.max()
    edges = tuple((i, j) for i in range(n) for j in range(i + 1, n) if adj[i, j] > 0)
    return GridGraph(n=n, edges=edges, adjacency=adj, degree=adj.sum(axis=1))


def normalized_laplacian(graph: GridGraph) -> np.ndarray:
    deg = graph.adjacency.sum(axis=1)
    if np.any(deg <= 0):
        raise ValueError("normalized Laplacian undefined: graph has isolated nodes")
    d = 1.0 / np.sqrt(deg)
    return np.eye(graph.n) - d[:, None] * graph.adjacency * d[None, :]


def lambda_max(L: np.ndarray, max_iter: int = 100, tol: float = 1e-6, fallback: float = 2.0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Returns ``fallback`` if the Rayleigh quotient has not settled within
    ``max_iter`` iterations.
    """
    n = L.shape[0]
    # deterministic start with components along every eigenvector in general
    v = np.cos(np.arange(1, n + 1) * 1.3) + 0.1 * np.arange(n) / max(n, 1)
    v /= np.linalg.norm(v)
    est = float(v @ L @ v)
    for _ in range(max_iter):
        w = L @ v
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return fallback
        v = w / nrm
        new = float(v @ L @ v)
        if abs(new - est) < tol:
            return new
        est = new
    return fallback


def scaled_laplacian(L: np.ndarray, lam_max: float) -> np.ndarray:
    if not lam_max > 0:
        raise ValueError("lambda_max must be positive")
    return (2.0 / lam_max) * L - np.eye(L.shape[0])
