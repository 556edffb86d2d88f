"""Input encodings of parameter vectors for the five architectures.

Flat vectors (FCNN) are min-max scaled with the sampler bounds. Grid tensors (CNN) and
node-feature matrices (GNNs) scatter the same entries onto buses and bus pairs:

* grid tensors are stored channel-first, (C, V, W) per sample, i.e. the V x W x C
  tensor with one channel per parameter field. W = 1 for load-only inputs and W = V
  for the all-parameters domain, where node fields fill the diagonal and edge fields
  fill the symmetric off-diagonal entries (i, j), (j, i);
* node features are (V, F) with F = |X^V| + |X^E| V: node fields first, then for
  each edge field a V-long row whose entry j holds the value on edge (i, j).

Generators on the same bus and parallel branches are summed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..acopf import EDGE_FIELDS, LOAD_ONLY, NODE_FIELDS, nominal_parameters
from ..grid import GridCase
from ..sampler import Box, parameter_box

FLAT, GRID, NODE = "flat_vector", "grid_tensor", "node_features"
LAYOUTS = (FLAT, GRID, NODE)
SCALINGS = ("minmax", "field", "none")


@dataclass(frozen=True)
class EncodedInput:
    layout: str
    data: np.ndarray  # leading batch axis
    context: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}")

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    def take(self, idx) -> "EncodedInput":
        return EncodedInput(self.layout, self.data[idx], self.context)


class Encoder:
    """Encodes raw parameter vectors of one (case, domain) pair.

    ``scaling`` applies to grid and node encodings: "minmax" maps each free entry to
    [0, 1] with the sampler bounds (held-fixed entries become 0), "field" divides by the
    largest bound magnitude of the entry's field, "none" leaves raw values.
    """

    def __init__(self, case: GridCase, domain: str, box: Box | None = None, scaling: str = "minmax"):
        if scaling not in SCALINGS:
            raise ValueError(f"unknown scaling {scaling!r}")
        x0 = nominal_parameters(case, domain)
        self.case, self.domain, self.scaling = case, domain, scaling
        self.index_map = x0.index_map
        self.box = box if box is not None else parameter_box(x0)
        if self.box.lo.shape != x0.values.shape:
            raise ValueError("box does not match the parameter vector")
        self.node_fields = NODE_FIELDS[domain]
        self.edge_fields = EDGE_FIELDS[domain]
        self.n_bus = case.n_bus
        bidx = case.bus_index
        gen_bus = [bidx[g.bus] for g in case.generators]
        ends = [(bidx[b.from_bus], bidx[b.to_bus]) for b in case.branches]
        fields = self.node_fields + self.edge_fields
        self.channel = np.array([fields.index(f) for _, _, f in self.index_map])
        self.is_edge = np.array([kind == "branch" for kind, _, _ in self.index_map])
        rows, cols = [], []
        for kind, k, _ in self.index_map:
            if kind == "bus":
                i = j = k
            elif kind == "gen":
                i = j = gen_bus[k]
            else:
                i, j = ends[k]
            rows.append(i)
            cols.append(j)
        self.row, self.col = np.array(rows, dtype=int), np.array(cols, dtype=int)
        mag = np.maximum(np.abs(self.box.lo), np.abs(self.box.hi))
        self.field_scale = np.ones(len(fields))
        for c in range(len(fields)):
            m = mag[self.channel == c].max(initial=0.0)
            self.field_scale[c] = m if m > 0 else 1.0

    @property
    def dim(self) -> int:
        return len(self.index_map)

    @property
    def channels(self) -> int:
        return len(self.node_fields) + len(self.edge_fields)

    @property
    def node_width(self) -> int:
        return len(self.node_fields) + len(self.edge_fields) * self.n_bus

    @property
    def grid_width(self) -> int:
        return 1 if self.domain == LOAD_ONLY else self.n_bus

    def _batch(self, X) -> np.ndarray:
        X = np.asarray(getattr(X, "values", X), dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected parameter vectors of length {self.dim}, got shape {X.shape}")
        return X

    def minmax(self, X, fill: float) -> np.ndarray:
        X = self._batch(X)
        lo, hi = self.box.lo, self.box.hi
        free = self.box.free
        out = np.full_like(X, fill)
        out[:, free] = (X[:, free] - lo[free]) / (hi[free] - lo[free])
        return out

    def scaled(self, X) -> np.ndarray:
        if self.scaling == "minmax":
            return self.minmax(X, 0.0)
        X = self._batch(X)
        if self.scaling == "field":
            return X / self.field_scale[self.channel]
        return X

    def fcnn(self, X) -> EncodedInput:
        return EncodedInput(FLAT, self.minmax(X, 0.5))

    def cnn(self, X) -> EncodedInput:
        V = self.scaled(X)
        n, w = V.shape[0], self.grid_width
        out = np.zeros((n, self.channels, self.n_bus, w))
        if w == 1:
            np.add.at(out, (slice(None), self.channel, self.row, 0), V)
        else:
            np.add.at(out, (slice(None), self.channel, self.row, self.col), V)
            e = self.is_edge
            np.add.at(out, (slice(None), self.channel[e], self.col[e], self.row[e]), V[:, e])
        return EncodedInput(GRID, out)

    def gnn(self, X) -> EncodedInput:
        V = self.scaled(X)
        n, nv = V.shape[0], len(self.node_fields)
        out = np.zeros((n, self.n_bus, self.node_width))
        e = self.is_edge
        np.add.at(out, (slice(None), self.row[~e], self.channel[~e]), V[:, ~e])
        base = nv + (self.channel[e] - nv) * self.n_bus
        np.add.at(out, (slice(None), self.row[e], base + self.col[e]), V[:, e])
        np.add.at(out, (slice(None), self.col[e], base + self.row[e]), V[:, e])
        return EncodedInput(NODE, out)

    def encode(self, X, layout: str) -> EncodedInput:
        return {FLAT: self.fcnn, GRID: self.cnn, NODE: self.gnn}[layout](X)


def _single(enc: EncodedInput, X) -> EncodedInput:
    if np.ndim(getattr(X, "values", X)) == 1:
        return EncodedInput(enc.layout, enc.data[0], enc.context)
    return enc


def encode_fcnn(x, case: GridCase, domain: str | None = None, box: Box | None = None) -> EncodedInput:
    domain = domain or getattr(x, "domain", LOAD_ONLY)
    return _single(Encoder(case, domain, box).fcnn(x), x)


def encode_cnn(x, case: GridCase, domain: str | None = None, box: Box | None = None,
               scaling: str = "minmax") -> EncodedInput:
    domain = domain or getattr(x, "domain", LOAD_ONLY)
    return _single(Encoder(case, domain, box, scaling).cnn(x), x)


def encode_gnn(x, case: GridCase, domain: str | None = None, box: Box | None = None,
               scaling: str = "minmax") -> EncodedInput:
    domain = domain or getattr(x, "domain", LOAD_ONLY)
    return _single(Encoder(case, domain, box, scaling).gnn(x), x)
