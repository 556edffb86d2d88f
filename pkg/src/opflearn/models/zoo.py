"""The five architectures and their construction from a ModelSpec."""
from __future__ import annotations

import numpy as np

from ..grid import GridCase
from ..nn import (BatchNorm, Conv2d, Dropout, Flatten, Linear, MaxPool2d, Module, ReLU, RNGStreams,
                  Sequential, Sigmoid, Tensor, as_tensor, concat, parameter)
from .encoders import FLAT, GRID, NODE, EncodedInput, Encoder
from .graph import ChebConv, GCNConv, GraphContext, SplineConv
from .spec import CLASSIFICATION, GNNS, ModelSpec

LAYOUT = {"FCNN": FLAT, "CNN": GRID, "GCN": NODE, "CHNN": NODE, "SNN": NODE}


def fc_blocks(n_in: int, widths, dropout: float, rng_init, rng_drop) -> tuple[list[Module], int]:
    layers: list[Module] = []
    for w in widths:
        layers += [Linear(n_in, w, rng_init), BatchNorm(w), ReLU(), Dropout(dropout, rng_drop)]
        n_in = w
    return layers, n_in


class Network(Module):
    """Common front: checks the input layout and applies the classification sigmoid."""

    layout = FLAT

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.sigmoid = Sigmoid() if spec.head == CLASSIFICATION else None

    def forward(self, inp):
        if isinstance(inp, EncodedInput):
            if inp.layout != self.layout:
                raise ValueError(f"{self.spec.architecture} expects {self.layout} input, got {inp.layout}")
            inp = inp.data
        out = self.body(as_tensor(inp))
        return self.sigmoid(out) if self.sigmoid is not None else out

    def body(self, x: Tensor) -> Tensor:
        raise NotImplementedError


class FCNN(Network):
    layout = FLAT

    def __init__(self, spec: ModelSpec, n_in: int, streams: RNGStreams):
        super().__init__(spec)
        layers, w = fc_blocks(n_in, spec.hidden, spec.dropout, streams.stream("init"), streams.stream("dropout"))
        self.net = Sequential(*layers, Linear(w, spec.out_dim, streams.stream("init")))

    def body(self, x):
        return self.net(x)


class CNN(Network):
    layout = GRID

    def __init__(self, spec: ModelSpec, channels: int, height: int, width: int, streams: RNGStreams):
        super().__init__(spec)
        init = streams.stream("init")
        kernel = (3, 3) if width >= 3 else (3, 1)
        layers: list[Module] = []
        c, h, w = channels, height, width
        for c_out in spec.hidden:
            layers += [Conv2d(c, c_out, init, kernel), BatchNorm(c_out), ReLU()]
            ph, pw = (2 if h >= 2 else 1), (2 if w >= 2 else 1)
            if ph * pw > 1:
                layers.append(MaxPool2d((ph, pw)))
                h, w = h // ph, w // pw
            c = c_out
        layers.append(Flatten())
        fc, n = fc_blocks(c * h * w, spec.fc_hidden, spec.dropout, init, streams.stream("dropout"))
        self.net = Sequential(*layers, *fc, Linear(n, spec.out_dim, init))

    def body(self, x):
        return self.net(x)


class GNN(Network):
    """Three graph convolutions (each with batchnorm and relu) and a readout head.

    Regression with the "node" readout is permutation-equivariant: each bus reads its Vm
    from [h_i, mean_j h_j], each generator its Pg from the same vector at its bus (shared
    projection, per-generator bias). Otherwise node features are flattened into a linear head.
    """

    layout = NODE

    def __init__(self, spec: ModelSpec, f_in: int, graph: GraphContext, streams: RNGStreams):
        super().__init__(spec)
        init = streams.stream("init")
        conv = {"GCN": lambda a, b: GCNConv(a, b, graph.gcn, init),
                "CHNN": lambda a, b: ChebConv(a, b, graph.cheb[:spec.K + 1], init),
                "SNN": lambda a, b: SplineConv(a, b, graph.spline, init)}[spec.architecture]
        self.convs, self.norms = [], []
        f = f_in
        for w in spec.hidden:
            self.convs.append(conv(f, w))
            self.norms.append(BatchNorm(w))
            f = w
        self.relu = ReLU()
        self.n = graph.n
        self.gen_bus = graph.gen_bus
        self.node_readout = spec.head != CLASSIFICATION and spec.readout == "node"
        if self.node_readout:
            if spec.out_dim != graph.n + len(graph.gen_bus):
                raise ValueError("node readout needs out_dim = |V| + |G|")
            self.vm_head = Linear(2 * f, 1, init)
            self.pg_head = Linear(2 * f, 1, init, bias=False)
            self.pg_bias = parameter(np.zeros(len(graph.gen_bus)))
        else:
            self.head = Linear(graph.n * f, spec.out_dim, init)

    def body(self, x):
        h = x
        for conv, bn in zip(self.convs, self.norms):
            h = self.relu(bn(conv(h)))
        n = h.shape[0]
        if not self.node_readout:
            return self.head(h.reshape(n, -1))
        pooled = h.mean(axis=1, keepdims=True)
        ctx = concat([h, pooled * np.ones((1, self.n, 1))], axis=2)
        vm = self.vm_head(ctx).reshape(n, self.n)
        pg = self.pg_head(ctx[:, self.gen_bus, :]).reshape(n, len(self.gen_bus)) + self.pg_bias
        return concat([vm, pg], axis=1)


class Model:
    """A network bundled with its encoder, so it can be applied to raw parameter vectors."""

    def __init__(self, spec: ModelSpec, net: Network, encoder: Encoder):
        self.spec, self.net, self.encoder = spec, net, encoder

    def encode(self, X) -> EncodedInput:
        return self.encoder.encode(X, LAYOUT[self.spec.architecture])

    def __call__(self, inp) -> Tensor:
        if not isinstance(inp, (EncodedInput, Tensor)):
            inp = self.encode(inp)
        return self.net(inp)

    def predict(self, X, batch: int = 256) -> np.ndarray:
        self.net.eval()
        enc = X if isinstance(X, EncodedInput) else self.encode(X)
        outs = [self.net(enc.take(slice(i, i + batch))).data for i in range(0, enc.batch, batch)]
        return np.concatenate(outs) if outs else np.zeros((0, self.spec.out_dim))

    def parameters(self):
        return self.net.parameters()

    def n_parameters(self) -> int:
        return self.net.n_parameters()


def regression_dim(case: GridCase) -> int:
    return case.n_bus + case.n_gen


def build_model(spec: ModelSpec, case: GridCase, domain: str, box=None, graph: GraphContext | None = None) -> Model:
    """Fresh model with weights drawn from the spec's seed."""
    streams = RNGStreams(spec.seed)
    enc = Encoder(case, domain, box, spec.scaling)
    a = spec.architecture
    if a == "FCNN":
        net = FCNN(spec, enc.dim, streams)
    elif a == "CNN":
        net = CNN(spec, enc.channels, enc.n_bus, enc.grid_width, streams)
    else:
        if graph is None or graph.cheb.shape[0] < spec.K + 1:
            graph = GraphContext.from_case(case, K=max(spec.K, 1), weighted=spec.weighted)
        net = GNN(spec, enc.node_width, graph, streams)
    return Model(spec, net, enc)


def parameter_count(spec: ModelSpec, case: GridCase, domain: str, graph: GraphContext | None = None) -> int:
    return build_model(spec, case, domain, graph=graph).n_parameters()


def _shrink(spec: ModelSpec, factor: float) -> ModelSpec:
    def sc(ws):
        return tuple(max(4, int(round(w * factor))) for w in ws)
    if spec.architecture == "CNN":
        return spec.with_(fc_hidden=sc(spec.fc_hidden))
    return spec.with_(hidden=sc(spec.hidden))


def parity_specs(case: GridCase, domain: str, head: str, out_dim: int, seed: int = 0,
                 max_ratio: float = 10.0, **common) -> dict[str, ModelSpec]:
    """Default specs for the five architectures, the largest shrunk until max/min count ≤ max_ratio."""
    graph = GraphContext.from_case(case, K=5, weighted=common.get("weighted", False))
    specs = {a: ModelSpec(a, head, out_dim, seed=seed, **common) for a in LAYOUT}
    for _ in range(100):
        counts = {a: parameter_count(s, case, domain, graph) for a, s in specs.items()}
        hi, lo = max(counts, key=counts.get), min(counts, key=counts.get)
        if counts[hi] <= max_ratio * counts[lo]:
            return specs
        specs[hi] = _shrink(specs[hi], 0.8)
    raise RuntimeError("could not reach parameter parity")
