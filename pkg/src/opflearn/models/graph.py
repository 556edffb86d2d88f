"""Graph convolutions on a fixed bus graph: first-order (GCN), Chebyshev, and B-spline kernels.

Each layer is a sum of constant node-mixing matrices applied to the features, followed by a
per-term weight matrix, so everything runs through ``propagate`` and a single matmul.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..grid import GridCase, build_graph, lambda_max, normalized_laplacian, scaled_laplacian
from ..nn import Module, Tensor, parameter, propagate
from ..nn.layers import bias_uniform, kaiming_uniform

SPLINE_KERNEL = 5
CHEB_K = 5


def _check_features(H: Tensor, n: int, f_in: int, layer: str) -> None:
    if H.ndim != 3 or H.shape[1] != n or H.shape[2] != f_in:
        raise ValueError(f"{layer}: expected features of shape (N, {n}, {f_in}), got {H.shape}")


def stacked_propagate(S: np.ndarray, H: Tensor) -> Tensor:
    """(M, V, V) operators on (N, V, F) features → (N, V, M·F), term-major per node."""
    m, v, _ = S.shape
    n, _, f = H.shape
    Z = propagate(S.reshape(m * v, v), H)
    return Z.reshape(n, m, v, f).transpose(0, 2, 1, 3).reshape(n, v, m * f)


# --------------------------------------------------------------------------
# first order

def gcn_matrix(adjacency: np.ndarray) -> np.ndarray:
    """Renormalized propagation D̃^-1/2 (A + I) D̃^-1/2."""
    A = np.asarray(adjacency, dtype=float) + np.eye(len(adjacency))
    d = 1.0 / np.sqrt(A.sum(axis=1))
    return d[:, None] * A * d[None, :]


def gcn_layer(H: Tensor, A_hat: np.ndarray, W: Tensor, b: Tensor | None = None) -> Tensor:
    _check_features(H, A_hat.shape[0], W.shape[0], "gcn_layer")
    out = propagate(A_hat, H) @ W
    return out + b if b is not None else out


# --------------------------------------------------------------------------
# Chebyshev

def chebyshev_basis(L_tilde: np.ndarray, K: int) -> np.ndarray:
    """T_0..T_K of the scaled Laplacian by the three-term recurrence, shape (K+1, V, V)."""
    n = L_tilde.shape[0]
    T = [np.eye(n)]
    if K >= 1:
        T.append(np.array(L_tilde, dtype=float))
    for _ in range(2, K + 1):
        T.append(2.0 * L_tilde @ T[-1] - T[-2])
    return np.stack(T)


def cheb_layer(H: Tensor, T: np.ndarray, W: Tensor, b: Tensor | None = None) -> Tensor:
    """Σ_k T_k H W_k with W of shape (K+1, F_in, F_out)."""
    k1, f_in, f_out = W.shape
    if T.shape[0] != k1:
        raise ValueError(f"cheb_layer: {T.shape[0]} basis matrices for {k1} weight matrices")
    _check_features(H, T.shape[1], f_in, "cheb_layer")
    out = stacked_propagate(T, H) @ W.reshape(k1 * f_in, f_out)
    return out + b if b is not None else out


# --------------------------------------------------------------------------
# B-spline kernels

def bspline_basis(u, kernel_size: int = SPLINE_KERNEL) -> tuple[np.ndarray, np.ndarray]:
    """Open degree-1 B-spline basis on [0, 1]^d with ``kernel_size`` knots per dimension.

    Returns the flat kernel indices and product weights of the 2^d kernels with support at u.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(~np.isfinite(u)) or np.any(u < 0) or np.any(u > 1):
        raise ValueError(f"pseudo-coordinates must lie in [0, 1], got {u.tolist()}")
    t = u * (kernel_size - 1)
    left = np.minimum(np.floor(t).astype(int), kernel_size - 2)
    frac = t - left
    idx, val = [0], [1.0]
    for dim in range(len(u)):
        nidx, nval = [], []
        for k, w in zip(idx, val):
            for off, wd in ((0, 1.0 - frac[dim]), (1, frac[dim])):
                nidx.append(k * kernel_size + left[dim] + off)
                nval.append(w * wd)
        idx, val = nidx, nval
    return np.array(idx), np.array(val)


def bspline_dense(u, kernel_size: int = SPLINE_KERNEL) -> np.ndarray:
    u = np.atleast_1d(u)
    out = np.zeros(kernel_size ** len(u))
    idx, val = bspline_basis(u, kernel_size)
    np.add.at(out, idx, val)
    return out


def spline_operators(n: int, edges, pseudo, kernel_size: int = SPLINE_KERNEL) -> np.ndarray:
    """S_m[i, j] = Σ_{edges j→i} B_m(u_ij) / |N(i)|, shape (kernel_size², V, V).

    ``edges`` are directed pairs (i, j) meaning j sends to i; ``pseudo`` holds one u per edge.
    """
    dims = np.shape(pseudo)[1] if len(edges) else 2
    S = np.zeros((kernel_size ** dims, n, n))
    deg = np.zeros(n)
    for (i, j), u in zip(edges, pseudo):
        idx, val = bspline_basis(u, kernel_size)
        S[idx, i, j] += val
        deg[i] += 1
    nz = deg > 0
    S[:, nz, :] /= deg[nz][None, :, None]
    return S


def spline_layer(H: Tensor, S: np.ndarray, W: Tensor, W_root: Tensor, b: Tensor | None = None) -> Tensor:
    """W_root h_i + mean over neighbours of (Σ_m B_m(u_ij) W_m) h_j + b; W is (M, F_in, F_out)."""
    m, f_in, f_out = W.shape
    if S.shape[0] != m:
        raise ValueError(f"spline_layer: {S.shape[0]} kernel operators for {m} weight matrices")
    _check_features(H, S.shape[1], f_in, "spline_layer")
    out = stacked_propagate(S, H) @ W.reshape(m * f_in, f_out) + H @ W_root
    return out + b if b is not None else out


def branch_pseudo_coordinates(case: GridCase) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Directed edges (both directions per branch) with u = (r, x) min-max normalized over the case."""
    idx = case.bus_index
    r = np.array([br.r for br in case.branches])
    x = np.array([abs(br.x) for br in case.branches])

    def unit(v):
        span = v.max() - v.min()
        return np.zeros_like(v) if span <= 0 else (v - v.min()) / span

    u = np.stack([unit(r), unit(x)], axis=1)
    edges, coords = [], []
    for k, br in enumerate(case.branches):
        i, j = idx[br.from_bus], idx[br.to_bus]
        edges += [(i, j), (j, i)]
        coords += [u[k], u[k]]
    return edges, np.array(coords)


# --------------------------------------------------------------------------
# static graph context shared by the three GNNs

@dataclass
class GraphContext:
    n: int
    adjacency: np.ndarray = field(repr=False)
    gcn: np.ndarray = field(repr=False)
    cheb: np.ndarray = field(repr=False)
    spline: np.ndarray = field(repr=False)
    gen_bus: np.ndarray = field(repr=False)

    @classmethod
    def from_case(cls, case: GridCase, K: int = CHEB_K, kernel_size: int = SPLINE_KERNEL,
                  weighted: bool = False) -> "GraphContext":
        g = build_graph(case, weighted=weighted)
        L = normalized_laplacian(g)
        Lt = scaled_laplacian(L, lambda_max(L))
        edges, u = branch_pseudo_coordinates(case)
        bidx = case.bus_index
        return cls(n=case.n_bus, adjacency=g.adjacency, gcn=gcn_matrix(g.adjacency),
                   cheb=chebyshev_basis(Lt, K), spline=spline_operators(case.n_bus, edges, u, kernel_size),
                   gen_bus=np.array([bidx[gen.bus] for gen in case.generators], dtype=int))


class GCNConv(Module):
    def __init__(self, f_in: int, f_out: int, A_hat: np.ndarray, rng):
        self.A_hat = A_hat
        self.weight = parameter(kaiming_uniform(rng, (f_in, f_out), f_in))
        self.bias = parameter(bias_uniform(rng, f_out, f_in))

    def forward(self, H):
        return gcn_layer(H, self.A_hat, self.weight, self.bias)


class ChebConv(Module):
    def __init__(self, f_in: int, f_out: int, T: np.ndarray, rng):
        self.T = T
        k1 = T.shape[0]
        self.weight = parameter(kaiming_uniform(rng, (k1, f_in, f_out), k1 * f_in))
        self.bias = parameter(bias_uniform(rng, f_out, k1 * f_in))

    def forward(self, H):
        return cheb_layer(H, self.T, self.weight, self.bias)


class SplineConv(Module):
    def __init__(self, f_in: int, f_out: int, S: np.ndarray, rng):
        self.S = S
        m = S.shape[0]
        # at most 4 kernels are active per edge, so fan-in counts those plus the root term
        fan = 5 * f_in
        self.weight = parameter(kaiming_uniform(rng, (m, f_in, f_out), fan))
        self.root = parameter(kaiming_uniform(rng, (f_in, f_out), fan))
        self.bias = parameter(bias_uniform(rng, f_out, fan))

    def forward(self, H):
        return spline_layer(H, self.S, self.weight, self.root, self.bias)
