import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opflearn.grid import (CaseError, ParseError, ValidationError, build_graph, bundled_cases, lambda_max,
                           load_case, normalized_laplacian, parse_matpower, scaled_laplacian, serialize_matpower)

from conftest import THREE_BUS, TWO_BUS, case_text

RING = THREE_BUS


def test_three_bus_counts(three_bus):
    assert (three_bus.n_bus, three_bus.n_branch, three_bus.n_gen) == (3, 3, 2)


def test_per_unit_conversion(three_bus):
    assert three_bus.buses[1].pd == pytest.approx(0.5)
    assert three_bus.generators[0].pmax == pytest.approx(2.0)
    assert three_bus.branches[0].rate_a == pytest.approx(2.5)


def test_bundled_case118_size():
    assert "case118" in bundled_cases()
    assert load_case("case118").n_bus == 118


def test_dangling_branch_is_validation_error():
    text = case_text(buses=[(1, 3, 0, 0), (2, 1, 10, 0), (3, 1, 10, 0)],
                     gens=[(1, 100, 0, 50, -50)],
                     branches=[(1, 2, 0.01, 0.1, 0, 100), (2, 99, 0.01, 0.1, 0, 100)])
    with pytest.raises(ValidationError, match="99"):
        parse_matpower(text)


def test_no_slack_is_validation_error():
    with pytest.raises(ValidationError, match="slack"):
        parse_matpower(TWO_BUS.replace("\t1\t3\t", "\t1\t2\t"))


def test_malformed_table_names_line():
    lines = RING.splitlines()
    k = next(i for i, ln in enumerate(lines) if ln.startswith("mpc.gen ="))
    lines[k + 1] = "\t1\t0\t0;"
    with pytest.raises(ParseError) as err:
        parse_matpower("\n".join(lines))
    assert err.value.line == k + 2


def test_unknown_case_name():
    with pytest.raises(FileNotFoundError):
        load_case("case_does_not_exist")


def test_two_bus_graph(two_bus):
    g = build_graph(two_bus)
    np.testing.assert_array_equal(g.adjacency, [[0, 1], [1, 0]])
    np.testing.assert_array_equal(g.degree, [1, 1])


def test_ring_degrees(three_bus):
    np.testing.assert_array_equal(build_graph(three_bus).degree, [2, 2, 2])


def test_parallel_branches_collapse():
    text = case_text(buses=[(1, 3, 0, 0), (2, 1, 10, 0)], gens=[(1, 100, 0, 50, -50)],
                     branches=[(1, 2, 0.01, 0.1, 0, 100), (1, 2, 0.01, 0.1, 0, 100)])
    case = parse_matpower(text)
    assert case.n_branch == 2
    g = build_graph(case)
    assert g.adjacency[0, 1] == 1.0 and len(g.edges) == 1


def test_weighted_adjacency_normalized(case14):
    g = build_graph(case14, weighted=True)
    assert g.adjacency.max() == pytest.approx(1.0)
    assert np.all(g.adjacency >= 0)
    np.testing.assert_array_equal(g.adjacency > 0, build_graph(case14).adjacency > 0)


def test_two_node_laplacian(two_bus):
    L = normalized_laplacian(build_graph(two_bus))
    np.testing.assert_allclose(L, [[1, -1], [-1, 1]])
    np.testing.assert_allclose(scaled_laplacian(L, 2.0), [[0, -1], [-1, 0]])


def test_ring_laplacian_spectrum(three_bus):
    L = normalized_laplacian(build_graph(three_bus))
    np.testing.assert_allclose(np.linalg.eigvalsh(L), [0, 1.5, 1.5], atol=1e-12)
    assert lambda_max(L) == pytest.approx(1.5, abs=1e-6)


def test_isolated_node_laplacian_error():
    from opflearn.grid import GridGraph
    g = GridGraph(n=2, edges=(), adjacency=np.zeros((2, 2)), degree=np.zeros(2))
    with pytest.raises(ValueError, match="isolated"):
        normalized_laplacian(g)


def test_scaled_laplacian_rejects_nonpositive():
    with pytest.raises(ValueError):
        scaled_laplacian(np.eye(2), 0.0)


def test_lambda_max_fallback():
    # nearly-degenerate top eigenvalues cannot settle in one iteration
    assert lambda_max(np.diag([1.5, 1.49, 0.1]), max_iter=1, tol=1e-15) == 2.0
    assert lambda_max(np.zeros((3, 3))) == 2.0


@pytest.mark.parametrize("name", bundled_cases())
def test_bundled_graph_invariants(name):
    case = load_case(name)
    g = build_graph(case)
    A = g.adjacency
    np.testing.assert_array_equal(A, A.T)
    assert np.all(np.diag(A) == 0)
    L = normalized_laplacian(g)
    ev = np.linalg.eigvalsh(L)
    assert ev.min() >= -1e-8 and ev.max() <= 2 + 1e-8
    # D^(1/2)·1 spans the null space
    v = np.sqrt(g.degree)
    np.testing.assert_allclose(L @ v, 0, atol=1e-10)
    Lt = scaled_laplacian(L, ev.max())
    top = np.linalg.eigh(L)[1][:, -1]
    np.testing.assert_allclose(Lt @ top, top, atol=1e-8)


@pytest.mark.parametrize("name", bundled_cases())
def test_serialize_roundtrip(name):
    case = load_case(name)
    again = parse_matpower(serialize_matpower(case), name=case.name)
    assert again == case


def test_row_order_invariance():
    a = parse_matpower(RING, name="ring")
    lines = RING.splitlines()
    start = next(i for i, ln in enumerate(lines) if ln.startswith("mpc.branch ="))
    rows = lines[start + 1:start + 4]
    lines[start + 1:start + 4] = rows[::-1]
    bstart = next(i for i, ln in enumerate(lines) if ln.startswith("mpc.bus ="))
    lines[bstart + 1:bstart + 4] = lines[bstart + 1:bstart + 4][::-1]
    b = parse_matpower("\n".join(lines), name="ring")
    assert a == b
    np.testing.assert_array_equal(build_graph(a).adjacency, build_graph(b).adjacency)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=5, max_size=15))
def test_random_graph_invariants(pairs):
    # a spanning path keeps every random graph connected
    edges = {(k, k + 1) for k in range(5)} | {(min(i, j), max(i, j)) for i, j in pairs if i != j}
    branches = [(i + 1, j + 1, 0.01, 0.1, 0, 100) for i, j in sorted(edges)]
    buses = [(1, 3, 0, 0)] + [(k, 1, 10, 0) for k in range(2, 7)]
    case = parse_matpower(case_text(buses, [(1, 500, 0, 300, -300)], branches))
    g = build_graph(case)
    assert np.array_equal(g.adjacency, g.adjacency.T)
    ev = np.linalg.eigvalsh(normalized_laplacian(g))
    assert ev.min() >= -1e-8 and ev.max() <= 2 + 1e-8
    assert g.degree.sum() == 2 * len(g.edges)


def test_case_error_hierarchy():
    assert issubclass(ParseError, CaseError) and issubclass(ValidationError, CaseError)
    with pytest.raises(CaseError):
        parse_matpower("mpc.bus = [\n];\n")


def test_unbounded_rate_is_inf(two_bus):
    assert math.isinf(two_bus.branches[0].rate_a)
