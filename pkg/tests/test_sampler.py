import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opflearn.acopf import LOAD_ONLY, build_problem, nominal_parameters
from opflearn.grid import bundled_cases, load_case, parse_matpower
from opflearn.sampler import (ACCEPTED, OUT_OF_SUPPORT, REJECT_FAILURE, REJECT_INFEASIBLE, Box, ChainState,
                              FeasibilityOracle, SamplerConfig, SamplerError, accept, denormalize, normalize,
                              parameter_box, propose, run_chain, run_chains, step, suggest_alpha)
from opflearn.solver import solve

from conftest import case_text


def test_normalize_midpoint():
    box = Box(np.array([85.0]), np.array([115.0]))
    assert normalize(np.array([100.0]), box)[0] == pytest.approx(0.5)
    assert normalize(np.array([85.0]), box)[0] == 0.0
    assert normalize(np.array([115.0]), box)[0] == 1.0


def test_pd_box_is_fifteen_percent(case14):
    x0 = nominal_parameters(case14, LOAD_ONLY)
    box = parameter_box(x0)
    k = x0.index_map.index(("bus", 1, "pd"))
    q = x0.index_map.index(("bus", 1, "qd"))
    assert box.lo[k] == pytest.approx(0.85 * x0.values[k]) and box.hi[k] == pytest.approx(1.15 * x0.values[k])
    assert box.hi[q] == pytest.approx(1.10 * x0.values[q])
    np.testing.assert_allclose(normalize(x0, box), 0.5)


def test_zero_nominal_entries_are_fixed(case14):
    x0 = nominal_parameters(case14, LOAD_ONLY)
    box = parameter_box(x0)
    assert box.dim == int(np.sum(x0.values != 0))
    assert box.dim < len(x0.values)


def test_normalize_outside_raises():
    box = Box(np.array([0.0, 1.0]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError, match="outside"):
        normalize(np.array([0.5, 2.5]), box)


def test_box_rejects_infinite():
    with pytest.raises(ValueError):
        Box(np.array([0.0]), np.array([np.inf]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_roundtrip(seed):
    case = load_case("case14")
    x0 = nominal_parameters(case, LOAD_ONLY)
    box = parameter_box(x0)
    u = np.random.default_rng(seed).uniform(0, 1, box.dim)
    x = denormalize(u, box, x0)
    assert np.max(np.abs(normalize(x, box) - u)) <= 1e-12
    assert np.all(x.values >= box.lo) and np.all(x.values <= box.hi)


def test_propose_zero_alpha_is_identity():
    s = ChainState(np.array([0.2, 0.7]))
    np.testing.assert_array_equal(propose(s, 0.0, np.random.default_rng(0)), s.current)


def test_propose_std_matches_alpha():
    s = ChainState(np.full(4, 0.5))
    rng = np.random.default_rng(7)
    draws = np.array([propose(s, 0.05, rng) for _ in range(100_000)])
    np.testing.assert_allclose(draws.std(axis=0), 0.05, rtol=0.02)


def test_propose_deterministic():
    s = ChainState(np.zeros(3))
    a = [propose(s, 0.1, r) for r in [np.random.default_rng(4)] for _ in range(5)]
    b = [propose(s, 0.1, r) for r in [np.random.default_rng(4)] for _ in range(5)]
    np.testing.assert_array_equal(a, b)


class CountingOracle(FeasibilityOracle):
    calls = 0

    def __call__(self, u):
        v = super().__call__(u)
        if v.result is not None:
            self.calls += 1
        return v


def _oracle(case):
    x0 = nominal_parameters(case, LOAD_ONLY)
    return CountingOracle(case, parameter_box(x0), x0)


def test_outside_cube_rejected_without_solve(case5):
    o = _oracle(case5)
    u = np.full(parameter_box(nominal_parameters(case5, LOAD_ONLY)).dim, 0.5)
    u[0] = 1.01
    assert not accept(u, o)
    assert o(u).reason == OUT_OF_SUPPORT and o.calls == 0


@pytest.mark.parametrize("name", [n for n in bundled_cases() if n != "case300"])
def test_nominal_is_accepted(name):
    case = load_case(name)
    o = _oracle(case)
    assert o(normalize(nominal_parameters(case, LOAD_ONLY), o.box)).reason == ACCEPTED


@pytest.mark.slow
def test_nominal_is_accepted_case300():
    case = load_case("case300")
    o = _oracle(case)
    assert accept(normalize(nominal_parameters(case, LOAD_ONLY), o.box), o)


def test_overloaded_case_rejected():
    # nominal 90 MW load on a 100 MW unit: +15% exceeds capacity, no feasible dispatch
    text = case_text(buses=[(1, 3, 0, 0), (2, 1, 90, 10)], gens=[(1, 100, 0, 100, -100)],
                     branches=[(1, 2, 0.001, 0.01, 0, 0)])
    case = parse_matpower(text)
    o = _oracle(case)
    assert accept(np.full(o.box.dim, 0.5), o)
    v = o(np.ones(o.box.dim))
    assert not v.ok and v.reason in (REJECT_INFEASIBLE, REJECT_FAILURE)


def test_run_chain_case5(case5):
    cfg = SamplerConfig(alpha=0.05, seed=0, burn_in=5, thinning=2)
    out = run_chain(case5, cfg, 10)
    assert len(out.samples) == 10
    box = parameter_box(nominal_parameters(case5, LOAD_ONLY))
    from opflearn.acopf import apply_parameters
    for x in out.samples:
        assert np.all(x.values >= box.lo) and np.all(x.values <= box.hi)
        u = normalize(x, box)
        assert np.all((u > 0) & (u < 1))
        assert solve(build_problem(apply_parameters(case5, x))).converged
    assert 0 <= out.acceptance <= 1
    assert out.proposed == out.accepted + sum(out.rejected.values())


def test_bookkeeping_without_burn_in(case5):
    out = run_chain(case5, SamplerConfig(seed=2, burn_in=0, thinning=1), 6)
    assert len(out.samples) == out.accepted == 6


def test_reproducible(case5):
    cfg = SamplerConfig(seed=11, burn_in=2, thinning=1)
    a, b = run_chain(case5, cfg, 5), run_chain(case5, cfg, 5)
    for x, y in zip(a.samples, b.samples):
        np.testing.assert_array_equal(x.values, y.values)
    c = run_chain(case5, SamplerConfig(seed=12, burn_in=2, thinning=1), 5)
    assert not np.array_equal(a.samples[-1].values, c.samples[-1].values)


def test_markov_state_injection(case5):
    """Two chains that reach the same state with identically-seeded RNGs continue identically."""
    o = _oracle(case5)
    u = np.full(o.box.dim, 0.5) + 0.01
    s1 = ChainState(u.copy(), accepted=3, proposed=9)
    s2 = ChainState(u.copy(), accepted=40, proposed=100)
    r1, r2 = np.random.default_rng(5), np.random.default_rng(5)
    for _ in range(4):
        s1, _ = step(s1, 0.05, r1, o)
        s2, _ = step(s2, 0.05, r2, o)
        np.testing.assert_array_equal(s1.current, s2.current)


def test_low_acceptance_aborts(case5):
    cfg = SamplerConfig(alpha=5.0, seed=0, check_after=50)
    with pytest.raises(SamplerError, match="acceptance"):
        run_chain(case5, cfg, 5)


def test_rejection_reasons_tracked(case5):
    out = run_chain(case5, SamplerConfig(alpha=0.3, seed=0, burn_in=0, thinning=1), 3)
    assert set(out.rejected) == {OUT_OF_SUPPORT, REJECT_INFEASIBLE, REJECT_FAILURE}
    assert out.rejected[OUT_OF_SUPPORT] > 0


def test_multiple_chains_split_counts(case5):
    chains = run_chains(case5, SamplerConfig(seed=0, burn_in=1, thinning=1), 5, n_chains=2)
    assert [len(c.samples) for c in chains] == [3, 2]
    assert [c.chain_id for c in chains] == [0, 1]
    again = run_chains(case5, SamplerConfig(seed=0, burn_in=1, thinning=1), 5, n_chains=2)
    np.testing.assert_array_equal(chains[1].samples[0].values, again[1].samples[0].values)


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(alpha=-1)
    with pytest.raises(ValueError):
        SamplerConfig(thinning=0)
    with pytest.raises(ValueError):
        run_chain(load_case("case5"), SamplerConfig(), 0)


def test_suggest_alpha_decreases_with_dim():
    assert suggest_alpha(10) > suggest_alpha(100) > 0
    d = 50
    assert np.exp(-2 * 0.3989422804014327 * suggest_alpha(d) * d) == pytest.approx(0.35)
