import time

import numpy as np
import pytest

from opflearn.acopf import ConstraintId, build_problem, extract_regression_target
from opflearn.ipm import OPTIMAL
from opflearn.solver import (FeasibilityTestError, SolveOptions, SolveStrategy, active_set, initial_point,
                             iterative_feasibility_test, result_kkt, solve, solve_reduced)


@pytest.fixture(scope="module")
def p5(case5):
    return build_problem(case5)


@pytest.fixture(scope="module")
def p14(case14):
    return build_problem(case14)


@pytest.fixture(scope="module")
def sol5(p5):
    return solve(p5)


@pytest.fixture(scope="module")
def sol14(p14):
    return solve(p14)


def _exact(r):
    return np.r_[r.point.vm, r.point.pg]


@pytest.mark.parametrize("name", ["case5", "case14"])
def test_matches_reference(name, reference_objectives, request):
    p = build_problem(request.getfixturevalue(name))
    t = time.perf_counter()
    r = solve(p)
    assert time.perf_counter() - t <= 5.0
    assert r.status == OPTIMAL
    assert max(result_kkt(p, r)) <= 1e-6
    ref = reference_objectives[name]["objective"]
    assert abs(r.objective - ref) <= 1e-3 * abs(ref)


def test_output_feasible(p14, sol14):
    assert np.all(p14.inequality_values(sol14.point) >= -1e-6)
    assert np.max(np.abs(p14.equality_residuals(sol14.point))) <= 1e-6


def test_deterministic(p14, sol14):
    again = solve(p14)
    assert again.iterations == sol14.iterations and again.status == sol14.status
    np.testing.assert_array_equal(again.point.vm, sol14.point.vm)


def test_flat_warm_start_is_standard(p14, sol14):
    f = p14.flat_start()
    w = solve(p14, SolveStrategy.warm_start(np.r_[f.vm, f.pg]))
    assert w.iterations == sol14.iterations
    np.testing.assert_array_equal(w.point.pg, sol14.point.pg)


def test_warm_start_clips_to_bounds(p5):
    y0 = np.r_[p5.vmax + 0.5, p5.pmin - 1.0]
    init = initial_point(p5, SolveStrategy.warm_start(y0))
    pt = p5.unpack(init.z)
    np.testing.assert_array_equal(pt.vm, p5.vmax)
    np.testing.assert_array_equal(pt.pg, p5.pmin)
    assert init.clipped == len(y0)
    assert solve(p5, SolveStrategy.warm_start(y0)).clipped == len(y0)


def test_warm_start_wrong_length(p5):
    with pytest.raises(ValueError):
        initial_point(p5, SolveStrategy.warm_start(np.ones(3)))


def test_warm_start_from_optimum_never_slower(p5, sol5, p14, sol14):
    for p, r in ((p5, sol5), (p14, sol14)):
        w = solve(p, SolveStrategy.warm_start(_exact(r)))
        assert w.converged and w.iterations <= r.iterations
        assert w.objective == pytest.approx(r.objective, rel=1e-6)


@pytest.mark.xfail(reason="measured tie on nominal case5 (29 vs 29); see ledger, warm-start dominance",
                   strict=False)
def test_warm_start_from_optimum_strictly_fewer_case5(p5, sol5):
    assert solve(p5, SolveStrategy.warm_start(_exact(sol5))).iterations < sol5.iterations


def test_reduced_full_set_is_standard(p14, sol14):
    r = solve_reduced(p14, p14.constraints)
    assert abs(r.objective - sol14.objective) <= 1e-6 * abs(sol14.objective)


@pytest.mark.parametrize("which", ["p5", "p14"])
def test_reduced_true_active_set_preserves_objective(which, request):
    p = request.getfixturevalue(which)
    r = solve(p)
    red = solve_reduced(p, active_set(p, r))
    assert red.converged
    assert abs(red.objective - r.objective) <= 1e-6 * abs(r.objective)


def test_reduced_empty_violates_something(p14):
    r = solve_reduced(p14, [])
    assert np.any(p14.inequality_values(r.point) < -1e-6)


def test_feasibility_superset_one_round(p14, sol14):
    out = iterative_feasibility_test(p14, active_set(p14, sol14))
    assert out.rounds == 1 and out.added == []
    assert out.result.objective == pytest.approx(sol14.objective, rel=1e-6)


def test_feasibility_from_empty(p14, sol14):
    out = iterative_feasibility_test(p14, [])
    assert out.rounds <= p14.n_ineq
    assert np.all(p14.inequality_values(out.result.point) >= -1e-6)
    assert out.result.objective == pytest.approx(sol14.objective, rel=1e-6)
    assert len(set(out.added)) == len(out.added)
    assert out.total_time >= sum(out.round_times) - 1e-6


def test_feasibility_withheld_constraint(small_dataset):
    """Withholding a strictly active constraint: it is always re-added, and on some instance alone."""
    from opflearn.acopf import apply_parameters
    d = small_dataset
    template = d.parameter_template()
    cons = d.constraints
    exact = 0
    for i in d.split["test"][:3]:
        s = d.samples[i]
        p = build_problem(apply_parameters(d.case, template.with_values(s.x)))
        r = solve(p)
        binding = {c for c, b in zip(cons, s.binding) if b}
        for drop in [c for c, b, nu in zip(cons, r.binding, r.ineq_duals) if b and nu > 1e-3]:
            out = iterative_feasibility_test(p, binding - {drop})
            assert drop in out.added
            assert np.all(p.inequality_values(out.result.point) >= -1e-6)
            exact += out.rounds == 2 and out.added == [drop]
    assert exact > 0


def test_round_limit_raises(p14):
    with pytest.raises(FeasibilityTestError) as err:
        iterative_feasibility_test(p14, [], max_rounds=1)
    assert err.value.rounds == 1 and err.value.last_result is not None


def test_binding_reported_over_active_rows(p14):
    act = [ConstraintId("pg", 0, "lower"), ConstraintId("vm", 0, "upper")]
    r = solve_reduced(p14, act)
    assert r.constraints == act and len(r.binding) == 2


def test_regression_target_from_result(sol14, case14):
    assert extract_regression_target(sol14).shape == (case14.n_bus + case14.n_gen,)


def test_iteration_limit_status(p14):
    r = solve(p14, opts=SolveOptions(max_iter=3))
    assert not r.converged and r.iterations == 3
