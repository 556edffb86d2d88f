"""OPF solve strategies: standard, warm start, reduced, iterative feasibility test."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .acopf import DEFAULT_BINDING_TOL, ConstraintId, OPFProblem, Primal
from .ipm import OPTIMAL, IPMOptions, kkt_residuals, solve_nlp

STANDARD, WARM, REDUCED = "standard", "warm_start", "reduced"


@dataclass(frozen=True)
class SolveStrategy:
    kind: str = STANDARD
    y0: np.ndarray | None = None
    active: frozenset[ConstraintId] | None = None

    @classmethod
    def standard(cls) -> "SolveStrategy":
        return cls(STANDARD)

    @classmethod
    def warm_start(cls, y0) -> "SolveStrategy":
        return cls(WARM, y0=np.asarray(y0, dtype=float))

    @classmethod
    def reduced(cls, active: Iterable[ConstraintId]) -> "SolveStrategy":
        return cls(REDUCED, active=frozenset(active))


@dataclass
class SolveOptions:
    tol: float = 1e-6
    max_iter: int = 300
    mu0: float = 0.1
    binding_tol: float = DEFAULT_BINDING_TOL
    ipm: IPMOptions | None = None

    def ipm_options(self) -> IPMOptions:
        base = self.ipm or IPMOptions()
        return IPMOptions(**{**base.__dict__, "tol": self.tol, "max_iter": self.max_iter, "mu0": self.mu0})


@dataclass
class SolveResult:
    point: Primal
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    objective: float
    status: str
    iterations: int
    wall_time: float
    kkt_residual: float
    binding: np.ndarray
    constraints: list[ConstraintId] = field(repr=False)
    clipped: int = 0

    @property
    def converged(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class InitialPoint:
    z: np.ndarray
    clipped: int = 0


def initial_point(problem: OPFProblem, strategy: SolveStrategy) -> InitialPoint:
    """Primal start for a strategy. Duals and slacks are set by the IPM (duals = 1)."""
    flat = problem.flat_start()
    if strategy.kind != WARM:
        return InitialPoint(problem.pack(flat))
    y0 = np.asarray(strategy.y0, dtype=float)
    nb, ng = problem.n_bus, problem.n_gen
    if y0.shape != (nb + ng,):
        raise ValueError(f"warm start has length {y0.size}, expected {nb + ng}")
    lo = np.r_[problem.vmin, problem.pmin]
    hi = np.r_[problem.vmax, problem.pmax]
    y = np.clip(y0, lo, hi)
    clipped = int(np.sum(y != y0))
    point = Primal(vm=y[:nb], va=np.zeros(nb), pg=y[nb:], qg=flat.qg)
    return InitialPoint(problem.pack(point), clipped)


def solve(problem: OPFProblem, strategy: SolveStrategy | None = None,
          opts: SolveOptions | None = None) -> SolveResult:
    strategy = strategy or SolveStrategy.standard()
    opts = opts or SolveOptions()
    active = None if strategy.kind != REDUCED else sorted(strategy.active, key=problem.constraint_pos.__getitem__)
    nlp = problem.to_nlp(active)
    t0 = time.perf_counter()
    init = initial_point(problem, strategy)
    out = solve_nlp(nlp, init.z, opts.ipm_options())
    wall = time.perf_counter() - t0
    point = problem.unpack(out.z)
    values = problem._ineq_eval(nlp.active, point.va, point.vm, point.pg, point.qg)
    return SolveResult(
        point=point,
        eq_duals=out.lam / nlp.scale,
        ineq_duals=out.nu / nlp.scale,
        objective=problem.objective(point),
        status=out.status,
        iterations=out.iterations,
        wall_time=wall,
        kkt_residual=out.kkt_residual,
        binding=(values <= opts.binding_tol).astype(np.uint8),
        constraints=nlp.active,
        clipped=init.clipped,
    )


def solve_reduced(problem: OPFProblem, active: Iterable[ConstraintId], opts: SolveOptions | None = None) -> SolveResult:
    return solve(problem, SolveStrategy.reduced(active), opts)


def active_set(problem: OPFProblem, result: SolveResult) -> set[ConstraintId]:
    return {c for c, b in zip(result.constraints, result.binding) if b}


class FeasibilityTestError(RuntimeError):
    def __init__(self, message: str, last_result: SolveResult | None, rounds: int):
        super().__init__(message)
        self.last_result = last_result
        self.rounds = rounds


@dataclass
class FeasibilityTestOutcome:
    result: SolveResult
    rounds: int
    added: list[ConstraintId]
    round_times: list[float]
    total_time: float
    full_binding: np.ndarray


def iterative_feasibility_test(problem: OPFProblem, predicted: Iterable[ConstraintId],
                               opts: SolveOptions | None = None, max_rounds: int = 20) -> FeasibilityTestOutcome:
    """Solve the reduced problem, add every violated inequality, repeat until feasible."""
    opts = opts or SolveOptions()
    active = set(predicted)
    added: list[ConstraintId] = []
    times: list[float] = []
    t0 = time.perf_counter()
    result = None
    for rounds in range(1, max_rounds + 1):
        result = solve_reduced(problem, active, opts)
        times.append(result.wall_time)
        values = problem.inequality_values(result.point)
        violated = [c for c, v in zip(problem.constraints, values) if v < -opts.tol and c not in active]
        if result.converged and not violated:
            return FeasibilityTestOutcome(result, rounds, added, times, time.perf_counter() - t0,
                                          (values <= opts.binding_tol).astype(np.uint8))
        if not violated:
            raise FeasibilityTestError(f"reduced solve ended {result.status} with nothing to add",
                                       result, rounds)
        active.update(violated)
        added.extend(violated)
    raise FeasibilityTestError(f"no feasible solution after {max_rounds} rounds", result, max_rounds)


def result_kkt(problem: OPFProblem, result: SolveResult) -> tuple[float, float, float, float]:
    """KKT residual blocks of a result, measured on the solver-scaled problem."""
    nlp = problem.to_nlp(result.constraints)
    z = problem.pack(result.point)
    return kkt_residuals(nlp, z, result.eq_duals * nlp.scale, result.ineq_duals * nlp.scale)
