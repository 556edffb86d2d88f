"""Random-walk Metropolis-Hastings over grid parameters, restricted to AC-feasible points.

The target is uniform over the feasible part of the parameter box, so with a
symmetric Gaussian proposal the MH ratio is 1 inside the support and every
step reduces to a feasibility check (box membership + converged OPF solve).
Chains walk in normalized coordinates where the box is the unit cube.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .acopf import LOAD_ONLY, ParameterVector, apply_parameters, build_problem, nominal_parameters
from .grid import GridCase, ValidationError
from .ipm import INFEASIBLE, OPTIMAL
from .solver import SolveOptions, SolveResult, solve

log = logging.getLogger(__name__)

PD_FRACTION = 0.15
OTHER_FRACTION = 0.10


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class Box:
    """Per-entry bounds. Entries with lo == hi (zero nominal value) stay fixed."""
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if self.lo.shape != self.hi.shape:
            raise ValueError("lo and hi differ in shape")
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise ValueError("bounds must be finite")
        if np.any(self.lo > self.hi):
            raise ValueError("lo > hi")

    @property
    def free(self) -> np.ndarray:
        return self.hi > self.lo

    @property
    def dim(self) -> int:
        return int(np.sum(self.free))


def parameter_box(x0: ParameterVector, pd_fraction=PD_FRACTION, other_fraction=OTHER_FRACTION) -> Box:
    frac = np.array([pd_fraction if fld == "pd" else other_fraction for _, _, fld in x0.index_map])
    a = x0.values * (1 - frac)
    b = x0.values * (1 + frac)
    return Box(np.minimum(a, b), np.maximum(a, b))


def normalize(x: ParameterVector | np.ndarray, box: Box, atol: float = 1e-12) -> np.ndarray:
    """Free coordinates of x mapped affinely to [0, 1]."""
    v = np.asarray(getattr(x, "values", x), dtype=float)
    scale = np.maximum(np.abs(box.lo), np.abs(box.hi)) + 1.0
    if np.any(v < box.lo - atol * scale) or np.any(v > box.hi + atol * scale):
        bad = np.flatnonzero((v < box.lo - atol * scale) | (v > box.hi + atol * scale))
        raise ValueError(f"value outside bounds at entries {bad[:5].tolist()}")
    f = box.free
    return (v[f] - box.lo[f]) / (box.hi[f] - box.lo[f])


def denormalize(u: np.ndarray, box: Box, template: ParameterVector) -> ParameterVector:
    f = box.free
    v = box.lo.copy()
    v[f] = box.lo[f] + np.asarray(u, dtype=float) * (box.hi[f] - box.lo[f])
    return template.with_values(v)


def suggest_alpha(dim: int, target: float = 0.35) -> float:
    """Step size whose cube-exit rate alone gives ``target`` acceptance.

    Under the uniform stationary law a coordinate leaves [0, 1] with probability
    about 2·φ(0)·α, so P(stay inside) ≈ exp(-0.798 α d).
    """
    return float(-np.log(target) / (2 * 0.3989422804014327 * max(dim, 1)))


@dataclass
class SamplerConfig:
    alpha: float = 0.05
    seed: int = 0
    burn_in: int = 50
    thinning: int = 5
    domain: str = LOAD_ONLY
    pd_fraction: float = PD_FRACTION
    other_fraction: float = OTHER_FRACTION
    min_acceptance: float = 0.01
    check_after: int = 1000
    solve: SolveOptions = field(default_factory=SolveOptions)

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError("alpha must be non-negative")
        if self.burn_in < 0 or self.thinning < 1:
            raise ValueError("burn_in >= 0 and thinning >= 1 required")


@dataclass
class ChainState:
    current: np.ndarray  # normalized coordinates
    accepted: int = 0
    proposed: int = 0

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0


def propose(state: ChainState, alpha: float, rng: np.random.Generator) -> np.ndarray:
    return state.current + alpha * rng.standard_normal(state.current.shape)


# verdicts
ACCEPTED, OUT_OF_SUPPORT, REJECT_INFEASIBLE, REJECT_FAILURE = "accepted", "out_of_support", "infeasible", "failure"


@dataclass
class Verdict:
    reason: str
    result: SolveResult | None = None

    @property
    def ok(self) -> bool:
        return self.reason == ACCEPTED


class FeasibilityOracle:
    """Acceptance test for normalized candidates of one case and box."""

    def __init__(self, case: GridCase, box: Box, template: ParameterVector, opts: SolveOptions | None = None):
        self.case, self.box, self.template = case, box, template
        self.opts = opts or SolveOptions()

    def __call__(self, u: np.ndarray) -> Verdict:
        if np.any(u < 0.0) or np.any(u > 1.0):
            return Verdict(OUT_OF_SUPPORT)
        try:
            grid = apply_parameters(self.case, denormalize(u, self.box, self.template))
        except ValidationError:
            return Verdict(OUT_OF_SUPPORT)
        res = solve(build_problem(grid), opts=self.opts)
        if res.status == OPTIMAL:
            return Verdict(ACCEPTED, res)
        return Verdict(REJECT_INFEASIBLE if res.status == INFEASIBLE else REJECT_FAILURE, res)


def accept(candidate: np.ndarray, oracle: FeasibilityOracle) -> bool:
    return oracle(candidate).ok


def step(state: ChainState, alpha: float, rng: np.random.Generator, oracle) -> tuple[ChainState, Verdict]:
    """One MH transition; depends only on the state, the RNG and the oracle."""
    cand = propose(state, alpha, rng)
    v = oracle(cand)
    if v.ok:
        return ChainState(cand, state.accepted + 1, state.proposed + 1), v
    return ChainState(state.current, state.accepted, state.proposed + 1), v


@dataclass
class ChainOutput:
    samples: list[ParameterVector]
    results: list[SolveResult] = field(repr=False)
    proposed: int = 0
    accepted: int = 0
    rejected: dict = field(default_factory=dict)
    chain_id: int = 0

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0


def run_chain(case: GridCase, config: SamplerConfig, n_samples: int, chain_id: int = 0,
              seed=None) -> ChainOutput:
    """Emit n_samples states: drop burn_in accepted states, keep every thinning-th after."""
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    x0 = nominal_parameters(case, config.domain)
    box = parameter_box(x0, config.pd_fraction, config.other_fraction)
    oracle = FeasibilityOracle(case, box, x0, config.solve)
    rng = np.random.default_rng(config.seed if seed is None else seed)
    state = ChainState(normalize(x0, box))
    start = oracle(state.current)
    if not start.ok:
        raise SamplerError(f"{case.name}: nominal parameters are not feasible ({start.reason})")
    out = ChainOutput([], [], chain_id=chain_id,
                      rejected={OUT_OF_SUPPORT: 0, REJECT_INFEASIBLE: 0, REJECT_FAILURE: 0})
    while len(out.samples) < n_samples:
        state, v = step(state, config.alpha, rng, oracle)
        if not v.ok:
            out.rejected[v.reason] += 1
        elif state.accepted > config.burn_in and (state.accepted - config.burn_in) % config.thinning == 0:
            out.samples.append(denormalize(state.current, box, x0))
            out.results.append(v.result)
        if state.proposed >= config.check_after and state.acceptance < config.min_acceptance:
            raise SamplerError(
                f"{case.name}: acceptance {state.acceptance:.2%} after {state.proposed} proposals "
                f"(alpha={config.alpha} is likely too large); rejections {out.rejected}")
    out.proposed, out.accepted = state.proposed, state.accepted
    if out.rejected[REJECT_FAILURE]:
        log.info("%s chain %d: %d solver failures counted as rejections", case.name, chain_id,
                 out.rejected[REJECT_FAILURE])
    return out


def _chain_job(args):
    return run_chain(*args)


def run_chains(case: GridCase, config: SamplerConfig, n_samples: int, n_chains: int = 1,
               workers: int = 1) -> list[ChainOutput]:
    """Independent chains with spawned seeds; sample counts split as evenly as possible."""
    seeds = np.random.SeedSequence(config.seed).spawn(n_chains) if n_chains > 1 else [config.seed]
    counts = [n_samples // n_chains + (k < n_samples % n_chains) for k in range(n_chains)]
    jobs = [(case, config, c, k, s) for k, (c, s) in enumerate(zip(counts, seeds)) if c > 0]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_chain_job, jobs))
    return [_chain_job(j) for j in jobs]
