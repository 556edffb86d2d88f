"""Primal-dual interior-point method for smooth NLPs.

    min f(z)  s.t.  c_E(z) = 0,  c_I(z) >= 0

Inequalities get slacks ``c_I(z) - s = 0`` with ``s > 0`` kept by a log
barrier. Each iteration takes a Newton step on the perturbed KKT conditions
(reduced to the symmetric system in (dz, dlam)), damped by the
fraction-to-the-boundary rule. The barrier parameter follows a monotone
Fiacco-McCormick schedule. Negative curvature or rank deficiency is handled
by diagonal shifts chosen from an inertia count of an LDL^T factorization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"
NUMERICAL_FAILURE = "numerical_failure"

_REG_SHIFTS = (0.0,) + tuple(10.0 ** k for k in range(-8, 7))


class NLPProblem:
    """Callback bundle for the generic NLP.

    Pass callables to the constructor or subclass and override the methods.
    ``eq_hess(z, w)`` and ``ineq_hess(z, w)`` return sum_i w_i * Hess(c_i);
    they default to zero (linear constraints).
    """

    _CALLBACKS = ("objective", "gradient", "hessian", "eq", "eq_jac", "eq_hess",
                  "ineq", "ineq_jac", "ineq_hess")

    def __init__(self, n: int, m_eq: int = 0, m_ineq: int = 0, lower=None, upper=None,
                 domain=None, **callbacks):
        self.n, self.m_eq, self.m_ineq = n, m_eq, m_ineq
        self.lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
        self.upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
        # open lower limits of the variable domain (z > domain); kept by fraction-to-boundary,
        # independent of the inequality set
        self.domain = np.full(n, -np.inf) if domain is None else np.asarray(domain, dtype=float)
        for name, fn in callbacks.items():
            if name not in self._CALLBACKS:
                raise TypeError(f"unknown callback {name!r}")
            if fn is not None:
                setattr(self, name, fn)

    def objective(self, z):
        raise NotImplementedError

    def gradient(self, z):
        raise NotImplementedError

    def hessian(self, z):
        return np.zeros((self.n, self.n))

    def eq(self, z):
        return np.zeros(0)

    def eq_jac(self, z):
        return np.zeros((0, self.n))

    def eq_hess(self, z, w):
        return np.zeros((self.n, self.n))

    def ineq(self, z):
        return np.zeros(0)

    def ineq_jac(self, z):
        return np.zeros((0, self.n))

    def ineq_hess(self, z, w):
        return np.zeros((self.n, self.n))

    def lagrangian_gradient(self, z, lam, nu):
        return self.gradient(z) - self.eq_jac(z).T @ lam - self.ineq_jac(z).T @ nu

    def lagrangian_hessian(self, z, lam, nu):
        return self.hessian(z) - self.eq_hess(z, lam) - self.ineq_hess(z, nu)

    def check_dimensions(self, z) -> None:
        shapes = {
            "gradient": (self.gradient(z).shape, (self.n,)),
            "eq": (self.eq(z).shape, (self.m_eq,)),
            "eq_jac": (self.eq_jac(z).shape, (self.m_eq, self.n)),
            "ineq": (self.ineq(z).shape, (self.m_ineq,)),
            "ineq_jac": (self.ineq_jac(z).shape, (self.m_ineq, self.n)),
        }
        for name, (got, want) in shapes.items():
            if tuple(got) != want:
                raise ValueError(f"{name} returned shape {got}, expected {want}")


def fd_lagrangian_hessian(nlp: NLPProblem, z, lam, nu, eps: float = 1e-6) -> np.ndarray:
    """Central-difference Hessian of the Lagrangian from its analytic gradient."""
    n = len(z)
    out = np.zeros((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = eps
        out[:, k] = (nlp.lagrangian_gradient(z + e, lam, nu) - nlp.lagrangian_gradient(z - e, lam, nu)) / (2 * eps)
    return 0.5 * (out + out.T)


@dataclass
class IPMOptions:
    tol: float = 1e-6
    max_iter: int = 300
    mu0: float = 0.1
    # complementarity target; tighter than tol so objective values are accurate
    compl_tol: float = 1e-9
    tau: float = 0.995
    mu_factor: float = 0.2
    kappa: float = 10.0
    slack_floor: float = 1e-4
    dual_init: float = 1.0
    hessian: str = "exact"  # or "fd"
    divergence: float = 1e10
    line_search: bool = False
    # damping: cap on the primal step in the infinity norm (p.u. / rad); None disables
    max_step: float | None = 0.3


@dataclass
class IPMResult:
    z: np.ndarray
    s: np.ndarray
    lam: np.ndarray
    nu: np.ndarray
    status: str
    iterations: int
    kkt: tuple[float, float, float, float]
    mu: float
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def kkt_residual(self) -> float:
        return max(self.kkt)


def kkt_residuals(nlp: NLPProblem, z, lam, nu) -> tuple[float, float, float, float]:
    """Infinity norms of (stationarity, primal infeasibility, dual infeasibility, complementarity)."""
    ci = nlp.ineq(z)
    stat = _inf(nlp.lagrangian_gradient(z, lam, nu))
    primal = max(_inf(nlp.eq(z)), _inf(np.minimum(ci, 0.0)))
    dual = _inf(np.minimum(nu, 0.0))
    comp = _inf(ci * nu)
    return stat, primal, dual, comp


def _inf(v) -> float:
    v = np.asarray(v)
    return float(np.max(np.abs(v))) if v.size else 0.0


def _inertia(K: np.ndarray) -> tuple[int, int, int]:
    _, d, _ = scipy.linalg.ldl(K, lower=True, hermitian=True)
    ev = np.linalg.eigvalsh(d)
    small = 1e-15 * max(1.0, float(np.max(np.abs(ev))) if ev.size else 1.0)
    return int(np.sum(ev > small)), int(np.sum(ev < -small)), int(np.sum(np.abs(ev) <= small))


def _max_step(v, dv, tau) -> float:
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))


def solve_nlp(nlp: NLPProblem, z0, opts: IPMOptions | None = None, lam0=None, nu0=None) -> IPMResult:
    opts = opts or IPMOptions()
    n, me, mi = nlp.n, nlp.m_eq, nlp.m_ineq
    z = np.array(z0, dtype=float)
    lam = np.full(me, opts.dual_init) if lam0 is None else np.array(lam0, dtype=float)
    nu = np.full(mi, opts.dual_init) if nu0 is None else np.array(nu0, dtype=float)
    with np.errstate(all="ignore"):
        ci0 = nlp.ineq(z)
    if not np.all(np.isfinite(ci0)):
        return IPMResult(z, ci0, lam, nu, NUMERICAL_FAILURE, 0, (math.inf,) * 4, opts.mu0)
    s = np.maximum(ci0, opts.slack_floor)
    mu = opts.mu0
    mu_min = opts.compl_tol / 10.0
    with np.errstate(all="ignore"):
        theta_max = 1e4 * max(1.0, float(np.sum(np.abs(nlp.eq(z))) + np.sum(np.abs(ci0 - s))))
    history: list[float] = []
    filt: list[tuple[float, float]] = []
    status = ITERATION_LIMIT
    it = 0
    kkt = (math.inf,) * 4

    def finish(st):
        return IPMResult(z, s, lam, nu, st, it, kkt, mu, history)

    while True:
        with np.errstate(all="ignore"):
            grad = nlp.gradient(z)
            ce, je = nlp.eq(z), nlp.eq_jac(z)
            ci, ji = nlp.ineq(z), nlp.ineq_jac(z)
        if not all(np.all(np.isfinite(a)) for a in (grad, ce, je, ci, ji)):
            return finish(NUMERICAL_FAILURE)
        r_d = grad - je.T @ lam - ji.T @ nu
        r_i = ci - s
        comp = s * nu
        kkt = (_inf(r_d), max(_inf(ce), _inf(np.minimum(ci, 0.0))), _inf(np.minimum(nu, 0.0)), _inf(ci * nu))
        err = max(kkt[0], kkt[1], _inf(r_i), kkt[3])
        history.append(err)
        if err <= opts.tol and _inf(comp) <= opts.compl_tol:
            return finish(OPTIMAL)
        if it >= opts.max_iter:
            return finish(INFEASIBLE if max(_inf(ce), _inf(r_i)) > 1e-3 else ITERATION_LIMIT)
        if max(_inf(lam), _inf(nu)) > opts.divergence:
            return finish(INFEASIBLE)

        while mu > mu_min and max(kkt[0], _inf(ce), _inf(r_i), _inf(comp - mu)) <= opts.kappa * mu:
            mu = max(mu * opts.mu_factor, mu_min)
            filt = []

        with np.errstate(all="ignore"):
            if opts.hessian == "fd":
                W = fd_lagrangian_hessian(nlp, z, lam, nu)
            else:
                W = nlp.lagrangian_hessian(z, lam, nu)
        if not np.all(np.isfinite(W)):
            return finish(NUMERICAL_FAILURE)
        sig = nu / s
        Wt = W + (ji.T * sig) @ ji
        rhs = np.concatenate([-r_d - ji.T @ ((comp - mu + nu * r_i) / s), -ce])

        step = _newton_step(Wt, je, rhs, n, me)
        if step is None:
            return finish(NUMERICAL_FAILURE)
        dz, dlam = step[:n], -step[n:]
        ds = ji @ dz + r_i
        dnu = (mu - comp - nu * ds) / s
        ap = _max_step(s, ds, opts.tau)
        dom = np.isfinite(nlp.domain)
        if dom.any():
            ap = min(ap, _max_step(z[dom] - nlp.domain[dom], dz[dom], opts.tau))
        ad = _max_step(nu, dnu, opts.tau)
        if opts.max_step is not None:
            ap = min(ap, opts.max_step / max(_inf(dz), 1e-300))
        if opts.line_search:
            ap = _backtrack(nlp, z, s, dz, ds, ap, mu, grad, filt, theta_max)
        z = z + ap * dz
        s = s + ap * ds
        lam = lam + ad * dlam
        nu = nu + ad * dnu
        it += 1


def _barrier_parts(nlp, z, s, mu):
    with np.errstate(all="ignore"):
        phi = nlp.objective(z) - mu * np.sum(np.log(s))
        theta = np.sum(np.abs(nlp.eq(z))) + np.sum(np.abs(nlp.ineq(z) - s))
    if not (np.isfinite(phi) and np.isfinite(theta)):
        return math.inf, math.inf
    return float(phi), float(theta)


def _backtrack(nlp, z, s, dz, ds, alpha, mu, grad, filt, theta_max,
               gamma=1e-5, eta=1e-4, max_halvings=40):
    """Filter backtracking on (constraint violation, barrier objective).

    Returns the accepted primal step length. Near feasibility, with a descent
    direction for the barrier objective, an Armijo decrease is required
    instead of filter acceptance ("f-type" step); otherwise the current pair
    enters the filter.
    """
    phi0, theta0 = _barrier_parts(nlp, z, s, mu)
    slope = grad @ dz - mu * np.sum(ds / s)
    theta_min = 1e-4 * theta_max
    for _ in range(max_halvings):
        phi, theta = _barrier_parts(nlp, z + alpha * dz, s + alpha * ds, mu)
        ok = theta <= theta_max and all(theta <= (1 - gamma) * t or phi <= f - gamma * t for t, f in filt)
        if ok:
            if theta0 <= theta_min and slope < 0:
                if phi <= phi0 + eta * alpha * slope:
                    return alpha
            elif theta <= (1 - gamma) * theta0 or phi <= phi0 - gamma * theta0:
                filt.append((theta0, phi0))
                return alpha
        alpha *= 0.5
    filt.append((theta0, phi0))
    return alpha


def _newton_step(Wt, je, rhs, n, me):
    for dw in _REG_SHIFTS:
        for dc in (0.0, 1e-8):
            K = np.zeros((n + me, n + me))
            K[:n, :n] = Wt + dw * np.eye(n)
            K[:n, n:] = je.T
            K[n:, :n] = je
            K[n:, n:] = -dc * np.eye(me)
            pos, neg, zero = _inertia(K)
            if zero:
                continue
            if (pos, neg) == (n, me) or dw == _REG_SHIFTS[-1]:
                try:
                    sol = np.linalg.solve(K, rhs)
                except np.linalg.LinAlgError:
                    continue
                if np.all(np.isfinite(sol)):
                    return sol
    return None
