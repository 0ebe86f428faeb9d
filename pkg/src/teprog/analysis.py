"""Verification of run traces: the rate bound and the per-step inequalities.

Every checker returns a :class:`CheckResult`, which is truthy iff the check
passed and lists the iteration indices (or sample indices) that failed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateWindow, InvalidParameter, PreconditionViolation, ReferenceInfeasible
from .problems import FEASIBILITY_TOL, CompositeProblem, objective_value
from .prox import ProxSubproblem, optimality_residual, surrogate_value
from .solver import RunTrace
from .telescope import TelescopicSchedule, find_k0, lipschitz_bound_at, tau_at

BOUND_RTOL = 1e-8
STEP_RTOL = 1e-9
MONOTONE_ATOL = 1e-9
FB_RESIDUAL_TOL = 1e-8


@dataclass
class CheckResult:
    name: str
    failures: list = field(default_factory=list)
    checked: int = 0
    detail: str = ""

    def __bool__(self):
        return not self.failures

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> dict:
        return {"check": self.name, "passed": self.passed, "checked": self.checked,
                "failures": [int(k) for k in self.failures[:50]],
                "n_failures": len(self.failures), "detail": self.detail}


def theorem_bound(k: int, k0: int, tau_next: float, mu_next: float, B0: float) -> float:
    """``tau_{k+1} B0 / ((k + 1 - k0) mu_{k+1})``."""
    if k < k0 or k0 < 1:
        raise InvalidParameter(f"need k >= k0 >= 1 (k={k}, k0={k0})")
    if not tau_next > 0 or not mu_next > 0 or not B0 >= 0:
        raise InvalidParameter("tau and mu must be positive and B0 nonnegative")
    return tau_next * B0 / ((k + 1 - k0) * mu_next)


@dataclass
class CertifiedBound:
    k: np.ndarray
    gap: np.ndarray
    bound: np.ndarray
    satisfied: np.ndarray
    k0: int
    x_ref: np.ndarray
    F_ref: float
    tolerance: float

    @property
    def all_satisfied(self) -> bool:
        return bool(np.all(self.satisfied))

    def violations(self) -> np.ndarray:
        return self.k[~self.satisfied]

    def as_check(self) -> CheckResult:
        return CheckResult("theorem_bound", list(self.violations()), int(self.k.size),
                           f"k0={self.k0}")


def _trace_iterates(trace: RunTrace):
    if trace.x is None:
        raise InvalidParameter("certification needs the stored iterates of the run")
    return trace.x


def _rule_params(trace: RunTrace):
    cfg = trace.config
    return trace.header["rule"], float(cfg["eta"]), float(cfg["L1"])


def certify_trace(trace: RunTrace, x_ref, F_ref: float, schedule: TelescopicSchedule,
                  problem: CompositeProblem, rtol: float = BOUND_RTOL) -> CertifiedBound:
    """Check ``F(x_{k+1}) - F_ref <= tau_{k+1} B(x_ref, x_k0) / ((k+1-k0) mu_{k+1})``.

    The inequality is tested for every ``k >= k0`` covered by the trace, with
    absolute slack ``rtol (1 + |F_ref|)``.
    """
    xs = _trace_iterates(trace)
    x_ref = np.asarray(x_ref, dtype=float)
    tol = rtol * (1.0 + abs(F_ref))
    if not problem.feasible(x_ref):
        raise ReferenceInfeasible("reference point is outside the constraint set")
    if not np.isfinite(F_ref) or F_ref > np.min(trace.F) + tol:
        raise ReferenceInfeasible(
            f"F_ref={F_ref!r} is above the best traced value {np.min(trace.F)!r}")
    k0 = find_k0(schedule, x_ref, bool(np.isfinite(trace.F[0])))
    K = len(trace)
    rule, eta, L1 = _rule_params(trace)
    ks = np.arange(k0, K)  # bound on F(x_{k+1}) needs k+1 <= K
    if ks.size == 0:
        empty = np.zeros(0)
        return CertifiedBound(ks, empty, empty, np.zeros(0, dtype=bool), k0, x_ref, F_ref, tol)
    B0 = problem.geometry.divergence(x_ref, xs[k0 - 1])
    gap = trace.F[ks] - F_ref                      # F(x_{k+1}), 0-based index k
    tau = np.array([tau_at(problem, schedule, k + 1, rule, eta, L1) for k in ks])
    mu = np.array([schedule.mu_at(k + 1) for k in ks])
    bound = tau * B0 / ((ks + 1 - k0) * mu)
    return CertifiedBound(ks, gap, bound, gap <= bound + tol, k0, x_ref, F_ref, tol)


# ---------------------------------------------------------------------------
# Per-step checks on a trace
# ---------------------------------------------------------------------------

def check_acceptance_certificate(trace: RunTrace, problem: CompositeProblem,
                                 schedule: TelescopicSchedule, rtol: float = STEP_RTOL) -> CheckResult:
    """``F(x_k) <= Q_{L_k, mu_k, S_k}(x_k, x_{k-1})`` for every ``k >= 2``."""
    xs = _trace_iterates(trace)
    bad = []
    for j in range(1, len(trace)):
        k = j + 1
        sub = ProxSubproblem(problem, xs[j - 1], trace.L[j], trace.mu[j], schedule.set_at(k))
        F = trace.F[j]
        if not F <= surrogate_value(sub, xs[j]) + rtol * (1.0 + abs(F)):
            bad.append(k)
    return CheckResult("acceptance_certificate", bad, max(len(trace) - 1, 0))


def check_sufficient_decrease(trace: RunTrace, problem: CompositeProblem,
                              rtol: float = STEP_RTOL) -> CheckResult:
    """``F(x_{k-1}) - F(x_k) >= (L_k/mu_k) B(x_{k-1}, x_k)`` up to ``rtol (1 + |F(x_k)|)``."""
    xs = _trace_iterates(trace)
    geom = problem.geometry
    bad = []
    for j in range(1, len(trace)):
        F_prev, F = trace.F[j - 1], trace.F[j]
        if not np.isfinite(F_prev):
            continue  # an infinite start decreases by any amount
        rhs = trace.L[j] / trace.mu[j] * geom.divergence(xs[j - 1], xs[j])
        if not F_prev - F >= rhs - rtol * (1.0 + abs(F)):
            bad.append(j + 1)
    return CheckResult("sufficient_decrease", bad, max(len(trace) - 1, 0))


def bregman_monotonicity(trace: RunTrace, x_ref, k0: int, problem: CompositeProblem,
                         atol: float = MONOTONE_ATOL) -> CheckResult:
    """``B(x_ref, x_{k+1}) <= B(x_ref, x_k) + atol`` for all ``k >= k0``."""
    xs = _trace_iterates(trace)
    geom = problem.geometry
    x_ref = np.asarray(x_ref, dtype=float)
    bad = []
    prev = None
    for j in range(k0 - 1, len(trace)):
        cur = geom.divergence(x_ref, xs[j])
        if prev is not None and cur > prev + atol:
            bad.append(j + 1)
        prev = cur
    return CheckResult("bregman_monotonicity", bad, max(len(trace) - k0, 0))


def check_L_monotone(trace: RunTrace) -> CheckResult:
    bad = [int(trace.k[j]) for j in range(1, len(trace)) if trace.L[j] < trace.L[j - 1]]
    return CheckResult("L_nondecreasing", bad, max(len(trace) - 1, 0))


def check_feasibility(trace: RunTrace, problem: CompositeProblem,
                      schedule: TelescopicSchedule) -> CheckResult:
    """``x_k ∈ S_k ∩ U`` for every recorded ``k``."""
    xs = _trace_iterates(trace)
    geom = problem.geometry
    bad = [j + 1 for j in range(len(trace))
           if not (schedule.set_at(j + 1).contains(xs[j], FEASIBILITY_TOL) and geom.in_zone(xs[j]))]
    return CheckResult("feasibility", bad, len(trace))


def check_backtracking_bound(trace: RunTrace, problem: CompositeProblem,
                             schedule: TelescopicSchedule, eta: float) -> CheckResult:
    """``L_k <= eta * bound(k)`` for every recorded ``k``."""
    bad = []
    for j in range(len(trace)):
        k = j + 1
        limit = eta * lipschitz_bound_at(problem, schedule, k)
        if trace.L[j] > limit * (1.0 + 1e-12):
            bad.append(k)
    return CheckResult("backtracking_bound", bad, len(trace))


# ---------------------------------------------------------------------------
# Sampled inequalities
# ---------------------------------------------------------------------------

def _zone_samples(problem, s, rng, count):
    pts = s.sample(rng, problem.dimension, count, scale=2.0)
    keep = [x for x in pts if problem.geometry.in_zone(x) and s.contains(x, FEASIBILITY_TOL)]
    if not keep:
        raise PreconditionViolation(f"no samples of {s.describe()} in the zone of b")
    return np.asarray(keep)


def check_descent_lemma(problem: CompositeProblem, s, L: float, samples: int = 1000,
                        rng: Optional[np.random.Generator] = None,
                        rtol: float = STEP_RTOL) -> CheckResult:
    """``f(x) <= f(y) + <f'(y), x - y> + L/2 ||x - y||^2`` on sampled pairs of ``s ∩ U``."""
    rng = np.random.default_rng(0) if rng is None else rng
    xs = _zone_samples(problem, s, rng, samples)
    ys = _zone_samples(problem, s, rng, samples)
    m = min(len(xs), len(ys))
    norm = problem.geometry.norm
    bad = []
    for t in range(m):
        x, y = xs[t], ys[t]
        fx, fy = problem.f(x), problem.f(y)
        rhs = fy + problem.grad(y) @ (x - y) + 0.5 * L * norm(x - y) ** 2
        if not fx <= rhs + rtol * (1.0 + abs(fx) + abs(rhs)):
            bad.append(t)
    return CheckResult("descent_lemma", bad, m)


def check_fb_inequality(problem: CompositeProblem, s, L: float, mu: float, y, z,
                        samples: int = 1000, rng: Optional[np.random.Generator] = None,
                        rtol: float = STEP_RTOL, extra_points=()) -> CheckResult:
    """``F(x) - F(z) >= (L/mu) (B(x, z) - B(x, y))`` for sampled ``x ∈ s``.

    ``z`` must be the prox point of ``y``: its residual is required to be at
    most 1e-8 and ``F(z) <= Q(z, y)`` must hold, else PreconditionViolation.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    sub = ProxSubproblem(problem, y, L, mu, s)
    z = np.asarray(z, dtype=float)
    resid = optimality_residual(sub, z)
    if not resid <= FB_RESIDUAL_TOL:
        raise PreconditionViolation(f"z is not the prox point (residual {resid:.2e})")
    Fz = objective_value(problem, z)
    if not Fz <= surrogate_value(sub, z) + rtol * (1.0 + abs(Fz)):
        raise PreconditionViolation("F(z) exceeds the surrogate at z")
    geom = problem.geometry
    c = L / mu
    pts = list(s.sample(rng, problem.dimension, samples, scale=2.0)) + [np.asarray(p) for p in extra_points]
    bad, count = [], 0
    for t, x in enumerate(pts):
        if not (s.contains(x, FEASIBILITY_TOL) and geom.in_domain(x)):
            continue
        count += 1
        Fx = objective_value(problem, x)
        rhs = c * (geom.divergence(x, z) - geom.divergence(x, sub.y))
        if not Fx - Fz >= rhs - rtol * (1.0 + abs(Fx) + abs(Fz) + abs(rhs)):
            bad.append(t)
    return CheckResult("fb_inequality", bad, count)


# ---------------------------------------------------------------------------
# Rate diagnostic
# ---------------------------------------------------------------------------

def fit_empirical_rate(trace, F_ref: float, k_window) -> float:
    """Least-squares slope of ``log(F_k - F_ref)`` against ``log k`` over the window."""
    lo, hi = int(k_window[0]), int(k_window[1])
    ks = np.asarray(trace.k)
    sel = (ks >= lo) & (ks <= hi)
    gaps = np.asarray(trace.F, dtype=float)[sel] - F_ref
    if sel.sum() < 2:
        raise DegenerateWindow(f"window [{lo}, {hi}] holds fewer than two iterations")
    if not np.all(np.isfinite(gaps)) or np.any(gaps <= np.finfo(float).tiny):
        raise DegenerateWindow("gaps in the window are not positive")
    slope, _ = np.polyfit(np.log(ks[sel].astype(float)), np.log(gaps), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# Full report
# ---------------------------------------------------------------------------

def certification_report(trace: RunTrace, problem: CompositeProblem, schedule: TelescopicSchedule,
                         x_ref, F_ref: float) -> dict:
    """All trace-level checks, as a JSON-ready dict with an overall verdict."""
    cert = certify_trace(trace, x_ref, F_ref, schedule, problem)
    checks = [
        cert.as_check(),
        bregman_monotonicity(trace, x_ref, cert.k0, problem),
        check_sufficient_decrease(trace, problem),
        check_acceptance_certificate(trace, problem, schedule),
        check_L_monotone(trace),
        check_feasibility(trace, problem, schedule),
    ]
    return {
        "passed": all(c.passed for c in checks),
        "k0": cert.k0,
        "F_ref": F_ref,
        "checks": [c.summary() for c in checks],
        "theorem_bound": {
            "k": cert.k.tolist(),
            "gap": cert.gap.tolist(),
            "bound": cert.bound.tolist(),
        },
    }
