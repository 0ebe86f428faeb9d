"""Outer loops: fixed Lipschitz step rule and backtracking step rule."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    BacktrackOverflow,
    InvalidParameter,
    NoBoundAvailable,
    PreconditionViolation,
    ProxFailure,
)
from .problems import FEASIBILITY_TOL, CompositeProblem, objective_value
from .prox import ProxSubproblem, prox, surrogate_value
from .telescope import BACKTRACKING, LIPSCHITZ, TelescopicSchedule, lipschitz_bound_at

# slack allowed in F(x_k) <= Q(x_k, x_{k-1}) when accepting a backtracking step;
# keeps rounding in the two evaluations from triggering spurious increases of L
ACCEPT_RTOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    rule: str = LIPSCHITZ
    eta: float = 2.0
    L1: Optional[float] = None
    k_max: int = 1000
    inner_tol: float = 1e-8
    stop_gap: Optional[float] = None
    backtrack_cap: int = 64
    store_iterates: bool = True

    def __post_init__(self):
        if self.rule not in (LIPSCHITZ, BACKTRACKING):
            raise InvalidParameter(f"unknown step rule {self.rule!r}")
        if not self.eta > 1:
            raise InvalidParameter(f"eta must exceed 1, got {self.eta}")
        if self.L1 is not None and not self.L1 > 0:
            raise InvalidParameter(f"L1 must be positive, got {self.L1}")
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise InvalidParameter(f"k_max must be a positive integer, got {self.k_max}")
        if not self.inner_tol > 0:
            raise InvalidParameter("inner_tol must be positive")
        if self.stop_gap is not None and not self.stop_gap >= 0:
            raise InvalidParameter("stop_gap must be nonnegative")

    def describe(self) -> dict:
        return asdict(self)


@dataclass
class RunTrace:
    """Per-iteration record of a run; index ``j`` holds iteration ``k = j + 1``.

    ``x`` holds every iterate when ``store_iterates`` was set, otherwise only
    the first and last rows are kept (``x_first``, ``x_last``).
    """

    header: dict
    k: np.ndarray
    F: np.ndarray
    L: np.ndarray
    mu: np.ndarray
    i: np.ndarray
    step_norm: np.ndarray
    wall_time: np.ndarray
    x: Optional[np.ndarray] = None
    x_first: Optional[np.ndarray] = None
    x_last: Optional[np.ndarray] = None

    def __len__(self):
        return int(self.k.size)

    @property
    def config(self) -> dict:
        return self.header["config"]

    def iterate(self, k: int) -> np.ndarray:
        if self.x is None:
            raise InvalidParameter("iterates were not stored for this run")
        return self.x[k - 1]


@dataclass
class _Recorder:
    store: bool
    rows: dict = field(default_factory=lambda: {c: [] for c in
                                                ("k", "F", "L", "mu", "i", "step_norm", "wall_time")})
    xs: list = field(default_factory=list)
    first: Optional[np.ndarray] = None
    last: Optional[np.ndarray] = None

    def add(self, k, x, F, L, mu, i, step, wall):
        for key, val in zip(self.rows, (k, F, L, mu, i, step, wall)):
            self.rows[key].append(val)
        if self.first is None:
            self.first = x.copy()
        self.last = x
        if self.store:
            self.xs.append(x)

    def finish(self, header) -> RunTrace:
        r = self.rows
        return RunTrace(
            header=header,
            k=np.asarray(r["k"], dtype=np.int64),
            F=np.asarray(r["F"], dtype=float),
            L=np.asarray(r["L"], dtype=float),
            mu=np.asarray(r["mu"], dtype=float),
            i=np.asarray(r["i"], dtype=np.int64),
            step_norm=np.asarray(r["step_norm"], dtype=float),
            wall_time=np.asarray(r["wall_time"], dtype=float),
            x=np.asarray(self.xs) if self.store else None,
            x_first=self.first,
            x_last=None if self.last is None else self.last.copy(),
        )


def default_start(problem: CompositeProblem, schedule: TelescopicSchedule) -> np.ndarray:
    """A point of ``S_1 ∩ U``: the origin, the barycentre, the stored witness, or a sample."""
    n = problem.dimension
    s1 = schedule.set_at(1)
    geom = problem.geometry
    cands = [np.zeros(n), np.full(n, 1.0 / n), problem.witness]
    for c in cands:
        if c is not None and s1.contains(c) and geom.in_zone(c):
            return np.array(c, dtype=float)
    for c in s1.sample(np.random.default_rng(0), n, 256, scale=1.0):
        if geom.in_zone(c):
            return c
    raise PreconditionViolation("could not find a starting point in S_1 ∩ U")


def _header(problem, schedule, config, L1, rule):
    return {
        "rule": rule,
        "config": {**config.describe(), "L1": L1},
        "schedule": schedule.describe(),
        "geometry": problem.geometry.describe(),
        "seed": problem.meta.get("seed"),
        "dimension": problem.dimension,
    }


def _check_start(problem, schedule, x1):
    x1 = np.asarray(x1, dtype=float)
    if x1.shape != (problem.dimension,):
        raise PreconditionViolation(f"x1 has shape {x1.shape}, expected ({problem.dimension},)")
    if not schedule.set_at(1).contains(x1, FEASIBILITY_TOL):
        raise PreconditionViolation("x1 is not in S_1")
    if not problem.geometry.in_zone(x1):
        raise PreconditionViolation("x1 is not in the zone of b")
    return x1.copy()


def _check_iterate(problem, s, x, k):
    if not (s.contains(x, FEASIBILITY_TOL) and problem.geometry.in_zone(x)):
        raise ProxFailure(f"iterate {k} left S_k ∩ U")


def _step_norm(problem, x, y):
    return problem.geometry.norm(x - y)


def _stop(config, F_prev, F_new):
    return config.stop_gap is not None and np.isfinite(F_prev) and F_prev - F_new < config.stop_gap


def run_lipschitz(problem: CompositeProblem, schedule: TelescopicSchedule,
                  config: SolverConfig, x1=None) -> RunTrace:
    """``L_k = max(L_{k-1}, bound(k))`` and ``x_k = p_{L_k, mu_k, S_k}(x_{k-1})``."""
    bound1 = lipschitz_bound_at(problem, schedule, 1)
    L = bound1 if config.L1 is None else float(config.L1)
    if L < bound1:
        raise PreconditionViolation(f"L1={L} is below the Lipschitz bound {bound1} on S_1")
    x = _check_start(problem, schedule, default_start(problem, schedule) if x1 is None else x1)
    rec = _Recorder(config.store_iterates)
    F = objective_value(problem, x)
    rec.add(1, x, F, L, schedule.mu_at(1), 0, 0.0, 0.0)
    for k in range(2, config.k_max + 1):
        t0 = time.perf_counter()
        L = max(L, lipschitz_bound_at(problem, schedule, k))
        mu = schedule.mu_at(k)
        s = schedule.set_at(k)
        x_new = prox(ProxSubproblem(problem, x, L, mu, s), config.inner_tol)
        _check_iterate(problem, s, x_new, k)
        F_new = objective_value(problem, x_new)
        rec.add(k, x_new, F_new, L, mu, 0, _step_norm(problem, x_new, x),
                time.perf_counter() - t0)
        stop = _stop(config, F, F_new)
        x, F = x_new, F_new
        if stop:
            break
    return rec.finish(_header(problem, schedule, config, rec.rows["L"][0], LIPSCHITZ))


def run_backtracking(problem: CompositeProblem, schedule: TelescopicSchedule,
                     config: SolverConfig, x1=None) -> RunTrace:
    """Smallest ``i_k`` with ``F(p) <= Q(p, x_{k-1})`` at ``L_k = eta^i_k L_{k-1}``."""
    eta = config.eta
    try:
        bound1 = lipschitz_bound_at(problem, schedule, 1)
    except NoBoundAvailable:
        if config.L1 is None:
            raise
        bound1 = None
    L = bound1 if config.L1 is None else float(config.L1)
    if schedule.growing and bound1 is not None and L > eta * bound1 * (1 + 1e-12):
        raise PreconditionViolation(
            f"L1={L} exceeds eta * bound(1) = {eta * bound1} for a growing schedule")
    x = _check_start(problem, schedule, default_start(problem, schedule) if x1 is None else x1)
    rec = _Recorder(config.store_iterates)
    F = objective_value(problem, x)
    rec.add(1, x, F, L, schedule.mu_at(1), 0, 0.0, 0.0)
    for k in range(2, config.k_max + 1):
        t0 = time.perf_counter()
        mu = schedule.mu_at(k)
        s = schedule.set_at(k)
        grad_y, f_y = problem.grad(x), problem.f(x)
        for i in range(config.backtrack_cap + 1):
            trial = L * eta ** i
            sub = ProxSubproblem(problem, x, trial, mu, s, grad_y=grad_y, f_y=f_y)
            z = prox(sub, config.inner_tol)
            _check_iterate(problem, s, z, k)
            Fz = objective_value(problem, z)
            if Fz <= surrogate_value(sub, z) + ACCEPT_RTOL * (1.0 + abs(Fz)):
                break
        else:
            raise BacktrackOverflow(f"no acceptable step within {config.backtrack_cap} "
                                    f"increases at iteration {k}")
        L = trial
        rec.add(k, z, Fz, L, mu, i, _step_norm(problem, z, x), time.perf_counter() - t0)
        stop = _stop(config, F, Fz)
        x, F = z, Fz
        if stop:
            break
    return rec.finish(_header(problem, schedule, config, rec.rows["L"][0], BACKTRACKING))


def run(problem, schedule, config, x1=None) -> RunTrace:
    if config.rule == LIPSCHITZ:
        return run_lipschitz(problem, schedule, config, x1)
    return run_backtracking(problem, schedule, config, x1)
