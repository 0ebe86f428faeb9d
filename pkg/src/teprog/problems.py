"""Smooth terms, nonsmooth terms and composite problems ``F = f + g`` on ``C``."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.optimize import linprog, nnls

from .errors import DomainError, InvalidParameter, NoBoundAvailable, NumericalOverflow
from .geometry import (
    ENTROPY,
    BregmanGeometry,
    SetDescriptor,
    WholeSpace,
    dual_order,
    half_squared_euclidean,
    lp_norm,
)

FEASIBILITY_TOL = 1e-10
ACTIVE_TOL = 1e-12


def signed_power(r: np.ndarray, e: float) -> np.ndarray:
    """``|r|^(e-1) r`` written as ``sign(r) |r|^e`` so that ``r = 0`` gives 0."""
    return np.sign(r) * np.abs(r) ** e


def spectral_norm_bound(A: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000,
                        seed: int = 0) -> float:
    """Largest singular value of ``A`` by power iteration on ``A^T A``.

    Returned with a ``1e-6`` relative margin so it is an upper bound once the
    iteration has converged to ``tol``.
    """
    A = np.asarray(A, dtype=float)
    if not np.any(A):
        return 0.0
    v = np.random.default_rng(seed).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        new = np.linalg.norm(w)
        if new == 0.0:
            break
        v = w / new
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return float(np.sqrt(est)) * (1.0 + 1e-6)


def operator_norm_bound(A: np.ndarray, r: float, p: float) -> float:
    """Upper bound on ``sup{||Ax||_p : ||x||_r = 1}`` for ``p >= 2``, ``r >= 2``.

    ``||Ax||_p <= ||Ax||_2 <= s_max ||x||_2 <= s_max n^(1/2 - 1/r) ||x||_r``.
    """
    n = A.shape[1]
    inv_r = 0.0 if np.isinf(r) else 1.0 / r
    return spectral_norm_bound(A) * n ** max(0.0, 0.5 - inv_r)


# ---------------------------------------------------------------------------
# Smooth terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LpResidual:
    """``f(x) = (1/p) ||Ax - c||_p^p`` with ``p >= 2``."""

    A: np.ndarray
    c: np.ndarray
    p: float

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        c = np.array(self.c, dtype=float).ravel()
        if A.shape[0] != c.size:
            raise InvalidParameter(f"A has {A.shape[0]} rows but c has {c.size} entries")
        if not self.p >= 2:
            raise InvalidParameter(f"p must be >= 2, got {self.p}")
        A.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "p", float(self.p))

    kind = "lp_residual"

    @property
    def dimension(self):
        return self.A.shape[1]

    def value(self, x):
        r = self.A @ x - self.c
        return float(np.sum(np.abs(r) ** self.p) / self.p)

    def gradient(self, x):
        r = self.A @ x - self.c
        return self.A.T @ signed_power(r, self.p - 1.0)

    @cached_property
    def _opnorm_cache(self):
        return {}

    def operator_norm(self, r: float) -> float:
        cache = self._opnorm_cache
        if r not in cache:
            cache[r] = operator_norm_bound(self.A, r, self.p)
        return cache[r]

    def lipschitz_bound(self, s: SetDescriptor, geometry: BregmanGeometry) -> float:
        """``(p-1) 2^(p-2) ||A||^2 (||A|| M_S + ||c||_p)^(p-2)``.

        ``M_S`` bounds ``||x||_r`` on ``s``; for a box ``[-rho, rho]^n`` it is
        ``n^(1/r) rho``.  The factor ``||A||^2`` comes from ``f' = A^T h'(Ax - c)``.
        """
        r = geometry.norm_order
        a = self.operator_norm(r)
        p = self.p
        if p == 2.0:
            return a * a
        m = s.norm_bound(self.dimension, r)
        if not np.isfinite(m):
            raise NoBoundAvailable(f"f' is not Lipschitz on the unbounded set {s.describe()} for p={p}")
        cp = lp_norm(self.c, p)
        return (p - 1.0) * 2.0 ** (p - 2.0) * a * a * (a * m + cp) ** (p - 2.0)

    def describe(self):
        return {"kind": self.kind, "p": self.p, "A": self.A.tolist(), "c": self.c.tolist()}


@dataclass(frozen=True)
class SimplexPower:
    """``f(w) = (4/15) sum over pairs (w_i + w_j)^(5/2)`` on ``R^3_+``."""

    kind = "simplex_power"
    dimension = 3

    def _pairs(self, w):
        w = np.asarray(w, dtype=float)
        s = np.array([w[0] + w[1], w[1] + w[2], w[2] + w[0]])
        if np.any(s < 0):
            raise DomainError("simplex power term needs nonnegative pair sums")
        return s

    def value(self, w):
        return float(4.0 / 15.0 * np.sum(self._pairs(w) ** 2.5))

    def gradient(self, w):
        t = (2.0 / 3.0) * self._pairs(w) ** 1.5   # t = (d/ds)(4/15) s^(5/2)
        return np.array([t[0] + t[2], t[0] + t[1], t[1] + t[2]])

    def lipschitz_bound(self, s: SetDescriptor, geometry: BregmanGeometry) -> float:
        """``4 sqrt(2) ||(1,1,1)||_q sqrt(M)`` with ``M`` the radius of a
        zero-centred ball (in the geometry's norm) containing ``s``."""
        m = s.norm_bound(3, geometry.norm_order)
        if not np.isfinite(m):
            raise NoBoundAvailable(f"no Lipschitz bound on the unbounded set {s.describe()}")
        q = dual_order(geometry.norm_order)
        return 4.0 * np.sqrt(2.0) * lp_norm(np.ones(3), q) * np.sqrt(m)

    def describe(self):
        return {"kind": self.kind}


def smooth_value(term, x) -> float:
    return term.value(np.asarray(x, dtype=float))


def smooth_gradient(term, x) -> np.ndarray:
    return term.gradient(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# Subdifferentials
# ---------------------------------------------------------------------------

@dataclass
class Subdifferential:
    """Convex set ``conv(hull) + cone(cone) + span(span) + [lo, hi]``.

    ``lo``/``hi`` are per-coordinate intervals (possibly infinite).  Only the
    pieces that are present are used; an empty description is ``{0}``.
    """

    n: int
    hull: Optional[np.ndarray] = None
    cone: list = field(default_factory=list)
    span: list = field(default_factory=list)
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.lo is None:
            self.lo = np.zeros(self.n)
        if self.hi is None:
            self.hi = np.zeros(self.n)

    def __add__(self, other: "Subdifferential") -> "Subdifferential":
        if self.hull is not None and other.hull is not None:
            raise NotImplementedError("sum of two convex hulls")
        return Subdifferential(
            self.n,
            self.hull if self.hull is not None else other.hull,
            self.cone + other.cone,
            self.span + other.span,
            self.lo + other.lo,
            self.hi + other.hi,
        )

    def _separable(self):
        return self.hull is None and not self.cone and not self.span

    def distance(self, v, order: float) -> float:
        """Distance from ``v`` to the set in ``||.||_order``.

        Exact for the separable case.  Otherwise a feasible member is found
        (LP for orders 1 and inf, NNLS for 2) and the distance to it is
        returned, which can only overestimate the true distance.
        """
        v = np.asarray(v, dtype=float)
        if self._separable():
            d = np.maximum(self.lo - v, 0.0) + np.maximum(v - self.hi, 0.0)
            return lp_norm(d, order)
        if order == 1 or np.isinf(order):
            member = self._closest_lp(v, order)
        elif order >= 2 and np.all(self.lo == self.hi):
            member = self._closest_l2(v)
        else:
            # any member gives an upper bound; the l1-closest one is cheap to find
            member = self._closest_lp(v, 1)
        return lp_norm(v - member, order)

    def _blocks(self):
        hull = np.zeros((0, self.n)) if self.hull is None else np.atleast_2d(self.hull)
        cone = np.array(self.cone, dtype=float).reshape(-1, self.n)
        span = np.array(self.span, dtype=float).reshape(-1, self.n)
        return hull, cone, span

    def _assemble(self, theta, nu, eta, s):
        hull, cone, span = self._blocks()
        out = s.copy()
        if hull.shape[0]:
            theta = np.clip(theta, 0.0, None)
            theta = theta / theta.sum() if theta.sum() > 0 else np.full(len(theta), 1.0 / len(theta))
            out += hull.T @ theta
        if cone.shape[0]:
            out += cone.T @ np.clip(nu, 0.0, None)
        if span.shape[0]:
            out += span.T @ eta
        return out

    def _closest_lp(self, v, order):
        hull, cone, span = self._blocks()
        n = self.n
        k, c, e = hull.shape[0], cone.shape[0], span.shape[0]
        nt = 1 if np.isinf(order) else n
        nvar = k + c + e + n + nt
        # columns: theta | nu | eta | s | t
        M = np.hstack([hull.T, cone.T, span.T, np.eye(n)])
        Tcol = np.ones((n, 1)) if np.isinf(order) else np.eye(n)
        A_ub = np.vstack([np.hstack([M, -Tcol]), np.hstack([-M, -Tcol])])
        b_ub = np.concatenate([v, -v])
        A_eq = b_eq = None
        if k:
            A_eq = np.zeros((1, nvar))
            A_eq[0, :k] = 1.0
            b_eq = [1.0]
        cost = np.zeros(nvar)
        cost[-nt:] = 1.0
        lo = np.where(np.isfinite(self.lo), self.lo, None)
        hi = np.where(np.isfinite(self.hi), self.hi, None)
        bounds = ([(0, None)] * k + [(0, None)] * c + [(None, None)] * e
                  + list(zip(lo, hi)) + [(0, None)] * nt)
        res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                      method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                               "dual_feasibility_tolerance": 1e-10})
        if res.x is None:
            raise RuntimeError(f"subdifferential distance LP failed: {res.message}")
        z = res.x
        s = np.clip(z[k + c + e:k + c + e + n], self.lo, self.hi)
        return self._assemble(z[:k], z[k:k + c], z[k + c:k + c + e], s)

    def _closest_l2(self, v):
        hull, cone, span = self._blocks()
        base = self.lo.copy()
        target = v - base
        # eliminate the linear span by projecting onto its orthogonal complement
        if span.shape[0]:
            Q, _ = np.linalg.qr(span.T)
            P = np.eye(self.n) - Q @ Q.T
        else:
            P = np.eye(self.n)
        k = hull.shape[0]
        cols = np.hstack([hull.T, cone.T]) if (k or cone.shape[0]) else np.zeros((self.n, 0))
        if cols.shape[1] == 0:
            w = np.zeros(0)
        else:
            Amat = P @ cols
            rhs = P @ target
            if k:
                weight = 1e4 * (1.0 + np.abs(Amat).max() + np.abs(rhs).max())
                row = np.concatenate([np.full(k, weight), np.zeros(cone.shape[0])])
                Amat = np.vstack([Amat, row])
                rhs = np.concatenate([rhs, [weight]])
            w, _ = nnls(Amat, rhs, maxiter=50 * Amat.shape[1] + 100)
        theta, nu = w[:k], w[k:]
        member = self._assemble(theta, nu, np.zeros(span.shape[0]), base)
        if span.shape[0]:
            eta, *_ = np.linalg.lstsq(span.T, v - member, rcond=None)
            member = member + span.T @ eta
        return member

    def contains(self, v, tol: float = 1e-9, order: float = np.inf) -> bool:
        return self.distance(v, order) <= tol


# ---------------------------------------------------------------------------
# Nonsmooth terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaledL1:
    """``g(x) = lam ||x||_1``."""

    lam: float
    kind = "scaled_l1"

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidParameter(f"lambda must be positive, got {self.lam}")

    def value(self, x):
        return self.lam * float(np.sum(np.abs(x)))

    def subdifferential(self, x) -> Subdifferential:
        x = np.asarray(x, dtype=float)
        sgn = np.sign(x)
        lo = np.where(x == 0, -self.lam, self.lam * sgn)
        hi = np.where(x == 0, self.lam, self.lam * sgn)
        return Subdifferential(x.size, lo=lo, hi=hi)

    def describe(self):
        return {"kind": self.kind, "lam": self.lam}


@dataclass(frozen=True, eq=False)
class MaxLinear:
    """``g(w) = max_i <a_i, w>``.

    Rows must satisfy ``sum_j a_ij <= 1`` and ``max_i min_j a_ij >= 0.27``;
    these keep every minimizer of the simplex benchmarks off the boundary.
    """

    rows: np.ndarray
    kind = "max_linear"

    def __post_init__(self):
        a = np.array(self.rows, dtype=float, ndmin=2)
        if a.shape[0] == 0:
            raise InvalidParameter("max-linear term needs at least one row")
        if np.any(a.sum(axis=1) > 1.0 + 1e-12):
            raise InvalidParameter("each row of a max-linear term must sum to at most 1")
        if a.min(axis=1).max() < 0.27:
            raise InvalidParameter("max_i min_j a_ij must be at least 0.27")
        a.setflags(write=False)
        object.__setattr__(self, "rows", a)

    def value(self, w):
        return float(np.max(self.rows @ np.asarray(w, dtype=float)))

    def active_rows(self, w, tol: float = ACTIVE_TOL) -> np.ndarray:
        vals = self.rows @ np.asarray(w, dtype=float)
        top = vals.max()
        return np.flatnonzero(vals >= top - tol * (1.0 + abs(top)))

    def subdifferential(self, w, tol: float = ACTIVE_TOL) -> Subdifferential:
        return Subdifferential(self.rows.shape[1], hull=self.rows[self.active_rows(w, tol)])

    def describe(self):
        return {"kind": self.kind, "rows": self.rows.tolist()}


def nonsmooth_value(term, x) -> float:
    return 0.0 if term is None else term.value(np.asarray(x, dtype=float))


def nonsmooth_subgradient(term, x, constraint: Optional[SetDescriptor] = None,
                          tol: float = ACTIVE_TOL) -> Subdifferential:
    """Subdifferential of ``g`` (plus the normal cone of ``constraint``) at ``x``."""
    x = np.asarray(x, dtype=float)
    if constraint is not None and not constraint.contains(x, FEASIBILITY_TOL):
        raise DomainError("subgradients are only defined on the constraint set")
    if term is None:
        sub = Subdifferential(x.size)
    elif isinstance(term, MaxLinear):
        sub = term.subdifferential(x, tol)
    else:
        sub = term.subdifferential(x)
    if constraint is not None:
        from .prox import normal_cone  # local import: prox depends on this module
        sub = sub + normal_cone(constraint, x)
    return sub


# ---------------------------------------------------------------------------
# Composite problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CompositeProblem:
    smooth: object
    nonsmooth: object
    constraint: SetDescriptor
    geometry: BregmanGeometry
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.geometry.dimension
        if self.smooth.dimension != n:
            raise InvalidParameter(f"smooth term has dimension {self.smooth.dimension}, geometry {n}")
        if self.geometry.kind == ENTROPY:
            rng = np.random.default_rng(0)
            pts = self.constraint.sample(rng, n, 64, scale=5.0)
            if np.any(pts < -FEASIBILITY_TOL):
                raise InvalidParameter("constraint set is not contained in dom(b)")
        if self.witness is None:
            raise InvalidParameter("constraint set has no point in the zone U")

    @cached_property
    def witness(self) -> Optional[np.ndarray]:
        """A point of ``C`` in the zone ``U``."""
        n = self.geometry.dimension
        for cand in (np.zeros(n), np.full(n, 1.0 / n)):
            if self.constraint.contains(cand) and self.geometry.in_zone(cand):
                return cand
        pts = self.constraint.sample(np.random.default_rng(0), n, 256, scale=5.0)
        for cand in pts:
            if self.geometry.in_zone(cand):
                return cand
        return None

    @property
    def dimension(self):
        return self.geometry.dimension

    def f(self, x):
        return self.smooth.value(x)

    def grad(self, x):
        return self.smooth.gradient(x)

    def g(self, x):
        return nonsmooth_value(self.nonsmooth, x)

    def F(self, x):
        return objective_value(self, x)

    def feasible(self, x, tol: float = FEASIBILITY_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if self.geometry.kind == ENTROPY and np.any(x < -tol):
            return False
        return self.constraint.contains(x, tol)

    def describe(self):
        return {
            "geometry": self.geometry.describe(),
            "smooth": self.smooth.describe(),
            "nonsmooth": None if self.nonsmooth is None else self.nonsmooth.describe(),
            "constraint": self.constraint.describe(),
        }


def objective_value(problem: CompositeProblem, x) -> float:
    """``f(x) + g(x)`` on ``C``, ``+inf`` off ``C``.

    Raises NumericalOverflow when a feasible point yields a non-finite value.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dimension,) or not np.all(np.isfinite(x)):
        return np.inf
    if not problem.constraint.contains(x, FEASIBILITY_TOL):
        return np.inf
    if problem.geometry.kind == ENTROPY:
        if np.any(x < -FEASIBILITY_TOL):
            return np.inf
        x = np.maximum(x, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        val = problem.f(x) + problem.g(x)
    if not np.isfinite(val):
        raise NumericalOverflow(f"objective overflowed at a feasible point (value {val})")
    return float(val)


def generate_instance(seed: int, n: int, m: int, p: float, lam: float, density: float,
                      noise_scale: float = 0.01, r: float = 2.0) -> CompositeProblem:
    """Seeded random ``l_p - l_1`` instance on ``R^n``.

    ``A`` has i.i.d. ``N(0, 1/m)`` entries, ``x_true`` has ``round(density n)``
    standard-normal nonzeros, and ``c = A x_true + e`` with
    ``||e||_2 = noise_scale ||A x_true||_2``.
    """
    if n < 1 or m < 1:
        raise InvalidParameter("n and m must be positive")
    if not p >= 2:
        raise InvalidParameter("p must be >= 2")
    if not lam > 0:
        raise InvalidParameter("lambda must be positive")
    if not 0.0 <= density <= 1.0:
        raise InvalidParameter("density must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n)) / np.sqrt(m)
    x_true = np.zeros(n)
    nnz = int(round(density * n))
    support = rng.choice(n, size=nnz, replace=False)
    x_true[support] = rng.standard_normal(nnz)
    clean = A @ x_true
    noise_level = noise_scale * float(np.linalg.norm(clean))
    e = rng.standard_normal(m)
    noise = noise_level * e / np.linalg.norm(e)
    meta = {
        "seed": int(seed), "rng": "numpy.random.default_rng(PCG64)",
        "n": n, "m": m, "density": density, "noise_scale": noise_scale,
        "noise_level": noise_level, "x_true": x_true.tolist(),
    }
    return CompositeProblem(
        smooth=LpResidual(A, clean + noise, p),
        nonsmooth=ScaledL1(lam),
        constraint=WholeSpace(),
        geometry=half_squared_euclidean(n, r),
        meta=meta,
    )
