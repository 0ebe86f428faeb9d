"""Bregman proximal maps ``p_{L,mu,S}(y)`` and their optimality certificate.

The map minimizes the surrogate

    Q(x, y) = f(y) + <f'(y), x - y> + (L/mu) B(x, y) + g(x)

over ``S``.  Two solvers are provided: an exact coordinate-wise formula for a
quadratic ``b`` with ``g = lam ||.||_1`` on a centred box (or all of R^n), and a
dual solver for everything else whose output is accepted only after the
first-order residual has been checked.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, root
from scipy.special import wrightomega

from .errors import DomainError, InvalidParameter, MaxInnerIterations, ProxFailure
from .geometry import (
    ENTROPY,
    EUCLIDEAN,
    Ball,
    Box,
    Intersection,
    Prism,
    SetDescriptor,
    Simplex,
    WholeSpace,
    dual_order,
)
from .problems import (
    ACTIVE_TOL,
    FEASIBILITY_TOL,
    CompositeProblem,
    MaxLinear,
    ScaledL1,
    Subdifferential,
    nonsmooth_subgradient,
    nonsmooth_value,
)


def _is_active(gap, scale, tol):
    return gap >= -tol * (1.0 + abs(scale))


def normal_cone(s: SetDescriptor, x, tol: float = ACTIVE_TOL) -> Subdifferential:
    """Normal cone of ``s`` at ``x``, built from the constraints active at ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if isinstance(s, WholeSpace):
        return Subdifferential(n)
    if isinstance(s, Box):
        lo, hi = np.zeros(n), np.zeros(n)
        hi[_is_active(x - s.radius, s.radius, tol)] = np.inf
        lo[_is_active(-x - s.radius, s.radius, tol)] = -np.inf
        return Subdifferential(n, lo=lo, hi=hi)
    if isinstance(s, Simplex):
        cone = [-np.eye(n)[j] for j in np.flatnonzero(x <= tol)]
        return Subdifferential(n, cone=cone, span=[np.ones(n)])
    if isinstance(s, Prism):
        G, h = s.halfspaces(n)
        rows = [G[i] for i in range(len(h)) if _is_active(G[i] @ x - h[i], h[i], tol)]
        return Subdifferential(n, cone=rows)
    if isinstance(s, Ball):
        d = x - s._center(n)
        if not _is_active(np.linalg.norm(d, ord=s.order) - s.radius, s.radius, tol):
            return Subdifferential(n)
        return Subdifferential(n, cone=_norm_subgradients(d, s.order))
    if isinstance(s, Intersection):
        out = Subdifferential(n)
        for part in s.parts:
            out = out + normal_cone(part, x, tol)
        return out
    raise NotImplementedError(f"normal cone of {s.describe()}")


def _norm_subgradients(d, order):
    """Generators of the cone spanned by the subdifferential of ``||.||_order`` at ``d``."""
    if order == 2:
        return [d]
    if order == 1:
        zeros = np.flatnonzero(d == 0)
        if zeros.size > 10:
            raise NotImplementedError("l1-ball normal cone with many zero coordinates")
        base = np.sign(d)
        out = []
        for signs in itertools.product((-1.0, 1.0), repeat=zeros.size):
            v = base.copy()
            v[zeros] = signs
            out.append(v)
        return out
    if np.isinf(order):
        top = np.abs(d).max()
        return [np.sign(d[j]) * np.eye(d.size)[j] for j in np.flatnonzero(np.abs(d) == top)]
    q = order - 1.0
    return [np.sign(d) * np.abs(d) ** q]


# ---------------------------------------------------------------------------
# Subproblem and surrogate
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ProxSubproblem:
    """Data of one prox step: centre ``y``, constants ``L`` and ``mu``, set ``S``."""

    problem: CompositeProblem
    y: np.ndarray
    L: float
    mu: float
    set: SetDescriptor
    grad_y: np.ndarray = field(default=None, repr=False)
    f_y: float = field(default=None, repr=False)

    def __post_init__(self):
        if not self.L > 0 or not self.mu > 0:
            raise InvalidParameter(f"L and mu must be positive (L={self.L}, mu={self.mu})")
        self.y = np.asarray(self.y, dtype=float)
        if not self.problem.geometry.in_zone(self.y):
            raise DomainError("prox centre must lie in the zone of b")
        if not self.set.contains(self.y, FEASIBILITY_TOL):
            raise DomainError("prox centre must lie in the set")
        if self.grad_y is None:
            self.grad_y = self.problem.grad(self.y)
        if self.f_y is None:
            self.f_y = self.problem.f(self.y)

    @property
    def c(self) -> float:
        return self.L / self.mu


def surrogate_value(sub: ProxSubproblem, x) -> float:
    x = np.asarray(x, dtype=float)
    if not sub.set.contains(x, FEASIBILITY_TOL) or not sub.problem.geometry.in_domain(x):
        raise DomainError("surrogate is evaluated on the prox set only")
    geom = sub.problem.geometry
    if geom.kind == ENTROPY:
        x = np.maximum(x, 0.0)
    return float(sub.f_y + sub.grad_y @ (x - sub.y) + sub.c * geom.divergence(x, sub.y)
                 + nonsmooth_value(sub.problem.nonsmooth, x))


def optimality_residual(sub: ProxSubproblem, z, active_tol: float = ACTIVE_TOL) -> float:
    """Dual-norm distance from ``c (b'(y) - b'(z)) - f'(y)`` to ``dg(z) + N_S(z)``."""
    z = np.asarray(z, dtype=float)
    geom = sub.problem.geometry
    if not sub.set.contains(z, FEASIBILITY_TOL):
        raise DomainError("residual is defined on the prox set only")
    v = sub.c * (geom.gradient(sub.y) - geom.gradient(z)) - sub.grad_y
    target = nonsmooth_subgradient(sub.problem.nonsmooth, z, tol=active_tol)
    target = target + normal_cone(sub.set, z, active_tol)
    return target.distance(v, dual_order(geom.norm_order))


# ---------------------------------------------------------------------------
# Closed form: quadratic b, l1 term, centred box
# ---------------------------------------------------------------------------

# candidate order used to break numerical ties: the interior stationary points
# first (when they qualify they are the exact minimizer), then 0, -rho, rho
_TIE_ORDER = (3, 4, 2, 0, 1)


def box_l1_prox(phi, x_prev, c: float, lam: float, rho: float = np.inf) -> np.ndarray:
    """Coordinate-wise minimizer of ``phi t + c/2 (t - x_prev)^2 + lam |t|`` on ``[-rho, rho]``.

    Five candidates are scored per coordinate: ``-rho``, ``rho``, ``0``, the
    stationary point of the positive branch if it lies in ``(0, rho)`` and that
    of the negative branch if it lies in ``(-rho, 0)``.  ``rho = inf`` gives
    plain soft-thresholding.
    """
    phi = np.asarray(phi, dtype=float)
    x_prev = np.asarray(x_prev, dtype=float)
    if not c > 0:
        raise InvalidParameter(f"c must be positive, got {c}")
    if not lam >= 0:
        raise InvalidParameter(f"lambda must be nonnegative, got {lam}")
    if not rho > 0:
        raise InvalidParameter(f"rho must be positive, got {rho}")
    if phi.shape != x_prev.shape:
        raise InvalidParameter("phi and x_prev must have the same shape")

    t_pos = (-phi - lam) / c + x_prev
    t_neg = (-phi + lam) / c + x_prev
    zero = np.zeros_like(phi)
    cands = np.stack([np.full_like(phi, -rho), np.full_like(phi, rho), zero, t_pos, t_neg])
    valid = np.stack([
        np.full(phi.shape, np.isfinite(rho)),
        np.full(phi.shape, np.isfinite(rho)),
        np.ones(phi.shape, dtype=bool),
        (t_pos > 0) & (t_pos < rho),
        (t_neg < 0) & (t_neg > -rho),
    ])
    with np.errstate(invalid="ignore"):
        H = phi * cands + 0.5 * c * (cands - x_prev) ** 2 + lam * np.abs(cands)
    H = np.where(valid, H, np.inf)
    best = H.min(axis=0)
    near = H <= best + 1e-14
    out = np.empty_like(phi)
    chosen = np.zeros(phi.shape, dtype=bool)
    for idx in _TIE_ORDER:
        take = near[idx] & ~chosen
        out[take] = cands[idx][take]
        chosen |= take
    return out


def _closed_form_radius(s: SetDescriptor):
    """Radius if ``s`` is a centred box or all of R^n, else None."""
    if isinstance(s, WholeSpace):
        return np.inf
    if isinstance(s, Box):
        return s.radius
    return None


def closed_form_applies(problem: CompositeProblem, s: SetDescriptor) -> bool:
    return (problem.geometry.kind == EUCLIDEAN
            and (problem.nonsmooth is None or isinstance(problem.nonsmooth, ScaledL1))
            and _closed_form_radius(s) is not None)


# ---------------------------------------------------------------------------
# Dual solver
# ---------------------------------------------------------------------------

def _constraints(s: SetDescriptor, n: int, entropy: bool):
    """Describe ``s`` as ``G x <= h``, ``E x = e`` and a list of l2 balls.

    Under the entropy geometry the orthant is implicit, so nonnegativity rows
    are dropped and a zero-centred l1 ball becomes ``sum x <= r``.
    """
    G, h, E, e, balls = [], [], [], [], []
    eye = np.eye(n)
    if isinstance(s, WholeSpace):
        pass
    elif isinstance(s, Box):
        G.extend(eye)
        h.extend([s.radius] * n)
        if not entropy:
            G.extend(-eye)
            h.extend([s.radius] * n)
    elif isinstance(s, Simplex):
        E.append(np.ones(n))
        e.append(1.0)
        if not entropy:
            G.extend(-eye)
            h.extend([0.0] * n)
    elif isinstance(s, Prism):
        Gp, hp = s.halfspaces(n)
        G.extend(Gp)
        h.extend(hp)
    elif isinstance(s, Ball):
        ctr = s._center(n)
        if s.order == 2:
            balls.append((ctr, s.radius))
        elif np.isinf(s.order):
            G.extend(eye)
            h.extend(s.radius + ctr)
            G.extend(-eye)
            h.extend(s.radius - ctr)
        elif s.order == 1 and entropy and not np.any(ctr):
            G.append(np.ones(n))
            h.append(s.radius)
        elif s.order == 1 and n <= 12:
            for signs in itertools.product((-1.0, 1.0), repeat=n):
                row = np.array(signs)
                G.append(row)
                h.append(s.radius + row @ ctr)
        else:
            raise ProxFailure(f"no prox solver for the ball {s.describe()}")
    elif isinstance(s, Intersection):
        for part in s.parts:
            g2, h2, e2, ee2, b2 = _constraints(part, n, entropy)
            G.extend(g2)
            h.extend(h2)
            E.extend(e2)
            e.extend(ee2)
            balls.extend(b2)
        return G, h, E, e, balls
    else:
        raise ProxFailure(f"no prox solver for the set {s.describe()}")
    return G, h, E, e, balls


class _DualProblem:
    """Lagrangian dual of the prox subproblem in epigraph form.

    Multipliers are ``theta`` (on the rows of a max-linear ``g``, summing to
    one), ``nu`` (inequalities), ``kappa`` (equalities) and ``omega`` (balls).
    For fixed multipliers the primal minimizer has a closed form.
    """

    def __init__(self, sub: ProxSubproblem):
        prob = sub.problem
        n = prob.dimension
        self.entropy = prob.geometry.kind == ENTROPY
        self.c = sub.c
        self.y = sub.y
        v = sub.grad_y.copy()
        g = prob.nonsmooth
        self.rows = np.zeros((0, n))
        if isinstance(g, MaxLinear):
            self.rows = g.rows
        elif isinstance(g, ScaledL1):
            if not (self.entropy or _nonnegative_set(sub.set)):
                raise ProxFailure("l1 term with this set needs the closed-form prox")
            v = v + g.lam  # |x| = x on the nonnegative orthant
        elif g is not None:
            raise ProxFailure(f"no prox solver for nonsmooth term {g!r}")
        self.v = v
        G, h, E, e, balls = _constraints(sub.set, n, self.entropy)
        self.G = np.array(G, dtype=float).reshape(-1, n)
        self.h = np.array(h, dtype=float)
        self.E = np.array(E, dtype=float).reshape(-1, n)
        self.e = np.array(e, dtype=float)
        self.ball_ctr = np.array([b[0] for b in balls], dtype=float).reshape(-1, n)
        self.ball_rad = np.array([b[1] for b in balls], dtype=float)
        self.sizes = (self.rows.shape[0], self.G.shape[0], self.E.shape[0], len(balls))
        if self.entropy:
            self.log_y = np.log(self.y)

    def split(self, z):
        k, p, q, b = self.sizes
        return z[:k], z[k:k + p], z[k + p:k + p + q], z[k + p + q:]

    def primal(self, z):
        theta, nu, kappa, omega = self.split(z)
        w = self.v + self.rows.T @ theta + self.G.T @ nu + self.E.T @ kappa
        om = float(np.sum(omega))
        shift = self.ball_ctr.T @ omega if omega.size else 0.0
        if self.entropy:
            rhs = self.log_y - (w - shift) / self.c
            a = om / self.c
            if a > 1e-300:
                x = np.real(wrightomega(rhs + np.log(a))) / a
            else:
                with np.errstate(over="ignore"):
                    x = np.exp(rhs)
        else:
            x = (self.c * self.y - w + shift) / (self.c + om)
        return x, w

    def constraint_values(self, x):
        k, p, q, b = self.sizes
        parts = [self.rows @ x, self.G @ x - self.h, self.E @ x - self.e]
        if b:
            d = x[None, :] - self.ball_ctr
            parts.append(0.5 * (np.sum(d * d, axis=1) - self.ball_rad ** 2))
        else:
            parts.append(np.zeros(0))
        return np.concatenate(parts)

    def neg_dual(self, z):
        """Negative dual value and gradient."""
        x, w = self.primal(z)
        if not np.all(np.isfinite(x)):
            return 1e300, np.zeros_like(z)
        _, nu, kappa, omega = self.split(z)
        if self.entropy:
            breg = np.sum(x * (np.log(np.maximum(x, 1e-300)) - self.log_y) - x + self.y)
        else:
            breg = 0.5 * np.sum((x - self.y) ** 2)
        cons = self.constraint_values(x)
        k = self.sizes[0]
        val = w @ x + self.c * breg - nu @ self.h - kappa @ self.e
        if omega.size:
            val += cons[-omega.size:] @ omega
        grad = cons.copy()
        grad[k:k + self.sizes[1]] = self.G @ x - self.h
        return -float(val), -grad

    def initial(self):
        k, p, q, b = self.sizes
        z = np.zeros(k + p + q + b)
        if k:
            z[:k] = 1.0 / k
        return z

    def bounds(self):
        k, p, q, b = self.sizes
        return [(0, None)] * (k + p) + [(None, None)] * q + [(0, None)] * b


def _nonnegative_set(s: SetDescriptor) -> bool:
    if isinstance(s, (Simplex, Prism)):
        return True
    if isinstance(s, Intersection):
        return any(_nonnegative_set(p) for p in s.parts)
    return False


def _polish(dual: _DualProblem, z0, max_rounds: int = 20):
    """Active-set Newton refinement of the dual point.

    Solves the KKT system restricted to a guessed active set exactly, then
    adds violated constraints and drops negative multipliers until stable.
    """
    k, p, q, b = dual.sizes
    x0, _ = dual.primal(z0)
    cons = dual.constraint_values(x0)
    scale = 1e-7 * (1.0 + np.abs(z0).max(initial=0.0))
    act = np.zeros(z0.size, dtype=bool)
    if k:
        row_vals = cons[:k]
        act[:k] = (z0[:k] > scale) | (row_vals >= row_vals.max() - 1e-7)
    act[k:k + p] = (z0[k:k + p] > scale) | (cons[k:k + p] > 0)
    act[k + p:k + p + q] = True
    act[k + p + q:] = (z0[k + p + q:] > scale) | (cons[k + p + q:] > 0)
    t0 = float(cons[:k].max()) if k else 0.0

    z = z0.copy()
    for _ in range(max_rounds):
        idx = np.flatnonzero(act)

        def eqs(u):
            zz = np.zeros_like(z)
            zz[idx] = u[:idx.size]
            x, _ = dual.primal(zz)
            cv = dual.constraint_values(x)
            out = []
            if k:
                t = u[-1]
                out.extend(cv[i] - t for i in idx[idx < k])
                out.append(np.sum(zz[:k]) - 1.0)
            out.extend(cv[i] for i in idx[idx >= k])
            return np.asarray(out)

        u0 = np.concatenate([z[idx], [t0] if k else []])
        with np.errstate(all="ignore"):
            sol = root(eqs, u0, method="hybr", options={"xtol": 1e-15})
        u = sol.x
        znew = np.zeros_like(z)
        znew[idx] = u[:idx.size]
        if k:
            t0 = u[-1]
        x, _ = dual.primal(znew)
        cv = dual.constraint_values(x)
        ineq = np.ones(z.size, dtype=bool)
        ineq[k + p:k + p + q] = False
        negative = act & ineq & (znew < 0)
        violated = ~act & ineq & (np.concatenate([cv[:k] - (t0 if k else 0.0), cv[k:]]) > 0)
        if not negative.any() and not violated.any():
            return znew, x
        act = (act & ~negative) | violated
        z = np.clip(znew, 0.0, None) if not q else np.where(ineq, np.clip(znew, 0.0, None), znew)
        if k and not act[:k].any():
            act[int(np.argmax(cv[:k]))] = True
    return z, dual.primal(z)[0]


def generic_prox(sub: ProxSubproblem, tol: float = 1e-8) -> np.ndarray:
    """Prox point by maximizing the Lagrangian dual, certified by the residual.

    Raises MaxInnerIterations when the certified residual stays above ``tol``.
    """
    dual = _DualProblem(sub)
    z0 = dual.initial()
    if z0.size:
        cons = []
        k = dual.sizes[0]
        if k:
            cons.append({"type": "eq", "fun": lambda z: np.sum(z[:k]) - 1.0,
                         "jac": lambda z: np.concatenate([np.ones(k), np.zeros(z.size - k)])})
        res = minimize(dual.neg_dual, z0, jac=True, method="SLSQP", bounds=dual.bounds(),
                       constraints=cons, options={"ftol": 1e-15, "maxiter": 1000})
        z, x = _polish(dual, res.x)
    else:
        x, _ = dual.primal(z0)
    x = _snap(sub, x)
    try:
        resid = optimality_residual(sub, x)
    except DomainError as exc:
        raise MaxInnerIterations(f"prox solver left the feasible set: {exc}") from exc
    if not resid <= tol:
        raise MaxInnerIterations(f"prox residual {resid:.3e} above tolerance {tol:.1e}")
    return x


def _snap(sub: ProxSubproblem, x):
    """Remove rounding-level infeasibility (simplex sum, tiny negatives)."""
    x = np.array(x, dtype=float)
    if sub.problem.geometry.kind == ENTROPY:
        x = np.maximum(x, np.finfo(float).tiny)
    if isinstance(sub.set, Simplex) or (isinstance(sub.set, Intersection)
                                        and any(isinstance(p, Simplex) for p in sub.set.parts)):
        x = x / x.sum()
    return x


def prox(sub: ProxSubproblem, tol: float = 1e-8) -> np.ndarray:
    """``p_{L,mu,S}(y)``: closed form when available, otherwise the dual solver."""
    prob = sub.problem
    if closed_form_applies(prob, sub.set):
        lam = 0.0 if prob.nonsmooth is None else prob.nonsmooth.lam
        return box_l1_prox(sub.grad_y, sub.y, sub.c, lam, _closed_form_radius(sub.set))
    return generic_prox(sub, tol)
