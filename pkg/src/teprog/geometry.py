"""Bregman functions, their divergences, and the sets they are measured on.

Two Bregman functions are supported:

* ``euclidean``: ``b(x) = 0.5 * ||x||_2^2`` on all of R^n.  The ambient norm is
  ``||.||_r`` with ``r >= 2``; ``b`` is 1-strongly convex for every such ``r``.
* ``entropy``: ``b(x) = sum_j x_j log x_j`` on the closed nonnegative orthant
  (``0 log 0 = 0``).  Its zone ``U`` is the open positive orthant.

Sets are small immutable descriptors with a membership test, a sampler used by
the verification layer, and the bounds needed for strong-convexity parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import rel_entr, xlogy

from .errors import DomainError, InvalidParameter, NotStronglyConvex

EUCLIDEAN = "euclidean"
ENTROPY = "entropy"


def lp_norm(v, order: float) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=float).ravel(), ord=order))


def dual_order(order: float) -> float:
    """Hoelder conjugate exponent, with 1 <-> inf."""
    if order == 1:
        return np.inf
    if np.isinf(order):
        return 1.0
    return order / (order - 1.0)


# ---------------------------------------------------------------------------
# Sets
# ---------------------------------------------------------------------------

class SetDescriptor:
    """Closed convex set in R^n.

    Subclasses implement ``contains`` and ``sample``.  The bound helpers return
    ``inf`` when the quantity is unbounded on the set.
    """

    bounded = False

    def contains(self, x, tol: float = 0.0) -> bool:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int, count: int, scale: float = 10.0) -> np.ndarray:
        raise NotImplementedError

    def max_coordinate_bound(self, n: int) -> float:
        """Upper bound on ``max_j x_j`` over the set."""
        return np.inf

    def coordinate_sum_bound(self, n: int) -> float:
        """Upper bound on ``sum_j x_j`` over the set."""
        return np.inf

    def norm_bound(self, n: int, order: float) -> float:
        """Upper bound on ``||x||_order`` over the set."""
        return np.inf

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class WholeSpace(SetDescriptor):

    def contains(self, x, tol=0.0):
        return bool(np.all(np.isfinite(x)))

    def sample(self, rng, n, count, scale=10.0):
        return rng.uniform(-scale, scale, size=(count, n))

    def describe(self):
        return {"shape": "whole_space"}


@dataclass(frozen=True)
class Box(SetDescriptor):
    """The cube ``[-radius, radius]^n``."""

    radius: float
    bounded = True

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidParameter(f"box radius must be positive, got {self.radius}")

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.abs(x) <= self.radius + tol))

    def sample(self, rng, n, count, scale=10.0):
        return rng.uniform(-self.radius, self.radius, size=(count, n))

    def max_coordinate_bound(self, n):
        return self.radius

    def coordinate_sum_bound(self, n):
        return n * self.radius

    def norm_bound(self, n, order):
        if np.isinf(order):
            return self.radius
        return n ** (1.0 / order) * self.radius

    def describe(self):
        return {"shape": "box", "radius": self.radius}


@dataclass(frozen=True)
class Ball(SetDescriptor):
    """Closed ``||.||_order`` ball of the given radius."""

    radius: float
    order: float = 2.0
    center: Optional[tuple] = None
    bounded = True

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidParameter(f"ball radius must be positive, got {self.radius}")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def _center(self, n):
        return np.zeros(n) if self.center is None else np.asarray(self.center, dtype=float)

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return lp_norm(x - self._center(x.size), self.order) <= self.radius + tol

    def sample(self, rng, n, count, scale=10.0):
        d = rng.standard_normal((count, n))
        d /= np.linalg.norm(d, ord=self.order, axis=1, keepdims=True)
        radii = self.radius * rng.uniform(size=(count, 1)) ** (1.0 / n)
        return self._center(n) + radii * d

    def max_coordinate_bound(self, n):
        return float(np.max(self._center(n))) + self.radius

    def coordinate_sum_bound(self, n):
        q = dual_order(self.order)
        return float(np.sum(self._center(n))) + lp_norm(np.ones(n), q) * self.radius

    def norm_bound(self, n, order):
        c = self._center(n)
        if order >= self.order:
            factor = 1.0
        else:
            factor = n ** (1.0 / order - (0.0 if np.isinf(self.order) else 1.0 / self.order))
        return lp_norm(c, order) + factor * self.radius

    def describe(self):
        d = {"shape": "ball", "radius": self.radius, "order": self.order}
        if self.center is not None:
            d["center"] = list(self.center)
        return d


@dataclass(frozen=True)
class Simplex(SetDescriptor):
    """Probability simplex ``{x >= 0, sum x = 1}``."""

    bounded = True

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol + 1e-12)

    def sample(self, rng, n, count, scale=10.0):
        return rng.dirichlet(np.ones(n), size=count)

    def max_coordinate_bound(self, n):
        return 1.0

    def coordinate_sum_bound(self, n):
        return 1.0

    def norm_bound(self, n, order):
        return 1.0

    def describe(self):
        return {"shape": "simplex"}


@dataclass(frozen=True)
class Prism(SetDescriptor):
    """Unbounded prism ``{sum w >= 1, sum w - n w_j <= 1 for all j}``.

    For ``n = 3`` these are the four halfspaces ``w1+w2+w3 >= 1`` and
    ``-2w1+w2+w3 <= 1`` (and cyclic).  Equivalently the simplex swept along
    the ray ``t (1, ..., 1)``, ``t >= 0``; it lies in the closed orthant.
    """

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        s = x.sum()
        return bool(s >= 1.0 - tol and np.all(s - x.size * x <= 1.0 + tol))

    def sample(self, rng, n, count, scale=10.0):
        t = rng.uniform(0.0, scale, size=(count, 1))
        return t + rng.dirichlet(np.ones(n), size=count)

    def halfspaces(self, n):
        """Rows ``(G, h)`` with the set equal to ``{G x <= h}``."""
        G = np.vstack([-np.ones(n), np.ones((n, n)) - n * np.eye(n)])
        h = np.concatenate([[-1.0], np.ones(n)])
        return G, h

    def describe(self):
        return {"shape": "prism"}


@dataclass(frozen=True)
class Intersection(SetDescriptor):
    parts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise InvalidParameter("intersection needs at least one part")

    @property
    def bounded(self):
        return any(p.bounded for p in self.parts)

    def contains(self, x, tol=0.0):
        return all(p.contains(x, tol) for p in self.parts)

    def sample(self, rng, n, count, scale=10.0):
        # rejection sampling, trying bounded parts as proposal sources first
        finite = [p for p in self.parts if p.bounded]
        scale = min([scale] + [p.norm_bound(n, 2) for p in finite])
        out = []
        for source in sorted(self.parts, key=lambda p: not p.bounded):
            for _ in range(200):
                cand = source.sample(rng, n, max(count, 64), scale=scale)
                out.extend(c for c in cand if self.contains(c))
                if len(out) >= count:
                    return np.asarray(out[:count])
        if not out:
            raise DomainError(f"could not sample from {self.describe()}")
        return np.asarray(out)[rng.integers(len(out), size=count)]

    def max_coordinate_bound(self, n):
        return min(p.max_coordinate_bound(n) for p in self.parts)

    def coordinate_sum_bound(self, n):
        return min(p.coordinate_sum_bound(n) for p in self.parts)

    def norm_bound(self, n, order):
        return min(p.norm_bound(n, order) for p in self.parts)

    def describe(self):
        return {"shape": "intersection", "parts": [p.describe() for p in self.parts]}


def intersect(*sets: SetDescriptor) -> SetDescriptor:
    """Intersection with trivial simplifications (drops whole-space factors)."""
    flat = []
    for s in sets:
        flat.extend(s.parts if isinstance(s, Intersection) else [s])
    flat = [s for s in flat if not isinstance(s, WholeSpace)]
    uniq = []
    for s in flat:
        if s not in uniq:
            uniq.append(s)
    if not uniq:
        return WholeSpace()
    if len(uniq) == 1:
        return uniq[0]
    return Intersection(tuple(uniq))


def set_from_dict(d: dict) -> SetDescriptor:
    shape = d["shape"]
    if shape == "whole_space":
        return WholeSpace()
    if shape == "box":
        return Box(float(d["radius"]))
    if shape == "ball":
        return Ball(float(d["radius"]), float(d.get("order", 2.0)), d.get("center"))
    if shape == "simplex":
        return Simplex()
    if shape == "prism":
        return Prism()
    if shape == "intersection":
        return intersect(*[set_from_dict(p) for p in d["parts"]])
    raise InvalidParameter(f"unknown set shape {shape!r}")


# ---------------------------------------------------------------------------
# Bregman geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BregmanGeometry:
    """A Bregman function ``b`` on R^n together with the ambient norm order.

    ``norm_order`` is ``r`` for the euclidean kind (must be >= 2) and the
    ``l_p`` exponent of ``X`` for the entropy kind.
    """

    kind: str
    dimension: int
    norm_order: float = 2.0

    def __post_init__(self):
        if self.kind not in (EUCLIDEAN, ENTROPY):
            raise InvalidParameter(f"unknown geometry kind {self.kind!r}")
        if int(self.dimension) < 1:
            raise InvalidParameter("dimension must be positive")
        if self.kind == EUCLIDEAN and self.norm_order < 2:
            raise InvalidParameter("euclidean geometry needs norm order r >= 2")
        if self.norm_order < 1:
            raise InvalidParameter("norm order must be >= 1")

    # norms ---------------------------------------------------------------
    def norm(self, v) -> float:
        return lp_norm(v, self.norm_order)

    def dual_norm(self, v) -> float:
        return lp_norm(v, dual_order(self.norm_order))

    # domain --------------------------------------------------------------
    def _check_shape(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise DomainError(f"expected a point of shape ({self.dimension},), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DomainError("point has non-finite coordinates")
        return x

    def in_domain(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,) or not np.all(np.isfinite(x)):
            return False
        return self.kind == EUCLIDEAN or bool(np.all(x >= 0))

    def in_zone(self, x) -> bool:
        """Membership in ``U``, the interior of ``dom(b)``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,) or not np.all(np.isfinite(x)):
            return False
        return self.kind == EUCLIDEAN or bool(np.all(x > 0))

    # b, b' ----------------------------------------------------------------
    def value(self, x) -> float:
        x = self._check_shape(x)
        if not self.in_domain(x):
            raise DomainError("point outside dom(b)")
        if self.kind == EUCLIDEAN:
            return 0.5 * float(x @ x)
        return float(np.sum(xlogy(x, x)))

    def gradient(self, x) -> np.ndarray:
        x = self._check_shape(x)
        if not self.in_zone(x):
            raise DomainError("b' is only defined in the interior of dom(b)")
        if self.kind == EUCLIDEAN:
            return x.copy()
        return 1.0 + np.log(x)

    def divergence(self, x, y) -> float:
        x = self._check_shape(x)
        y = self._check_shape(y)
        if not self.in_domain(x):
            raise DomainError("first argument of B must lie in dom(b)")
        if not self.in_zone(y):
            raise DomainError("second argument of B must lie in the zone U")
        if self.kind == EUCLIDEAN:
            d = x - y
            return 0.5 * float(d @ d)
        # sum x log(x/y) - x + y, summed term by term (each term is >= 0)
        return float(np.sum(rel_entr(x, y) - x + y))

    def describe(self) -> dict:
        return {"kind": self.kind, "dimension": self.dimension, "norm_order": self.norm_order}


def half_squared_euclidean(n: int, r: float = 2.0) -> BregmanGeometry:
    return BregmanGeometry(EUCLIDEAN, int(n), float(r))


def negative_entropy(n: int, norm_order: float = 1.0) -> BregmanGeometry:
    return BregmanGeometry(ENTROPY, int(n), float(norm_order))


def geometry_from_dict(d: dict) -> BregmanGeometry:
    return BregmanGeometry(d["kind"], int(d["dimension"]), float(d.get("norm_order", 2.0)))


def bregman_value(geometry: BregmanGeometry, x, y) -> float:
    """``B(x, y) = b(x) - b(y) - <b'(y), x - y>``; raises DomainError off-domain."""
    return geometry.divergence(x, y)


def bregman_gradient(geometry: BregmanGeometry, x) -> np.ndarray:
    return geometry.gradient(x)


def strong_convexity_parameter(geometry: BregmanGeometry, s: SetDescriptor) -> float:
    """A certified strong-convexity parameter of ``b`` on ``s``.

    Euclidean: 1 for every ``r >= 2`` since ``||.||_2 >= ||.||_r``.

    Entropy: the Hessian is ``diag(1/x)``.  For ``p >= 2`` we use
    ``sum h_j^2/x_j >= ||h||_2^2 / max_j x_j >= ||h||_p^2 / max_j x_j``; for
    ``p < 2``, Cauchy-Schwarz gives ``sum h_j^2/x_j >= ||h||_1^2 / sum_j x_j``.
    """
    if geometry.kind == EUCLIDEAN:
        return 1.0
    n = geometry.dimension
    if geometry.norm_order >= 2:
        m = s.max_coordinate_bound(n)
    else:
        m = s.coordinate_sum_bound(n)
    if not np.isfinite(m) or m <= 0:
        raise NotStronglyConvex(f"entropy has no certified parameter on {s.describe()}")
    return 1.0 / m


def convexity_ratio(geometry: BregmanGeometry, x, y, lam: float) -> float:
    """``(lam b(x) + (1-lam) b(y) - b(lam x + (1-lam) y)) / (0.5 lam (1-lam) ||x-y||^2)``."""
    d = geometry.norm(np.asarray(x) - np.asarray(y))
    gap = (lam * geometry.value(x) + (1 - lam) * geometry.value(y)
           - geometry.value(lam * np.asarray(x) + (1 - lam) * np.asarray(y)))
    return gap / (0.5 * lam * (1 - lam) * d * d)


def estimate_strong_convexity(geometry: BregmanGeometry, s: SetDescriptor,
                              rng: np.random.Generator, samples: int = 10_000,
                              safety: float = 0.9, scale: float = 10.0) -> float:
    """Sample-based strong-convexity estimate: ``safety * min`` of sampled ratios.

    Not a certificate; sampling can only overestimate the true infimum.
    """
    n = geometry.dimension
    xs = s.sample(rng, n, samples, scale=scale)
    ys = s.sample(rng, n, samples, scale=scale)
    lams = rng.uniform(0.05, 0.95, size=samples)
    best = np.inf
    for x, y, lam in zip(xs, ys, lams):
        if geometry.norm(x - y) < 1e-6:
            continue
        best = min(best, convexity_ratio(geometry, x, y, lam))
    if not np.isfinite(best) or best <= 0:
        raise NotStronglyConvex("sampled ratios do not support a positive parameter")
    return safety * best
