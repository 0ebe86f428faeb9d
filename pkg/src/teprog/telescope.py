"""Nested ("telescopic") set schedules ``S_1 ⊆ S_2 ⊆ ... ⊆ C``.

Every quantity is computed on demand for a given ``k``; nothing is tabulated,
so a schedule costs the same whatever the iteration horizon.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import InvalidParameter, NotFound
from .geometry import (
    Ball,
    BregmanGeometry,
    Box,
    SetDescriptor,
    intersect,
    lp_norm,
    strong_convexity_parameter,
)
from .problems import FEASIBILITY_TOL

LIPSCHITZ = "lipschitz"
BACKTRACKING = "backtracking"


@dataclass(frozen=True)
class PowerBox:
    """``S_k = [-k^sigma, k^sigma]^n ∩ C``."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidParameter(f"sigma must be positive, got {self.sigma}")

    growing = True

    def describe(self):
        return {"family": "power_box", "sigma": self.sigma}


@dataclass(frozen=True)
class SqrtBall:
    """``S_k = Ball(center, sqrt(k)) ∩ C`` in the given norm."""

    center: Optional[tuple] = None
    order: float = 2.0

    def __post_init__(self):
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    growing = True

    def describe(self):
        d = {"family": "sqrt_ball", "order": self.order}
        if self.center is not None:
            d["center"] = list(self.center)
        return d


@dataclass(frozen=True)
class Constant:
    """``S_k = C`` for every ``k``."""

    growing = False

    def describe(self):
        return {"family": "constant"}


Family = Union[PowerBox, SqrtBall, Constant]


def default_sigma(p: float) -> float:
    """Largest "safe" exponent: ``min(0.5, 0.5/(p-2))`` for ``p > 2``, else 0.5."""
    return min(0.5, 0.5 / (p - 2.0)) if p > 2 else 0.5


@dataclass(frozen=True, eq=False)
class TelescopicSchedule:
    """A family of nested sets together with their ``mu_k``.

    ``mu_rule`` overrides the certified strong-convexity parameter; it must be
    positive and nonincreasing in ``k``.
    """

    family: Family
    constraint: SetDescriptor
    geometry: BregmanGeometry
    mu_rule: Optional[Union[float, Callable[[int], float]]] = None

    @property
    def growing(self) -> bool:
        return self.family.growing

    def radius_at(self, k: int) -> float:
        _check_k(k)
        if isinstance(self.family, PowerBox):
            return float(k) ** self.family.sigma
        if isinstance(self.family, SqrtBall):
            return math.sqrt(k)
        return np.inf

    def set_at(self, k: int) -> SetDescriptor:
        _check_k(k)
        fam = self.family
        if isinstance(fam, PowerBox):
            return intersect(Box(self.radius_at(k)), self.constraint)
        if isinstance(fam, SqrtBall):
            return intersect(Ball(self.radius_at(k), fam.order, fam.center), self.constraint)
        return self.constraint

    def mu_at(self, k: int) -> float:
        if self.mu_rule is not None:
            mu = float(self.mu_rule(k) if callable(self.mu_rule) else self.mu_rule)
            if not mu > 0:
                raise InvalidParameter(f"mu rule returned {mu} at k={k}")
            return mu
        return strong_convexity_parameter(self.geometry, self.set_at(k))

    def describe(self) -> dict:
        d = dict(self.family.describe())
        d["constraint"] = self.constraint.describe()
        if self.mu_rule is None:
            d["mu"] = "certified"
        else:
            d["mu"] = "rule" if callable(self.mu_rule) else float(self.mu_rule)
        return d


def _check_k(k):
    if int(k) != k or k < 1:
        raise InvalidParameter(f"k must be a positive integer, got {k}")


def set_at(schedule: TelescopicSchedule, k: int) -> SetDescriptor:
    return schedule.set_at(k)


def lipschitz_bound_at(problem, schedule: TelescopicSchedule, k: int) -> float:
    """Certified Lipschitz constant of ``f'`` on ``S_k`` (in the geometry's norm)."""
    return problem.smooth.lipschitz_bound(schedule.set_at(k), problem.geometry)


def tau_at(problem, schedule: TelescopicSchedule, k: int, rule: str,
           eta: float = 2.0, L1: float = 0.0) -> float:
    """Nondecreasing majorant ``tau_k`` of the step constants ``L_k``.

    Lipschitz rule: ``max(L_1, bound(k))``, which is ``L_k`` itself since the
    bounds grow with ``k``.  Backtracking: ``max(L_1, eta * bound(k))``; this
    is ``eta * bound(k)`` for growing schedules (where ``L_1 <= eta bound(1)``)
    and ``L_1`` for a constant one started above ``eta * bound``.
    """
    bound = lipschitz_bound_at(problem, schedule, k)
    if rule == LIPSCHITZ:
        return max(L1, bound)
    if rule == BACKTRACKING:
        return max(L1, eta * bound)
    raise InvalidParameter(f"unknown step rule {rule!r}")


def find_k0(schedule: TelescopicSchedule, x_ref, F_of_x1_finite: bool = True,
            cap: int = 10 ** 9) -> int:
    """Smallest ``k`` with ``x_ref ∈ S_k`` (at least 2 when ``F(x_1) = inf``)."""
    x_ref = np.asarray(x_ref, dtype=float)
    if not schedule.constraint.contains(x_ref, FEASIBILITY_TOL):
        raise NotFound("reference point is not in the constraint set")
    fam = schedule.family
    if isinstance(fam, PowerBox):
        size = float(np.max(np.abs(x_ref))) if x_ref.size else 0.0
        guess = math.ceil(size ** (1.0 / fam.sigma)) if size > 0 else 1
    elif isinstance(fam, SqrtBall):
        ctr = np.zeros_like(x_ref) if fam.center is None else np.asarray(fam.center)
        guess = math.ceil(lp_norm(x_ref - ctr, fam.order) ** 2)
    else:
        guess = 1
    k = max(1, guess - 1)
    # the closed-form guess can be off by one in floating point
    while not schedule.set_at(k).contains(x_ref, FEASIBILITY_TOL):
        k += 1
        if k > cap:
            break
    while k > 1 and schedule.set_at(k - 1).contains(x_ref, FEASIBILITY_TOL):
        k -= 1
    if k > cap:
        raise NotFound(f"reference point not in S_k for any k <= {cap}")
    return k if F_of_x1_finite else max(k, 2)


def schedule_from_dict(d: dict, constraint: SetDescriptor, geometry: BregmanGeometry,
                       p: Optional[float] = None) -> TelescopicSchedule:
    kind = d["family"]
    if kind == "power_box":
        sigma = d.get("sigma")
        fam = PowerBox(float(sigma) if sigma is not None else default_sigma(p if p else 2.0))
    elif kind == "sqrt_ball":
        fam = SqrtBall(d.get("center"), float(d.get("order", geometry.norm_order)))
    elif kind == "constant":
        fam = Constant()
    else:
        raise InvalidParameter(f"unknown schedule family {kind!r}")
    mu = d.get("mu")
    return TelescopicSchedule(fam, constraint, geometry, None if mu is None else float(mu))


def schedule_to_dict(schedule: TelescopicSchedule) -> dict:
    d = schedule.family.describe()
    if isinstance(schedule.mu_rule, (int, float)):
        d["mu"] = float(schedule.mu_rule)
    elif schedule.mu_rule is not None:
        raise InvalidParameter("a callable mu rule cannot be serialized")
    return d


__all__ = [
    "BACKTRACKING", "LIPSCHITZ", "Constant", "PowerBox", "SqrtBall", "TelescopicSchedule",
    "default_sigma", "find_k0", "lipschitz_bound_at", "schedule_from_dict", "schedule_to_dict",
    "set_at", "tau_at",
]
