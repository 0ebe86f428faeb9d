import numpy as np
import pytest

from oracles import barycentric_grid, grid_argmin_coordinate
from teprog.errors import DomainError, InvalidParameter
from teprog.geometry import Ball, Box, Prism, Simplex, WholeSpace, half_squared_euclidean, intersect, negative_entropy
from teprog.problems import CompositeProblem, LpResidual, MaxLinear, ScaledL1, SimplexPower, objective_value
from teprog.prox import (
    ProxSubproblem, box_l1_prox, closed_form_applies, generic_prox, optimality_residual, prox,
    surrogate_value,
)

SQRT2_4 = 4 * np.sqrt(2)


def coordinate_problem(lam, rho, n=1):
    return CompositeProblem(LpResidual(np.zeros((1, n)), np.zeros(1), 2.0),
                            ScaledL1(lam) if lam > 0 else None,
                            Box(rho) if np.isfinite(rho) else WholeSpace(),
                            half_squared_euclidean(n))


def simplex_problem(rows=((0.3, 0.3, 0.3),)):
    return CompositeProblem(SimplexPower(), MaxLinear(np.asarray(rows)), Simplex(), negative_entropy(3))


@pytest.mark.parametrize("phi,lam,x_prev,rho,c,expected", [
    (0.0, 0.0, 3.0, 1.0, 1.0, 1.0),
    (0.0, 0.5, 2.0, 10.0, 1.0, 1.5),
    (0.0, 5.0, 2.0, 10.0, 1.0, 0.0),
])
def test_box_l1_prox_examples(phi, lam, x_prev, rho, c, expected):
    assert box_l1_prox([phi], [x_prev], c, lam, rho)[0] == expected


def test_box_l1_prox_examples_agree_with_grid():
    for phi, lam, x_prev, rho, c in [(0.0, 0.5, 2.0, 10.0, 1.0), (0.0, 5.0, 2.0, 10.0, 1.0)]:
        t, _, h = grid_argmin_coordinate(phi, x_prev, c, lam, rho)
        assert abs(box_l1_prox([phi], [x_prev], c, lam, rho)[0] - t) <= h


def test_box_l1_prox_negative_branch():
    assert box_l1_prox([0.0], [-2.0], 1.0, 0.5, 10.0)[0] == -1.5


def test_box_l1_prox_soft_threshold_without_box():
    u = np.array([3.0, -0.2, -4.0])
    out = box_l1_prox(np.zeros(3), u, 1.0, 1.0)
    assert np.array_equal(out, [2.0, 0.0, -3.0])


def test_box_l1_prox_rejects_bad_input():
    with pytest.raises(InvalidParameter):
        box_l1_prox([0.0], [0.0], 0.0, 1.0, 1.0)
    with pytest.raises(InvalidParameter):
        box_l1_prox([0.0], [0.0], 1.0, 1.0, -1.0)
    with pytest.raises(InvalidParameter):
        box_l1_prox([0.0, 1.0], [0.0], 1.0, 1.0, 1.0)


def test_box_l1_prox_matches_grid_on_random_tuples(rng):
    for _ in range(50):
        rho = rng.uniform(0.1, 10)
        phi, x_prev = rng.normal(scale=5), rng.uniform(-rho, rho)
        c, lam = rng.uniform(0.1, 10), rng.uniform(0, 5)
        t, _, h = grid_argmin_coordinate(phi, x_prev, c, lam, rho, points=10 ** 5 + 1)
        assert abs(box_l1_prox([phi], [x_prev], c, lam, rho)[0] - t) <= h


def test_residual_vanishes_at_closed_form(rng):
    for _ in range(100):
        rho = rng.uniform(0.1, 10)
        phi, x_prev = rng.normal(scale=5, size=1), rng.uniform(-rho, rho, size=1)
        c, lam = rng.uniform(0.1, 10), rng.uniform(0.01, 5)
        sub = ProxSubproblem(coordinate_problem(lam, rho), x_prev, c, 1.0, Box(rho), grad_y=phi, f_y=0.0)
        z = box_l1_prox(phi, x_prev, c, lam, rho)
        assert optimality_residual(sub, z) <= 1e-10
        if abs(z[0]) < rho - 2e-3:
            assert optimality_residual(sub, z + 1e-3) > 0


def test_gradient_step_is_prox_without_g(rng):
    A, cvec = rng.standard_normal((4, 3)), rng.standard_normal(4)
    p = CompositeProblem(LpResidual(A, cvec, 2.0), None, WholeSpace(), half_squared_euclidean(3))
    y = rng.standard_normal(3)
    sub = ProxSubproblem(p, y, 7.0, 0.5, WholeSpace())
    z = prox(sub)
    assert np.allclose(z, y - (0.5 / 7.0) * p.grad(y), atol=1e-15)
    assert optimality_residual(sub, z) <= 1e-12


def test_surrogate_examples(rng):
    p = simplex_problem()
    y = rng.dirichlet(np.ones(3))
    sub = ProxSubproblem(p, y, SQRT2_4, 1.0, Simplex())
    assert surrogate_value(sub, y) == pytest.approx(objective_value(p, y), abs=1e-15)
    q = CompositeProblem(LpResidual(rng.standard_normal((3, 2)), rng.standard_normal(3), 2.0), None,
                         WholeSpace(), half_squared_euclidean(2))
    y2, x2 = rng.standard_normal(2), rng.standard_normal(2)
    sub2 = ProxSubproblem(q, y2, 1.0, 1.0, WholeSpace())
    expected = q.f(y2) + q.grad(y2) @ (x2 - y2) + 0.5 * np.sum((x2 - y2) ** 2)
    assert surrogate_value(sub2, x2) == pytest.approx(expected, rel=1e-14)


def test_surrogate_majorizes_with_lipschitz_constant(rng):
    p = simplex_problem()
    for _ in range(200):
        y, x = rng.dirichlet(np.ones(3), 2)
        sub = ProxSubproblem(p, y, SQRT2_4, 1.0, Simplex())
        assert surrogate_value(sub, x) >= objective_value(p, x) - 1e-12


def test_surrogate_rejects_points_outside_set():
    sub = ProxSubproblem(simplex_problem(), np.full(3, 1 / 3), 1.0, 1.0, Simplex())
    with pytest.raises(DomainError):
        surrogate_value(sub, [0.5, 0.5, 0.5])


def test_subproblem_validation():
    p = simplex_problem()
    with pytest.raises(InvalidParameter):
        ProxSubproblem(p, np.full(3, 1 / 3), 0.0, 1.0, Simplex())
    with pytest.raises(DomainError):
        ProxSubproblem(p, [0.5, 0.5, 0.0], 1.0, 1.0, Simplex())


def test_generic_prox_simplex_matches_grid():
    p = simplex_problem()
    y = np.array([0.7, 0.2, 0.1])
    sub = ProxSubproblem(p, y, SQRT2_4, 1.0, Simplex())
    z = generic_prox(sub, 1e-8)
    assert optimality_residual(sub, z) <= 1e-8
    assert np.all(z > 0)
    W = barycentric_grid(1e-3)
    W = W[np.all(W > 0, axis=1)]
    fy, gy = p.f(y), p.grad(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        B = np.sum(W * np.log(W / y), axis=1) - W.sum(axis=1) + 1.0
    Q = fy + (W - y) @ gy + SQRT2_4 * B + np.max(W @ np.array([[0.3, 0.3, 0.3]]).T, axis=1)
    w_star = W[int(np.argmin(Q))]
    assert np.max(np.abs(z - w_star)) <= 2e-3


def test_generic_prox_minimality(rng):
    p = simplex_problem([[0.3, 0.3, 0.3], [0.5, 0.27, 0.2]])
    y = rng.dirichlet(np.ones(3))
    sub = ProxSubproblem(p, y, SQRT2_4, 1.0, Simplex())
    z = prox(sub)
    qz = surrogate_value(sub, z)
    for x in rng.dirichlet(np.ones(3), 100):
        assert qz <= surrogate_value(sub, x) + 1e-9


@pytest.mark.parametrize("ball_order", [1.0, 2.0])
def test_generic_prox_on_prism_ball(ball_order, rng):
    n = 4
    geom = negative_entropy(n, ball_order)
    s = intersect(Prism(), Ball(2.0, ball_order))
    A = rng.standard_normal((5, n))
    p = CompositeProblem(LpResidual(A, A @ np.full(n, 0.3), 2.0), None, Prism(), geom)
    y = np.full(n, 0.3)
    sub = ProxSubproblem(p, y, 10.0, 0.5, s)
    z = prox(sub)
    assert s.contains(z, 1e-10) and np.all(z > 0)
    assert optimality_residual(sub, z) <= 1e-8


def test_closed_form_dispatch():
    assert closed_form_applies(coordinate_problem(0.1, 2.0), Box(2.0))
    assert not closed_form_applies(simplex_problem(), Simplex())
