import numpy as np
import pytest

from oracles import central_difference
from teprog.errors import DomainError, InvalidParameter, NotStronglyConvex
from teprog.geometry import (
    Ball, Box, Intersection, Prism, Simplex, WholeSpace, bregman_gradient, bregman_value,
    convexity_ratio, estimate_strong_convexity, half_squared_euclidean, intersect,
    negative_entropy, set_from_dict, strong_convexity_parameter,
)

# 30-digit evaluations (mpmath) of the closed forms
ENTROPY_DIVERGENCE = 0.14384103622589046   # 0.5 ln(4/3)
ONE_MINUS_LN2 = 0.30685281944005469


def test_quadratic_divergence_is_half_squared_distance():
    g = half_squared_euclidean(2)
    assert bregman_value(g, [1.0, 2.0], [0.0, 0.0]) == 2.5


def test_divergence_of_a_point_with_itself_is_zero():
    for g, x in [(half_squared_euclidean(3), [1.0, -2.0, 0.5]), (negative_entropy(3), [0.2, 0.3, 0.5])]:
        assert bregman_value(g, x, x) == 0.0


def test_entropy_divergence_value():
    g = negative_entropy(2)
    assert bregman_value(g, [0.5, 0.5], [0.25, 0.75]) == pytest.approx(ENTROPY_DIVERGENCE, abs=1e-15)


def test_entropy_divergence_allows_boundary_first_argument():
    g = negative_entropy(2)
    # 0 log 0 = 0: B((0,1),(0.5,0.5)) = ln 2
    assert bregman_value(g, [0.0, 1.0], [0.5, 0.5]) == pytest.approx(np.log(2.0), abs=1e-15)


def test_divergence_domain_errors():
    g = negative_entropy(2)
    with pytest.raises(DomainError):
        bregman_value(g, [-0.1, 1.0], [0.5, 0.5])
    with pytest.raises(DomainError):
        bregman_value(g, [0.5, 0.5], [0.0, 1.0])


def test_gradients():
    assert np.array_equal(bregman_gradient(half_squared_euclidean(2), [3.0, -1.0]), [3.0, -1.0])
    assert np.array_equal(bregman_gradient(negative_entropy(3), [1.0, 1.0, 1.0]), [1.0, 1.0, 1.0])
    g = bregman_gradient(negative_entropy(2), [0.5, 0.5])
    assert np.allclose(g, ONE_MINUS_LN2, atol=1e-15)


def test_entropy_gradient_rejects_boundary():
    with pytest.raises(DomainError):
        bregman_gradient(negative_entropy(2), [0.0, 1.0])


def test_gradient_matches_finite_differences(rng):
    for g in (half_squared_euclidean(5), negative_entropy(5)):
        for _ in range(50):
            x = rng.uniform(0.05, 3.0, 5)
            fd = central_difference(g.value, x)
            assert np.linalg.norm(fd - g.gradient(x)) <= 1e-5 * np.linalg.norm(fd)


def test_divergence_nonnegative_on_random_pairs(rng):
    for g in (half_squared_euclidean(4), negative_entropy(4)):
        for _ in range(1000):
            x, y = rng.uniform(0.01, 5, 4), rng.uniform(0.01, 5, 4)
            assert bregman_value(g, x, y) >= -1e-12


def test_b_is_midpoint_convex(rng):
    for g in (half_squared_euclidean(4), negative_entropy(4)):
        for _ in range(1000):
            x, y = rng.uniform(0, 5, 4), rng.uniform(0, 5, 4)
            lam = rng.uniform(0.01, 0.99)
            lhs = g.value(lam * x + (1 - lam) * y)
            rhs = lam * g.value(x) + (1 - lam) * g.value(y)
            assert lhs <= rhs + 1e-12 * (1 + abs(g.value(x)) + abs(g.value(y)))


def test_strong_convexity_parameters():
    assert strong_convexity_parameter(half_squared_euclidean(3, 4.0), WholeSpace()) == 1.0
    assert strong_convexity_parameter(negative_entropy(3, 1.0), Simplex()) == 1.0
    s = intersect(Prism(), Ball(3.0))
    assert strong_convexity_parameter(negative_entropy(3, 2.0), s) == pytest.approx(1 / 3.0)
    s1 = intersect(Prism(), Ball(3.0, order=1.0))
    assert strong_convexity_parameter(negative_entropy(3, 1.0), s1) == pytest.approx(1 / 3.0)
    with pytest.raises(NotStronglyConvex):
        strong_convexity_parameter(negative_entropy(3), Prism())


def _pairs(s, n, rng, count):
    xs = s.sample(rng, n, count, scale=3.0)
    ys = s.sample(rng, n, count, scale=3.0)
    return [(x, y) for x, y in zip(xs, ys) if np.all(x > 0) and np.all(y > 0)]


@pytest.mark.parametrize("geom,s", [
    (negative_entropy(3, 1.0), Simplex()),
    (negative_entropy(3, 1.0), intersect(Prism(), Ball(2.0, order=1.0))),
    (negative_entropy(3, 2.0), intersect(Prism(), Ball(2.0))),
    (half_squared_euclidean(4, 3.0), Box(2.0)),
])
def test_certified_parameter_lower_bounds_divergence(geom, s, rng):
    mu = strong_convexity_parameter(geom, s)
    for x, y in _pairs(s, geom.dimension, rng, 1000):
        assert bregman_value(geom, x, y) >= 0.5 * mu * geom.norm(x - y) ** 2 - 1e-10


def test_sampled_estimate_does_not_undercut_certified_value(rng):
    # the estimate is safety * (sampled minimum), the certified value is a true lower bound
    for geom, s in [(negative_entropy(3, 1.0), Simplex()),
                    (negative_entropy(3, 2.0), intersect(Prism(), Ball(2.0)))]:
        est = estimate_strong_convexity(geom, s, rng, samples=2000)
        assert est >= 0.9 * strong_convexity_parameter(geom, s) - 1e-12


def test_convexity_ratio_is_one_for_quadratic():
    g = half_squared_euclidean(3)
    assert convexity_ratio(g, np.array([1.0, 0, 0]), np.array([0, 2.0, 1.0]), 0.3) == pytest.approx(1.0)


def test_box_nesting_on_samples(rng):
    small, big = Box(1.0), Box(1.5)
    pts = small.sample(rng, 5, 500)
    assert all(big.contains(p) for p in pts)


def test_set_membership():
    assert Simplex().contains([0.2, 0.3, 0.5])
    assert not Simplex().contains([0.2, 0.3, 0.6])
    assert Prism().contains([1.0, 1.0, 1.0])
    assert not Prism().contains([2.0, 0.0, 0.0])
    assert Ball(1.0, order=1.0).contains([0.5, -0.5])
    assert not Ball(1.0).contains([1.0, 0.1])
    s = intersect(Prism(), Ball(2.0))
    assert isinstance(s, Intersection) and s.contains([0.5, 0.5, 0.5])


def test_prism_lies_in_orthant(rng):
    for x in Prism().sample(rng, 3, 2000, scale=5.0):
        assert np.all(x >= 0)


def test_intersect_drops_whole_space():
    assert intersect(WholeSpace(), Box(2.0)) == Box(2.0)
    assert intersect(WholeSpace()) == WholeSpace()


def test_set_round_trip():
    for s in (Box(2.0), Ball(1.5, 1.0, (0.1, 0.2)), Simplex(), Prism(), WholeSpace(),
              intersect(Prism(), Ball(3.0))):
        assert set_from_dict(s.describe()) == s


def test_invalid_parameters():
    with pytest.raises(InvalidParameter):
        Box(0.0)
    with pytest.raises(InvalidParameter):
        half_squared_euclidean(3, 1.5)
