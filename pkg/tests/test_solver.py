import numpy as np
import pytest

from conftest import simplex_instance, simplex_schedule
from oracles import textbook_ista
from teprog.errors import BacktrackOverflow, InvalidParameter, PreconditionViolation
from teprog.geometry import WholeSpace, half_squared_euclidean
from teprog.problems import CompositeProblem, LpResidual, ScaledL1
from teprog.solver import SolverConfig, default_start, run, run_backtracking, run_lipschitz
from teprog.telescope import Constant, TelescopicSchedule, lipschitz_bound_at


def scalar_quadratic():
    p = CompositeProblem(LpResidual(np.array([[1.0]]), np.zeros(1), 2.0), None, WholeSpace(),
                         half_squared_euclidean(1))
    return p, TelescopicSchedule(Constant(), WholeSpace(), p.geometry)


def lasso(rng, n=6, m=9, lam=0.2):
    A, c = rng.standard_normal((m, n)), rng.standard_normal(m)
    p = CompositeProblem(LpResidual(A, c, 2.0), ScaledL1(lam), WholeSpace(), half_squared_euclidean(n))
    return p, TelescopicSchedule(Constant(), WholeSpace(), p.geometry)


def test_config_validation():
    for kw in ({"rule": "newton"}, {"eta": 1.0}, {"L1": -1.0}, {"k_max": 0}, {"inner_tol": 0.0},
               {"stop_gap": -1.0}):
        with pytest.raises(InvalidParameter):
            SolverConfig(**kw)


@pytest.mark.parametrize("rule", ["lipschitz", "backtracking"])
def test_k_max_one_records_only_start(rule, lp, lp_sched):
    tr = run(lp, lp_sched, SolverConfig(rule=rule, k_max=1))
    assert len(tr) == 1 and tr.k[0] == 1
    assert np.array_equal(tr.x[0], default_start(lp, lp_sched))


@pytest.mark.parametrize("rule", ["lipschitz", "backtracking"])
def test_matches_textbook_ista(rule, rng):
    p, s = lasso(rng)
    L = lipschitz_bound_at(p, s, 1) * 1.5
    x1 = rng.standard_normal(6)
    tr = run(p, s, SolverConfig(rule=rule, L1=L, k_max=200), x1)
    ref = textbook_ista(p.smooth.A, p.smooth.c, 0.2, 1.0 / L, x1, 200)
    assert np.max(np.abs(tr.x - ref)) <= 1e-10
    if rule == "backtracking":
        assert np.all(tr.L == L) and np.all(tr.i == 0)


def test_backtracking_counts_two_increases():
    p, s = scalar_quadratic()
    tr = run_backtracking(p, s, SolverConfig(rule="backtracking", eta=2.0, L1=0.3, k_max=2), [1.0])
    assert tr.i[1] == 2
    assert tr.L[1] == pytest.approx(1.2)


def test_backtracking_keeps_L_when_first_trial_passes():
    p, s = scalar_quadratic()
    tr = run_backtracking(p, s, SolverConfig(rule="backtracking", L1=5.0, k_max=20), [1.0])
    assert np.all(tr.L == 5.0) and np.all(tr.i == 0)


def test_backtracking_constant_schedule_above_eta_bound(rng):
    p, s = lasso(rng)
    L1 = 2.5 * lipschitz_bound_at(p, s, 1)
    tr = run_backtracking(p, s, SolverConfig(rule="backtracking", eta=2.0, L1=L1, k_max=300))
    assert np.all(tr.L == L1)


def test_backtracking_overflow_on_cap():
    p, s = scalar_quadratic()
    cfg = SolverConfig(rule="backtracking", eta=2.0, L1=1e-6, k_max=3, backtrack_cap=3)
    with pytest.raises(BacktrackOverflow):
        run_backtracking(p, s, cfg, [1.0])


def test_lipschitz_rule_rejects_small_L1(lp, lp_sched):
    b = lipschitz_bound_at(lp, lp_sched, 1)
    with pytest.raises(PreconditionViolation):
        run_lipschitz(lp, lp_sched, SolverConfig(L1=0.5 * b, k_max=3))


def test_backtracking_rejects_large_L1_on_growing_schedule(lp, lp_sched):
    b = lipschitz_bound_at(lp, lp_sched, 1)
    with pytest.raises(PreconditionViolation):
        run_backtracking(lp, lp_sched, SolverConfig(rule="backtracking", L1=3 * b, k_max=3))


def test_start_point_preconditions(lp, lp_sched):
    with pytest.raises(PreconditionViolation):
        run(lp, lp_sched, SolverConfig(k_max=3), np.full(lp.dimension, 5.0))
    with pytest.raises(PreconditionViolation):
        run(lp, lp_sched, SolverConfig(k_max=3), np.zeros(3))
    sp = simplex_instance()
    with pytest.raises(PreconditionViolation):
        run(sp, simplex_schedule(sp), SolverConfig(k_max=3), [1.0, 0.0, 0.0])


def test_default_start_is_barycentre_on_simplex():
    sp = simplex_instance()
    assert np.allclose(default_start(sp, simplex_schedule(sp)), 1 / 3)


def test_lp_run_invariants(lp, lp_sched):
    tr = run_lipschitz(lp, lp_sched, SolverConfig(k_max=400))
    assert np.all(np.diff(tr.L) >= 0)
    assert np.all(np.isfinite(tr.F[1:]))
    assert np.all(np.diff(tr.F) <= 1e-12 * (1 + np.abs(tr.F[1:])))
    for k in (1, 50, 400):
        assert lp_sched.set_at(k).contains(tr.iterate(k), 1e-10)


def test_simplex_run_stays_interior():
    sp = simplex_instance()
    tr = run(sp, simplex_schedule(sp), SolverConfig(k_max=40), [0.7, 0.2, 0.1])
    assert np.all(tr.x > 0)
    assert np.allclose(tr.x.sum(axis=1), 1.0, atol=1e-12)


def test_stop_gap_ends_run_early(rng):
    p, s = lasso(rng)
    tr = run(p, s, SolverConfig(k_max=10 ** 5, stop_gap=1e-10))
    assert len(tr) < 10 ** 5


def test_without_stored_iterates(lp, lp_sched):
    full = run(lp, lp_sched, SolverConfig(k_max=30))
    lean = run(lp, lp_sched, SolverConfig(k_max=30, store_iterates=False))
    assert lean.x is None
    assert np.array_equal(lean.x_last, full.x[-1])
    assert np.array_equal(lean.F, full.F)
    with pytest.raises(InvalidParameter):
        lean.iterate(3)


def test_header_records_run_settings(lp, lp_sched):
    tr = run(lp, lp_sched, SolverConfig(k_max=2))
    h = tr.header
    assert h["rule"] == "lipschitz" and h["dimension"] == lp.dimension
    assert h["config"]["L1"] == tr.L[0]
    assert h["schedule"]["family"] == "power_box"
