import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from teprog import (  # noqa: E402
    CompositeProblem, Constant, MaxLinear, PowerBox, Simplex, SimplexPower, SolverConfig,
    TelescopicSchedule, generate_instance, negative_entropy, run_backtracking,
)
from teprog.files import instance_hash  # noqa: E402

DATA = Path(__file__).parent / "data"

# seeded l_p - l_1 instance used by the rate-bound checks
LP_SEED, LP_N, LP_M, LP_P, LP_LAM, LP_DENSITY, LP_SIGMA = 1, 20, 30, 3.0, 0.1, 0.25, 0.3
REFERENCE_BUDGET = 10 ** 6


def lp_instance():
    return generate_instance(LP_SEED, LP_N, LP_M, LP_P, LP_LAM, LP_DENSITY)


def lp_schedule(problem):
    return TelescopicSchedule(PowerBox(LP_SIGMA), problem.constraint, problem.geometry)


def simplex_instance(rows=((0.3, 0.3, 0.3),)):
    return CompositeProblem(SimplexPower(), MaxLinear(np.asarray(rows)), Simplex(),
                            negative_entropy(3, 1.0))


def simplex_schedule(problem):
    return TelescopicSchedule(Constant(), problem.constraint, problem.geometry, 1.0)


def reference_solution(problem, schedule, name):
    """Cached high-accuracy optimum: backtracking run with a 10^6 budget, stopped at stall."""
    path = DATA / f"reference_{name}.json"
    h = instance_hash(problem)
    if path.exists():
        doc = json.loads(path.read_text())
        if doc["instance_hash"] == h:
            return np.asarray(doc["x_ref"]), float(doc["F_ref"])
    cfg = SolverConfig(rule="backtracking", k_max=REFERENCE_BUDGET, stop_gap=0.0,
                       store_iterates=False)
    tr = run_backtracking(problem, schedule, cfg)
    j = int(np.argmin(tr.F))
    x_ref = tr.x_last if j == len(tr) - 1 else None
    if x_ref is None:  # keep the best point, which with stop_gap=0 is the last or the one before
        tr = run_backtracking(problem, schedule, SolverConfig(rule="backtracking", k_max=j + 1))
        x_ref = tr.x[-1]
    F_ref = float(tr.F.min())
    DATA.mkdir(exist_ok=True)
    path.write_text(json.dumps({"instance_hash": h, "x_ref": list(map(float, x_ref)),
                                "F_ref": F_ref, "iterations": len(tr),
                                "method": "backtracking, eta=2, same schedule, stop at stall"},
                               indent=1) + "\n")
    return np.asarray(x_ref), F_ref


@pytest.fixture(scope="session")
def lp():
    return lp_instance()


@pytest.fixture(scope="session")
def lp_sched(lp):
    return lp_schedule(lp)


@pytest.fixture(scope="session")
def lp_reference(lp, lp_sched):
    return reference_solution(lp, lp_sched, "lp_seed1")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
_ACCEPTANCE: dict = {}


class AcceptanceLog:
    def record(self, criterion: int, passed: bool, detail: str, advisory: bool = False):
        status = "PASS" if passed else ("WARN" if advisory else "FAIL")
        prev = _ACCEPTANCE.get(criterion)
        if prev is not None and prev[0] != "PASS":
            status, detail = prev[0], prev[1] + "; " + detail
        elif prev is not None and status == "PASS":
            detail = prev[1] + "; " + detail
        _ACCEPTANCE[criterion] = (status, detail)
        return passed


@pytest.fixture
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[c]
        terminalreporter.write_line(f"criterion {c}: {status}  {detail}")
