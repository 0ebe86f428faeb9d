"""``teprog`` command line: gen, solve, certify, compare.

Exit codes: 0 ok, 1 certification failure, 2 input or contract error,
3 solver failure, 4 files that do not belong together.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import certification_report
from .baseline import ista
from .errors import (
    BacktrackOverflow,
    DomainError,
    InvalidParameter,
    NoBoundAvailable,
    NotFound,
    NotStronglyConvex,
    NumericalOverflow,
    PreconditionViolation,
    ProxFailure,
    ReferenceInfeasible,
)
from .files import (
    ProblemSpec,
    instance_hash,
    load_problem,
    read_reference,
    read_trace,
    save_problem,
    write_reference,
    write_trace,
)
from .geometry import EUCLIDEAN, Box, Simplex, WholeSpace, negative_entropy
from .problems import CompositeProblem, LpResidual, MaxLinear, ScaledL1, SimplexPower, generate_instance
from .solver import default_start, run
from .telescope import Constant, PowerBox, TelescopicSchedule, default_sigma, lipschitz_bound_at

COMPARE_COLUMNS = "k,F_teprog,F_baseline,gap_teprog,gap_baseline,deviation"
EXIT_OK, EXIT_CERT, EXIT_INPUT, EXIT_SOLVER, EXIT_MISMATCH = 0, 1, 2, 3, 4

INPUT_ERRORS = (InvalidParameter, NoBoundAvailable, NotStronglyConvex, PreconditionViolation,
                NotFound, OSError, ValueError, KeyError)
SOLVER_ERRORS = (ProxFailure, BacktrackOverflow, NumericalOverflow)


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fail(code, message):
    raise CliError(code, message)


def _threads() -> int:
    env = os.environ.get("TEPROG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            _fail(EXIT_INPUT, f"TEPROG_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def _load(path) -> ProblemSpec:
    try:
        return load_problem(path)
    except INPUT_ERRORS as exc:
        _fail(EXIT_INPUT, f"{path}: {type(exc).__name__}: {exc}")


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.kind == "lp":
        prob = generate_instance(args.seed, args.n, args.m, args.p, args.lam, args.density,
                                 args.noise, args.r)
        if args.constant:
            fam = Constant()
        else:
            fam = PowerBox(args.sigma if args.sigma is not None else default_sigma(args.p))
        schedule = TelescopicSchedule(fam, prob.constraint, prob.geometry)
    else:
        rows = np.asarray(json.loads(args.rows), dtype=float) if args.rows else [[0.3, 0.3, 0.3]]
        prob = CompositeProblem(SimplexPower(), MaxLinear(rows), Simplex(), negative_entropy(3, 1.0),
                                {"seed": args.seed})
        schedule = TelescopicSchedule(Constant(), prob.constraint, prob.geometry, 1.0)
    solver = {"rule": args.rule, "k_max": args.kmax}
    save_problem(ProblemSpec(prob, schedule, solver), args.out)
    print(json.dumps({"out": str(args.out), "instance_hash": instance_hash(prob)}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _config(spec: ProblemSpec, args):
    try:
        return spec.config(rule=args.rule, eta=args.eta, k_max=args.kmax, L1=args.L1,
                           inner_tol=args.inner_tol, stop_gap=args.stop_gap)
    except (InvalidParameter, TypeError) as exc:
        _fail(EXIT_INPUT, f"solver: {exc}")


def _solve(spec: ProblemSpec, config):
    try:
        return run(spec.problem, spec.schedule, config, spec.x1)
    except (NoBoundAvailable, NotStronglyConvex, PreconditionViolation, InvalidParameter) as exc:
        _fail(EXIT_INPUT, f"{type(exc).__name__}: {exc}")
    except SOLVER_ERRORS as exc:
        _fail(EXIT_SOLVER, f"{type(exc).__name__}: {exc}")


def cmd_solve(args) -> int:
    spec = _load(args.problem)
    config = _config(spec, args)
    started = time.time()
    trace = _solve(spec, config)
    h = instance_hash(spec.problem)
    header = {
        **trace.header,
        "instance_hash": h,
        "problem_file": str(args.problem),
        "rng": "numpy.random.default_rng(PCG64)",
        "lipschitz_norm": {"order": spec.problem.geometry.norm_order,
                           "note": "bounds on S_k are radii of zero-centred balls in this norm"},
        "started_unix": started if args.timing else None,
        "elapsed_s": (time.time() - started) if args.timing else None,
        "version": __version__,
    }
    header["config"] = {k: v for k, v in header["config"].items() if k != "store_iterates"}
    write_trace(trace, args.out, _jsonable(header), timing=args.timing)
    if args.ref_out:
        write_reference(args.ref_out, h, trace.x[-1], trace.F[-1],
                        {"rule": config.rule, "iterations": len(trace), "trace": str(args.out)})
    print(json.dumps({"records": len(trace), "F_last": float(trace.F[-1]),
                      "L_last": float(trace.L[-1]), "out": str(args.out)}))
    return EXIT_OK


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------

def cmd_certify(args) -> int:
    spec = _load(args.problem)
    try:
        tf = read_trace(args.trace)
        ref = read_reference(args.ref)
    except (InvalidParameter, OSError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))
    h = instance_hash(spec.problem)
    if tf.header.get("instance_hash") != h:
        _fail(EXIT_MISMATCH, "trace was produced for a different problem (instance hash mismatch)")
    if ref["instance_hash"] != h:
        _fail(EXIT_MISMATCH, "reference belongs to a different problem (instance hash mismatch)")
    if tf.trace.x.shape[1] != spec.problem.dimension:
        _fail(EXIT_MISMATCH, "trace dimension differs from the problem dimension")
    try:
        report = certification_report(tf.trace, spec.problem, spec.schedule,
                                      ref["x_ref"], float(ref["F_ref"]))
    except ReferenceInfeasible as exc:
        _fail(EXIT_INPUT, f"reference: {exc}")
    except (InvalidParameter, NotFound) as exc:
        _fail(EXIT_INPUT, str(exc))
    integrity = {"check": "integrity", "passed": tf.intact, "checked": len(tf.trace),
                 "failures": [], "n_failures": 0 if tf.intact else 1, "detail": tf.problem_note}
    records = _record_consistency(tf.trace, spec.problem)
    report["checks"][:0] = [integrity, records]
    report["passed"] = report["passed"] and tf.intact and records["passed"]
    report["instance_hash"] = h
    out = Path(args.report) if args.report else Path(str(args.trace) + ".report.json")
    out.write_text(json.dumps(_jsonable(report)) + "\n")
    for c in report["checks"]:
        status = "PASS" if c["passed"] else "FAIL"
        extra = f" first failing k: {c['failures'][:10]}" if c["failures"] else ""
        note = f" ({c['detail']})" if c["detail"] else ""
        print(f"{status} {c['check']}{note}{extra}")
    return EXIT_OK if report["passed"] else EXIT_CERT


def _record_consistency(trace, problem, rtol=1e-12) -> dict:
    """Rows whose k is out of sequence or whose F differs from F(x_k)."""
    bad = []
    for j in range(len(trace)):
        k = j + 1
        if trace.k[j] != k:
            bad.append(k)
            continue
        try:
            F = problem.F(trace.x[j])
        except (DomainError, InvalidParameter, NumericalOverflow, ValueError):
            bad.append(k)
            continue
        rec = trace.F[j]
        if not (F == rec or abs(F - rec) <= rtol * (1.0 + abs(F))):
            bad.append(k)
    return {"check": "record_consistency", "passed": not bad, "checked": len(trace),
            "failures": bad[:50], "n_failures": len(bad), "detail": "recorded F equals F(x_k)"}


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def cmd_compare(args) -> int:
    spec = _load(args.problem)
    prob = spec.problem
    sm, g, cset = prob.smooth, prob.nonsmooth, prob.constraint
    if not isinstance(sm, LpResidual) or sm.p != 2.0:
        _fail(EXIT_INPUT, "compare needs an l2 residual (p = 2)")
    if prob.geometry.kind != EUCLIDEAN:
        _fail(EXIT_INPUT, "compare needs the quadratic geometry")
    if not isinstance(spec.schedule.family, Constant):
        _fail(EXIT_INPUT, "compare needs a constant schedule")
    if g is not None and not isinstance(g, ScaledL1):
        _fail(EXIT_INPUT, "compare supports only an l1 term")
    if not isinstance(cset, (WholeSpace, Box)):
        _fail(EXIT_INPUT, "compare supports only R^n or a centred box")
    k_max = args.kmax if args.kmax is not None else spec.solver.get("k_max", 500)
    out = Path(args.out)
    if k_max == 0:
        out.write_text(COMPARE_COLUMNS + "\n")
        print(json.dumps({"records": 0, "max_deviation": 0.0}))
        return EXIT_OK
    args.kmax = k_max
    config = _config(spec, args)
    bound = lipschitz_bound_at(prob, spec.schedule, 1)
    L = max(config.L1 or bound, bound) if config.rule == "lipschitz" else (config.L1 or bound)
    mu = spec.schedule.mu_at(1)
    lam = 0.0 if g is None else g.lam
    radius = cset.radius if isinstance(cset, Box) else np.inf

    def teprog():
        return _solve(spec, config)

    def baseline(x0):
        return ista(sm.A, sm.c, lam, L / mu, x0, k_max, radius)

    x0 = spec.x1 if spec.x1 is not None else default_start(prob, spec.schedule)
    with ThreadPoolExecutor(max_workers=min(2, _threads())) as pool:
        f1 = pool.submit(teprog)
        f2 = pool.submit(baseline, x0)
        trace, base = f1.result(), f2.result()
    F_base = np.array([prob.F(x) for x in base])
    dev = np.abs(trace.x - base).max(axis=1)
    F_min = min(trace.F.min(), F_base.min())
    with open(out, "w") as fh:
        fh.write(COMPARE_COLUMNS + "\n")
        for j in range(k_max):
            vals = (trace.F[j], F_base[j], trace.F[j] - F_min, F_base[j] - F_min, dev[j])
            fh.write(",".join([str(j + 1)] + [repr(float(v)) for v in vals]) + "\n")
    print(json.dumps({"records": k_max, "max_deviation": float(dev.max()),
                      "L_teprog_last": float(trace.L[-1]), "L_baseline": L}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="teprog", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def solver_flags(p):
        p.add_argument("--rule", choices=["lipschitz", "backtracking"])
        p.add_argument("--eta", type=float)
        p.add_argument("--kmax", type=int)
        p.add_argument("--L1", type=float)
        p.add_argument("--inner-tol", dest="inner_tol", type=float)
        p.add_argument("--stop-gap", dest="stop_gap", type=float)

    g = sub.add_parser("gen", help="write a seeded problem file")
    g.add_argument("--kind", choices=["lp", "simplex"], default="lp")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--n", type=int, default=20)
    g.add_argument("--m", type=int, default=30)
    g.add_argument("--p", type=float, default=3.0)
    g.add_argument("--r", type=float, default=2.0)
    g.add_argument("--lam", type=float, default=0.1)
    g.add_argument("--density", type=float, default=0.25)
    g.add_argument("--noise", type=float, default=0.01)
    g.add_argument("--sigma", type=float)
    g.add_argument("--constant", action="store_true", help="constant schedule S_k = R^n")
    g.add_argument("--rows", help="JSON rows of the max-linear term (simplex kind)")
    g.add_argument("--rule", choices=["lipschitz", "backtracking"], default="lipschitz")
    g.add_argument("--kmax", type=int, default=1000)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run the method and write a trace")
    s.add_argument("--problem", required=True)
    solver_flags(s)
    s.add_argument("--out", required=True)
    s.add_argument("--ref-out", dest="ref_out", help="also write the last iterate as a reference")
    s.add_argument("--no-timing", dest="timing", action="store_false",
                   help="write zero timings so identical runs give identical files")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("certify", help="check a trace against the rate bound and step inequalities")
    c.add_argument("--trace", required=True)
    c.add_argument("--problem", required=True)
    c.add_argument("--ref", required=True)
    c.add_argument("--report")
    c.set_defaults(func=cmd_certify)

    m = sub.add_parser("compare", help="side-by-side run against classical proximal gradient")
    m.add_argument("--problem", required=True)
    solver_flags(m)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"teprog: error: {exc}", file=sys.stderr)
        return exc.code
    except SOLVER_ERRORS as exc:
        print(f"teprog: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except INPUT_ERRORS as exc:
        print(f"teprog: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
