"""Problem files (JSON), matrix blobs, trace files (CSV) and reference files.

Problem file sections: ``geometry``, ``smooth``, ``nonsmooth``, ``constraint``,
``schedule``, ``solver`` and an optional free-form ``meta``.  Matrices are nested
arrays or ``{"blob": "relative/path.bin"}``; a blob is an 8-byte header (rows,
cols as little-endian uint32) followed by row-major little-endian float64.

Trace files: one JSON header line, a CSV column line, one row per iteration,
and a footer ``# end records=N sha256=...`` over the column line and rows.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .errors import InvalidParameter
from .geometry import BregmanGeometry, SetDescriptor, set_from_dict
from .problems import CompositeProblem, LpResidual, MaxLinear, ScaledL1, SimplexPower
from .solver import RunTrace, SolverConfig
from .telescope import TelescopicSchedule, schedule_from_dict, schedule_to_dict

BLOB_THRESHOLD = 10 ** 6

_ORDER = {"oneOf": [{"type": "number", "minimum": 1}, {"const": "inf"}]}
_VECTOR = {"type": "array", "items": {"type": "number"}}
_MATRIX = {"oneOf": [
    {"type": "array", "items": _VECTOR, "minItems": 1},
    {"type": "object", "properties": {"blob": {"type": "string"}},
     "required": ["blob"], "additionalProperties": False},
]}

PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["geometry", "smooth", "constraint", "schedule"],
    "additionalProperties": False,
    "$defs": {
        "set": {
            "type": "object",
            "required": ["shape"],
            "additionalProperties": False,
            "properties": {
                "shape": {"enum": ["whole_space", "box", "ball", "simplex", "prism", "intersection"]},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "order": _ORDER,
                "center": _VECTOR,
                "parts": {"type": "array", "items": {"$ref": "#/$defs/set"}, "minItems": 1},
            },
        },
    },
    "properties": {
        "geometry": {
            "type": "object",
            "required": ["kind", "dimension"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["euclidean", "entropy"]},
                "dimension": {"type": "integer", "minimum": 1},
                "norm_order": _ORDER,
            },
        },
        "smooth": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["lp_residual", "simplex_power"]},
                "p": {"type": "number", "minimum": 2},
                "A": _MATRIX,
                "c": _VECTOR,
            },
        },
        "nonsmooth": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["scaled_l1", "max_linear"]},
                        "lam": {"type": "number", "exclusiveMinimum": 0},
                        "rows": {"type": "array", "items": _VECTOR, "minItems": 1},
                    },
                },
            ]
        },
        "constraint": {"$ref": "#/$defs/set"},
        "schedule": {
            "type": "object",
            "required": ["family"],
            "additionalProperties": False,
            "properties": {
                "family": {"enum": ["power_box", "sqrt_ball", "constant"]},
                "sigma": {"type": "number", "exclusiveMinimum": 0},
                "center": _VECTOR,
                "order": _ORDER,
                "mu": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rule": {"enum": ["lipschitz", "backtracking"]},
                "eta": {"type": "number", "exclusiveMinimum": 1},
                "L1": {"type": "number", "exclusiveMinimum": 0},
                "k_max": {"type": "integer", "minimum": 0},
                "inner_tol": {"type": "number", "exclusiveMinimum": 0},
                "stop_gap": {"type": "number", "minimum": 0},
                "x1": _VECTOR,
            },
        },
        "meta": {"type": "object"},
    },
}


class SchemaError(InvalidParameter):
    """A problem file does not match the schema; ``field`` names the location."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def validate_document(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(PROBLEM_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaError(path, err.message)


# ---------------------------------------------------------------------------
# Matrix blobs
# ---------------------------------------------------------------------------

def write_blob(path, A) -> None:
    A = np.ascontiguousarray(A, dtype="<f8")
    m, n = A.shape
    with open(path, "wb") as fh:
        fh.write(np.array([m, n], dtype="<u4").tobytes())
        fh.write(A.tobytes(order="C"))


def read_blob(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise InvalidParameter(f"blob {path} is shorter than its header")
    m, n = np.frombuffer(raw[:8], dtype="<u4")
    body = np.frombuffer(raw[8:], dtype="<f8")
    if body.size != int(m) * int(n):
        raise InvalidParameter(f"blob {path} holds {body.size} values, header says {m}x{n}")
    return body.reshape(int(m), int(n)).astype(float)


# ---------------------------------------------------------------------------
# Problem files
# ---------------------------------------------------------------------------

def _order(v):
    return math.inf if v == "inf" else float(v)


def _order_out(v):
    return "inf" if math.isinf(v) else v


@dataclass
class ProblemSpec:
    """A parsed problem file: problem, schedule and solver settings."""

    problem: CompositeProblem
    schedule: TelescopicSchedule
    solver: dict

    def config(self, **overrides) -> SolverConfig:
        opts = {k: v for k, v in self.solver.items() if k in
                ("rule", "eta", "L1", "k_max", "inner_tol", "stop_gap")}
        opts.update({k: v for k, v in overrides.items() if v is not None})
        return SolverConfig(**opts)

    @property
    def x1(self) -> Optional[np.ndarray]:
        x1 = self.solver.get("x1")
        return None if x1 is None else np.asarray(x1, dtype=float)


def _set_in(d: dict) -> dict:
    d = dict(d)
    if "order" in d:
        d["order"] = _order(d["order"])
    if "parts" in d:
        d["parts"] = [_set_in(p) for p in d["parts"]]
    return d


def _set_out(d: dict) -> dict:
    d = dict(d)
    if "order" in d:
        d["order"] = _order_out(d["order"])
    if "parts" in d:
        d["parts"] = [_set_out(p) for p in d["parts"]]
    return d


def problem_from_document(doc: dict, base_dir=".") -> ProblemSpec:
    validate_document(doc)
    g = doc["geometry"]
    geometry = BregmanGeometry(g["kind"], g["dimension"], _order(g.get("norm_order", 2.0)))
    sm = doc["smooth"]
    if sm["kind"] == "lp_residual":
        for key in ("A", "c", "p"):
            if key not in sm:
                raise SchemaError(f"smooth/{key}", "required for lp_residual")
        A = sm["A"]
        A = read_blob(Path(base_dir) / A["blob"]) if isinstance(A, dict) else np.asarray(A, dtype=float)
        smooth = LpResidual(A, np.asarray(sm["c"], dtype=float), float(sm["p"]))
    else:
        smooth = SimplexPower()
    ns = doc.get("nonsmooth")
    if ns is None:
        nonsmooth = None
    elif ns["kind"] == "scaled_l1":
        if "lam" not in ns:
            raise SchemaError("nonsmooth/lam", "required for scaled_l1")
        nonsmooth = ScaledL1(float(ns["lam"]))
    else:
        if "rows" not in ns:
            raise SchemaError("nonsmooth/rows", "required for max_linear")
        nonsmooth = MaxLinear(np.asarray(ns["rows"], dtype=float))
    constraint = set_from_dict(_set_in(doc["constraint"]))
    problem = CompositeProblem(smooth, nonsmooth, constraint, geometry, dict(doc.get("meta", {})))
    sch = dict(doc["schedule"])
    if "order" in sch:
        sch["order"] = _order(sch["order"])
    schedule = schedule_from_dict(sch, constraint, geometry, getattr(smooth, "p", None))
    return ProblemSpec(problem, schedule, dict(doc.get("solver", {})))


def load_problem(path) -> ProblemSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError("<root>", f"not valid JSON ({exc})") from exc
    return problem_from_document(doc, path.parent)


def problem_to_document(spec: ProblemSpec, blob_path=None, base_dir=".") -> dict:
    """Inverse of :func:`problem_from_document`.

    ``blob_path`` (relative to ``base_dir``) stores ``A`` as a binary blob;
    it is used automatically for matrices with at least 10^6 entries.
    """
    prob = spec.problem
    geom = prob.geometry
    doc = {"geometry": {"kind": geom.kind, "dimension": geom.dimension,
                        "norm_order": _order_out(geom.norm_order)}}
    sm = prob.smooth
    if isinstance(sm, LpResidual):
        if blob_path is None and sm.A.size >= BLOB_THRESHOLD:
            blob_path = "A.bin"
        if blob_path is not None:
            target = Path(base_dir) / blob_path
            write_blob(target, sm.A)
            try:
                blob_path = target.resolve().relative_to(Path(base_dir).resolve())
            except ValueError:
                pass
            A = {"blob": Path(blob_path).as_posix()}
        else:
            A = sm.A.tolist()
        doc["smooth"] = {"kind": sm.kind, "p": sm.p, "A": A, "c": sm.c.tolist()}
    else:
        doc["smooth"] = sm.describe()
    doc["nonsmooth"] = None if prob.nonsmooth is None else prob.nonsmooth.describe()
    doc["constraint"] = _set_out(prob.constraint.describe())
    sch = schedule_to_dict(spec.schedule)
    if "order" in sch:
        sch["order"] = _order_out(sch["order"])
    doc["schedule"] = sch
    doc["solver"] = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                     for k, v in spec.solver.items() if v is not None}
    if prob.meta:
        doc["meta"] = prob.meta
    return doc


def save_problem(spec: ProblemSpec, path, blob_path=None) -> None:
    path = Path(path)
    doc = problem_to_document(spec, blob_path, path.parent)
    path.write_text(json.dumps(doc, indent=1) + "\n")


def instance_hash(problem: CompositeProblem) -> str:
    """SHA-256 of the canonical JSON of the problem data (not the schedule or solver)."""
    d = problem.describe()
    d["geometry"]["norm_order"] = _order_out(d["geometry"]["norm_order"])
    d["constraint"] = _set_out(d["constraint"])
    text = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------

COLUMNS = ("k", "F", "L_k", "mu_k", "i_k", "step_norm", "wall_ms")


def _fmt(v) -> str:
    return repr(float(v))


def trace_lines(trace: RunTrace, timing: bool = True):
    """Column line followed by one CSV row per iteration."""
    if trace.x is None:
        raise InvalidParameter("writing a trace needs the stored iterates")
    n = trace.x.shape[1] if trace.x.ndim == 2 else 0
    yield ",".join(COLUMNS + tuple(f"x_{j + 1}" for j in range(n)))
    for j in range(len(trace)):
        wall = trace.wall_time[j] * 1e3 if timing else 0.0
        head = [str(int(trace.k[j])), _fmt(trace.F[j]), _fmt(trace.L[j]), _fmt(trace.mu[j]),
                str(int(trace.i[j])), _fmt(trace.step_norm[j]), _fmt(wall)]
        yield ",".join(head + [_fmt(v) for v in trace.x[j]])


def write_trace(trace: RunTrace, path, header: dict, timing: bool = True) -> None:
    """Stream the trace to ``path``; the footer checksum is appended last."""
    digest = hashlib.sha256()
    count = 0
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for line in trace_lines(trace, timing):
            fh.write(line + "\n")
            digest.update((line + "\n").encode())
            count += 1
        fh.write(f"# end records={count - 1} sha256={digest.hexdigest()}\n")


@dataclass
class TraceFile:
    header: dict
    trace: RunTrace
    intact: bool
    problem_note: str = ""


def read_trace(path) -> TraceFile:
    """Parse a trace file; ``intact`` is False when the footer is missing or wrong."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise InvalidParameter(f"trace {path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise InvalidParameter(f"trace {path}: header line is not JSON") from exc
    body = lines[1:]
    note = ""
    intact = False
    if body and body[-1].startswith("# end"):
        footer = dict(kv.split("=", 1) for kv in body[-1][len("# end "):].split())
        body = body[:-1]
        digest = hashlib.sha256("".join(line + "\n" for line in body).encode()).hexdigest()
        intact = footer.get("sha256") == digest and int(footer.get("records", -1)) == len(body) - 1
        if not intact:
            note = "checksum or record count does not match the trace body"
    else:
        note = "footer missing (truncated trace)"
    if not body:
        raise InvalidParameter(f"trace {path} has no column line")
    cols = body[0].split(",")
    if tuple(cols[:len(COLUMNS)]) != COLUMNS:
        raise InvalidParameter(f"trace {path}: unexpected columns {cols[:len(COLUMNS)]}")
    rows = []
    for line in body[1:]:
        parts = line.split(",")
        if len(parts) != len(cols):
            intact = False
            note = note or "malformed row"
            break
        rows.append([float(v) for v in parts])
    data = np.asarray(rows, dtype=float).reshape(-1, len(cols))
    trace = RunTrace(
        header=header,
        k=data[:, 0].astype(np.int64),
        F=data[:, 1],
        L=data[:, 2],
        mu=data[:, 3],
        i=data[:, 4].astype(np.int64),
        step_norm=data[:, 5],
        wall_time=data[:, 6] / 1e3,
        x=data[:, len(COLUMNS):],
    )
    if len(trace):
        trace.x_first, trace.x_last = trace.x[0].copy(), trace.x[-1].copy()
    return TraceFile(header, trace, intact, note)


# ---------------------------------------------------------------------------
# Reference solutions
# ---------------------------------------------------------------------------

def write_reference(path, problem_hash: str, x_ref, F_ref: float, provenance: dict) -> None:
    doc = {"instance_hash": problem_hash, "x_ref": [float(v) for v in x_ref],
           "F_ref": float(F_ref), "provenance": provenance}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_reference(path) -> dict:
    doc = json.loads(Path(path).read_text())
    for key in ("instance_hash", "x_ref", "F_ref"):
        if key not in doc:
            raise InvalidParameter(f"reference file lacks {key!r}")
    doc["x_ref"] = np.asarray(doc["x_ref"], dtype=float)
    return doc


def set_to_document(s: SetDescriptor) -> dict:
    return _set_out(s.describe())
