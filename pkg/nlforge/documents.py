"""
Document I/O
Conversion between domain objects and the versioned JSON documents used by
the command line, with a deterministic emitter so that read -> write -> read
is byte-stable.
"""

import json
import logging
import math
import os
import sys
import tempfile
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ValidationError

from nlforge import __version__, qobj
from nlforge.errors import InputError
from nlforge.linalg import HermitianOperator, LinearMapOnOperators
from nlforge.schemas import (
    PAYLOAD_MODELS,
    SCHEMA_VERSION,
    ChannelPayload,
    DocumentEnvelope,
    MatrixPayload,
    RealMatrixPayload,
    RobustnessReportOut,
    ScoreReportOut,
    SuiteReportOut,
)

logger = logging.getLogger(__name__)


# --- emitter -----------------------------------------------------------------

def _number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return "null"
    if x == 0.0:
        x = 0.0  # "-0" would not survive a read as an int
    return format(x, ".17g")


def _depth(obj) -> int:
    if isinstance(obj, list):
        return 1 + max((_depth(v) for v in obj), default=0)
    return 0


def _has_dict(obj) -> bool:
    if isinstance(obj, dict):
        return True
    if isinstance(obj, list):
        return any(_has_dict(v) for v in obj)
    return False


def _emit(obj, indent: int) -> str:
    pad = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, (bool, int, float, np.integer, np.floating, np.bool_)):
        return _number(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k), ensure_ascii=False)}: {_emit(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        obj = list(obj)
        if not obj:
            return "[]"
        if not _has_dict(obj) and _depth(obj) <= 2:
            return "[" + ", ".join(_emit(v, indent) for v in obj) + "]"
        items = [f"{pad}  {_emit(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise InputError(f"cannot serialize {type(obj).__name__}")


def dumps(doc: Dict[str, Any]) -> str:
    """Deterministic JSON text: insertion key order, 17 significant digits, trailing newline."""
    return _emit(doc, 0) + "\n"


def write_text_atomic(path: str, text: str) -> str:
    """Write through a unique temp file in the target directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=os.path.splitext(path)[1], dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.debug(f"wrote {path} ({len(text)} bytes)")
    return path


def write_json_atomic(path: str, doc: Dict[str, Any]) -> str:
    return write_text_atomic(path, dumps(doc))


# --- matrix encodings -----------------------------------------------------------

def encode_operator(op: HermitianOperator) -> Dict[str, Any]:
    m = op.matrix
    return {
        "dims": list(op.dims),
        "data": [[[float(v.real), float(v.imag)] for v in row] for row in m],
    }


def decode_operator(p: MatrixPayload) -> HermitianOperator:
    data = np.asarray(p.data, dtype=float)
    n = data.shape[0]
    m = data[..., 0] + 1j * data[..., 1] if n else np.zeros((0, 0))
    return HermitianOperator(m, tuple(p.dims))


def _encode_complex(m: np.ndarray) -> List[List[List[float]]]:
    return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(m, dtype=complex)]


def _decode_complex(data) -> np.ndarray:
    a = np.asarray(data, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def _encode_real(a: np.ndarray) -> Dict[str, Any]:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(v) for v in a.reshape(-1)]}


def _decode_real(p: RealMatrixPayload) -> np.ndarray:
    return np.asarray(p.data, dtype=float).reshape(p.shape)


def _encode_channel(ch: LinearMapOnOperators) -> Dict[str, Any]:
    return {
        "input_dims": list(ch.input_dims),
        "output_dims": list(ch.output_dims),
        "kraus": [_encode_complex(k) for k in ch.kraus],
    }


def _decode_channel(p: ChannelPayload) -> LinearMapOnOperators:
    return LinearMapOnOperators(p.input_dims, p.output_dims, kraus=[_decode_complex(k) for k in p.kraus])


# --- objects <-> payloads ---------------------------------------------------------

def to_payload(obj) -> Tuple[str, Dict[str, Any]]:
    """(kind, payload) for any serializable domain object."""
    from nlforge.games import StateEnsemble

    if isinstance(obj, qobj.BipartiteState):
        return "state", {"state": encode_operator(obj.op)}
    if isinstance(obj, qobj.Povm):
        return "povm", {"elements": [encode_operator(e) for e in obj.elements]}
    if isinstance(obj, qobj.DistributedMeasurement):
        return "distributed_measurement", {
            "outcomes": list(obj.outcomes),
            "elements": [[encode_operator(e) for e in row] for row in obj.elements],
        }
    if isinstance(obj, qobj.TeleportationInstrument):
        return "instrument", {"choi": [encode_operator(j) for j in obj.choi]}
    if isinstance(obj, StateEnsemble):
        return "ensemble", {
            "probs": _encode_real(obj.probs),
            "states": [[encode_operator(s) for s in row] for row in obj.states],
        }
    if isinstance(obj, qobj.SimulationSubroutine):
        return "subroutine", {
            "weights": list(obj.weights),
            "post_A": [_encode_real(p) for p in obj.post_A],
            "post_B": [_encode_real(p) for p in obj.post_B],
            "pre_A": [_encode_channel(c) for c in obj.pre_A],
            "pre_B": [_encode_channel(c) for c in obj.pre_B],
        }
    raise InputError(f"no document kind for {type(obj).__name__}")


def from_payload(kind: str, model: BaseModel):
    from nlforge.games import StateEnsemble

    if kind == "state":
        return qobj.BipartiteState(decode_operator(model.state))
    if kind == "povm":
        return qobj.Povm(tuple(decode_operator(e) for e in model.elements))
    if kind == "distributed_measurement":
        return qobj.DistributedMeasurement(tuple(tuple(decode_operator(e) for e in row) for row in model.elements))
    if kind == "instrument":
        return qobj.TeleportationInstrument(tuple(decode_operator(j) for j in model.choi))
    if kind == "ensemble":
        return StateEnsemble(_decode_real(model.probs),
                             tuple(tuple(decode_operator(s) for s in row) for row in model.states))
    if kind == "subroutine":
        return qobj.SimulationSubroutine(
            tuple(model.weights),
            tuple(_decode_real(p) for p in model.post_A),
            tuple(_decode_real(p) for p in model.post_B),
            tuple(_decode_channel(c) for c in model.pre_A),
            tuple(_decode_channel(c) for c in model.pre_B),
        )
    return model.model_dump()


def envelope(kind: str, payload: Dict[str, Any]) -> Dict[str, Any]:
    return {"schema_version": SCHEMA_VERSION, "kind": kind, "payload": payload}


def _describe(exc: ValidationError, prefix: str = "") -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in (prefix,) + tuple(err["loc"]) if p != "")
        parts.append(f"{loc or '<root>'}: {err['msg']}")
    return "; ".join(parts)


# --- read / write -----------------------------------------------------------------

def parse_document(text: str, source: str = "<string>", expected: Optional[Tuple[str, ...]] = None):
    """Parse and validate one document; returns (kind, domain object or dict)."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"{source}:{e.lineno}:{e.colno}: invalid JSON ({e.msg})")
    try:
        env = DocumentEnvelope.model_validate(raw)
    except ValidationError as e:
        raise InputError(f"{source}: {_describe(e)}")
    if expected and env.kind not in expected:
        raise InputError(f"{source}: expected a {' or '.join(expected)} document, got {env.kind!r}")
    try:
        model = PAYLOAD_MODELS[env.kind].model_validate(env.payload)
    except ValidationError as e:
        raise InputError(f"{source}: {_describe(e, 'payload')}")
    try:
        return env.kind, from_payload(env.kind, model)
    except InputError as e:
        raise InputError(f"{source}: payload: {e}")


def read_document(path: str, expected: Optional[Tuple[str, ...]] = None):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}")
    kind, obj = parse_document(text, path, expected)
    logger.debug(f"read {kind} document from {path}")
    return obj


def load_state(path: str) -> qobj.BipartiteState:
    return read_document(path, ("state",))


def load_povm(path: str) -> qobj.Povm:
    return read_document(path, ("povm",))


def load_measurement(path: str) -> qobj.DistributedMeasurement:
    return read_document(path, ("distributed_measurement",))


def load_instrument(path: str) -> qobj.TeleportationInstrument:
    return read_document(path, ("instrument",))


def load_ensemble(path: str):
    return read_document(path, ("ensemble",))


def load_subroutine(path: str) -> qobj.SimulationSubroutine:
    return read_document(path, ("subroutine",))


def document_for(obj) -> Dict[str, Any]:
    kind, payload = to_payload(obj)
    return envelope(kind, payload)


def write_document(doc: Dict[str, Any], path: Optional[str] = None) -> str:
    """Write to ``path`` atomically, or to stdout when ``path`` is None."""
    if path is None:
        text = dumps(doc)
        sys.stdout.write(text)
        sys.stdout.flush()
        return text
    return write_json_atomic(path, doc)


def save_object(obj, path: Optional[str] = None) -> str:
    return write_document(document_for(obj), path)


# --- reports ---------------------------------------------------------------------

def _encode_value(v):
    if isinstance(v, HermitianOperator):
        return encode_operator(v)
    if isinstance(v, (list, tuple)):
        return [_encode_value(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _encode_value(x) for k, x in v.items()}
    if isinstance(v, np.ndarray):
        return _encode_value(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    try:
        return document_for(v)
    except InputError:
        return repr(v)


def robustness_report_doc(report) -> Dict[str, Any]:
    payload = {
        "report_type": "robustness",
        "quantifier": report.quantifier,
        "value": report.value,
        "primal_value": report.primal_value,
        "dual_value": report.dual_value,
        "gap": report.gap,
        "tol": report.tol,
        "relaxation": report.relaxation,
        "method": report.method,
        "status": report.status,
        "iterations": report.iterations,
        "elapsed": report.elapsed,
        "version": __version__,
        "primal_witness": _encode_value(report.primal_witness),
        "dual_certificate": _encode_value(report.dual_certificate),
        "extras": _encode_value(report.extras),
    }
    _validate_report(RobustnessReportOut, payload)
    return envelope("report", payload)


def score_report_doc(report, elapsed: float, relaxation: str = "PPT_OUTER") -> Dict[str, Any]:
    payload = {
        "report_type": "score",
        "quantum_score": report.quantum_score,
        "classical_score": report.classical_score,
        "ratio": report.ratio,
        "quantum_method": report.quantum_method,
        "classical_method": report.classical_method,
        "tol": report.tol,
        "gap": report.gap,
        "elapsed": elapsed,
        "version": __version__,
        "relaxation": relaxation,
        "extras": _encode_value(report.extras),
    }
    _validate_report(ScoreReportOut, payload)
    return envelope("report", payload)


def suite_report_doc(payload: Dict[str, Any]) -> Dict[str, Any]:
    payload = {"report_type": "suite", **_encode_value(payload), "version": __version__}
    _validate_report(SuiteReportOut, payload)
    return envelope("report", payload)


def generic_report_doc(report_type: str, payload: Dict[str, Any]) -> Dict[str, Any]:
    return envelope("report", {"report_type": report_type, **_encode_value(payload), "version": __version__})


def _validate_report(model, payload: Dict[str, Any]):
    # non-finite numbers are emitted as null
    clean = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in payload.items()}
    try:
        model.model_validate(clean)
    except ValidationError as e:
        raise InputError(f"report does not match its schema: {_describe(e)}")
