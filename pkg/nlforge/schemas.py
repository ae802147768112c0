# --- Imports ---
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

SCHEMA_VERSION = "1"

DocumentKind = Literal["state", "povm", "distributed_measurement", "instrument", "ensemble", "subroutine", "report"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# Matrix encodings
class MatrixPayload(_Strict):
    """Complex square matrix as rows of [re, im] pairs with explicit dims."""

    dims: List[int]
    data: List[List[List[float]]]

    @field_validator("dims")
    @classmethod
    def dims_positive(cls, v):
        if any(d < 1 for d in v):
            raise ValueError("dims must be positive")
        return v

    @model_validator(mode="after")
    def square_and_consistent(self):
        n = int(np.prod(self.dims, dtype=int)) if self.dims else 1
        if len(self.data) != n:
            raise ValueError(f"expected {n} rows for dims {self.dims}, got {len(self.data)}")
        for i, row in enumerate(self.data):
            if len(row) != n:
                raise ValueError(f"row {i} has {len(row)} entries, expected {n}")
            for j, entry in enumerate(row):
                if len(entry) != 2:
                    raise ValueError(f"entry ({i},{j}) must be a [re, im] pair")
        return self


class RealMatrixPayload(_Strict):
    """Row-major real table with declared shape."""

    shape: List[int]
    data: List[float]

    @model_validator(mode="after")
    def size_matches(self):
        if len(self.data) != int(np.prod(self.shape, dtype=int)):
            raise ValueError(f"shape {self.shape} needs {int(np.prod(self.shape))} values, got {len(self.data)}")
        return self


class ChannelPayload(_Strict):
    input_dims: List[int]
    output_dims: List[int]
    kraus: List[List[List[List[float]]]]


# Object payloads
class StatePayload(_Strict):
    state: MatrixPayload


class PovmPayload(_Strict):
    elements: List[MatrixPayload]

    @field_validator("elements")
    @classmethod
    def nonempty(cls, v):
        if not v:
            raise ValueError("a POVM needs at least one element")
        return v


class DistributedMeasurementPayload(_Strict):
    outcomes: List[int]
    elements: List[List[MatrixPayload]]

    @model_validator(mode="after")
    def table_matches_outcomes(self):
        if len(self.outcomes) != 2:
            raise ValueError("outcomes must be [o_A, o_B]")
        if len(self.elements) != self.outcomes[0] or any(len(r) != self.outcomes[1] for r in self.elements):
            raise ValueError(f"element table does not have shape {self.outcomes}")
        return self


class InstrumentPayload(_Strict):
    choi: List[MatrixPayload]


class EnsemblePayload(_Strict):
    probs: RealMatrixPayload
    states: List[List[MatrixPayload]]

    @model_validator(mode="after")
    def states_match_probs(self):
        shape = self.probs.shape
        if len(shape) != 2 or len(self.states) != shape[0] or any(len(r) != shape[1] for r in self.states):
            raise ValueError(f"states table does not match probability shape {shape}")
        return self


class SubroutinePayload(_Strict):
    weights: List[float]
    post_A: List[RealMatrixPayload]
    post_B: List[RealMatrixPayload]
    pre_A: List[ChannelPayload]
    pre_B: List[ChannelPayload]


# Report schemas
class RobustnessReportOut(_Strict):
    report_type: Literal["robustness"] = "robustness"
    quantifier: str
    value: float
    primal_value: float
    dual_value: Optional[float] = None
    gap: Optional[float] = None
    tol: float
    relaxation: str
    method: str
    status: str
    iterations: int
    elapsed: float
    version: str
    primal_witness: Dict[str, Any]
    dual_certificate: Dict[str, Any]
    extras: Dict[str, Any] = {}


class ScoreReportOut(_Strict):
    report_type: Literal["score"] = "score"
    quantum_score: float
    classical_score: float
    ratio: float
    quantum_method: str
    classical_method: str
    tol: float
    gap: Optional[float] = None
    elapsed: float
    version: str
    relaxation: str
    extras: Dict[str, Any] = {}


class SuiteReportOut(_Strict):
    report_type: Literal["suite"] = "suite"
    suite: str
    passed: bool
    instances: int
    failures: int
    max_residuals: Dict[str, Optional[float]]
    timings: Dict[str, float]
    tol: float
    relaxation: str
    version: str
    counterexamples: List[str] = []
    details: List[Dict[str, Any]] = []


class ReportPayload(BaseModel):
    model_config = ConfigDict(extra="allow")

    report_type: Literal["robustness", "score", "suite", "information", "counterexample"]


PAYLOAD_MODELS = {
    "state": StatePayload,
    "povm": PovmPayload,
    "distributed_measurement": DistributedMeasurementPayload,
    "instrument": InstrumentPayload,
    "ensemble": EnsemblePayload,
    "subroutine": SubroutinePayload,
    "report": ReportPayload,
}


class DocumentEnvelope(_Strict):
    schema_version: str
    kind: DocumentKind
    payload: Dict[str, Any]

    @field_validator("schema_version")
    @classmethod
    def version_recognized(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v!r} (expected {SCHEMA_VERSION!r})")
        return v
