"""
Conic modeling layer
Hermitian matrix variables, affine expressions built from partial traces,
partial transposes and tensoring with constants, PSD cone constraints and
equalities. Programs compile to a realified standard form

    min c'x   s.t.   A x = b,   G x + s = h,   s in (+) S_+^{2n_k}

which is handed to the native interior-point method or to cvxpy.

Hermitian n x n blocks are coordinatized by ``hvec``: the diagonal, then
sqrt(2) Re and sqrt(2) Im of the strict upper triangle. The coordinates are
orthonormal for Re tr(XY), so adjoints are plain transposes.
"""

import logging
import os
import time
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from nlforge.config import check_tol, settings
from nlforge.errors import InputError
from nlforge.linalg import (
    Dims,
    HermitianOperator,
    partial_trace,
    partial_transpose,
    permute,
)

logger = logging.getLogger(__name__)


# --- coordinates -------------------------------------------------------------

def _side(dims: Dims) -> int:
    return int(np.prod(dims, dtype=int))


def hvec(x: Union[HermitianOperator, np.ndarray]) -> np.ndarray:
    """Real orthonormal coordinates of a Hermitian matrix (or a stack of them)."""
    m = x.matrix if isinstance(x, HermitianOperator) else np.asarray(x)
    n = m.shape[-1]
    iu, ju = np.triu_indices(n, 1)
    r2 = np.sqrt(2.0)
    diag = np.real(np.diagonal(m, axis1=-2, axis2=-1))
    upper = m[..., iu, ju]
    return np.concatenate([diag, r2 * upper.real, r2 * upper.imag], axis=-1)


def unhvec(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`hvec`, returning a complex matrix."""
    v = np.asarray(v, dtype=float)
    iu, ju = np.triu_indices(n, 1)
    k = iu.size
    m = np.zeros(v.shape[:-1] + (n, n), dtype=complex)
    idx = np.arange(n)
    m[..., idx, idx] = v[..., :n]
    upper = (v[..., n:n + k] + 1j * v[..., n + k:]) / np.sqrt(2.0)
    m[..., iu, ju] = upper
    m[..., ju, iu] = upper.conj()
    return m


@lru_cache(maxsize=None)
def _hermitian_basis(n: int) -> np.ndarray:
    """Stack of the n^2 orthonormal Hermitian basis matrices behind hvec."""
    return unhvec(np.eye(n * n), n)


def realify(x: Union[HermitianOperator, np.ndarray]) -> np.ndarray:
    """[[Re x, -Im x], [Im x, Re x]]: real symmetric, spectrum of x doubled."""
    m = x.matrix if isinstance(x, HermitianOperator) else np.asarray(x)
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


def derealify(z: np.ndarray, dims: Optional[Iterable[int]] = None) -> HermitianOperator:
    """Inverse of :func:`realify` (reads the left half)."""
    z = np.asarray(z, dtype=float)
    n = z.shape[0] // 2
    return HermitianOperator.hermitian_part(z[:n, :n] + 1j * z[n:, :n], dims)


def realify_adjoint(z: np.ndarray, dims: Optional[Iterable[int]] = None) -> HermitianOperator:
    """The Hermitian W with <z, realify(X)> = Re tr(W X) for every Hermitian X."""
    z = np.asarray(z, dtype=float)
    n = z.shape[0] // 2
    p, s, q = z[:n, :n], z[:n, n:], z[n:, n:]
    return HermitianOperator.hermitian_part((p + q) + 1j * (s.T - s), dims)


@lru_cache(maxsize=None)
def _realify_matrix(n: int) -> np.ndarray:
    """R with vec(realify(X)) = R hvec(X); shape ((2n)^2, n^2)."""
    basis = _hermitian_basis(n)
    return np.stack([realify(b).reshape(-1) for b in basis], axis=1)


# --- expressions -------------------------------------------------------------

class Cone(str, Enum):
    FREE = "FREE"
    PSD = "PSD"
    PSD_AND_PPT = "PSD_AND_PPT"


@dataclass(frozen=True)
class Variable:
    """A named Hermitian block. ``dims=()`` is a real scalar."""

    name: str
    dims: Dims
    cone: Cone = Cone.FREE
    ppt_subsystem: Optional[int] = None

    @property
    def size(self) -> int:
        return _side(self.dims)

    def expr(self) -> "Expr":
        n2 = self.size ** 2
        return Expr(self.dims, {self.name: np.eye(n2)})

    def __getattr__(self, item):
        # ptrace, ptranspose, kron_identity, ... forward to the expression
        if item.startswith("_"):
            raise AttributeError(item)
        return getattr(self.expr(), item)

    def __add__(self, other):
        return self.expr() + other

    def __radd__(self, other):
        return other + self.expr()

    def __sub__(self, other):
        return self.expr() - other

    def __rsub__(self, other):
        return Expr.lift(other) - self.expr()

    def __neg__(self):
        return -self.expr()

    def __mul__(self, scalar):
        return self.expr() * scalar

    __rmul__ = __mul__


Operand = Union["Expr", Variable, HermitianOperator, float, int]


@lru_cache(maxsize=None)
def _map_matrix(kind: str, dims: Dims, arg: Any) -> Tuple[np.ndarray, Dims]:
    """Matrix of a primitive linear map in hvec coordinates, plus output dims."""
    n = _side(dims)
    basis = [HermitianOperator(b, dims) for b in _hermitian_basis(n)]
    if kind == "ptrace":
        images = [partial_trace(b, arg) for b in basis]
    elif kind == "ptranspose":
        images = [partial_transpose(b, arg) for b in basis]
    elif kind == "permute":
        images = [permute(b, arg) for b in basis]
    elif kind == "trace":
        return hvec(HermitianOperator.identity(dims))[None, :], ()
    else:
        raise ValueError(kind)
    out_dims = images[0].dims if images else ()
    return np.stack([hvec(im) for im in images], axis=1), out_dims


def _kron_matrix(left: Optional[HermitianOperator], dims: Dims,
                 right: Optional[HermitianOperator]) -> Tuple[np.ndarray, Dims]:
    n = _side(dims)
    lm = left.matrix if left is not None else np.ones((1, 1))
    rm = right.matrix if right is not None else np.ones((1, 1))
    out_dims = (left.dims if left is not None else ()) + dims + (right.dims if right is not None else ())
    cols = [hvec(np.kron(np.kron(lm, b), rm)) for b in _hermitian_basis(n)]
    return np.stack(cols, axis=1), out_dims


class Expr:
    """Affine Hermitian-valued expression in hvec coordinates.

    ``terms`` maps a variable name to the matrix taking that variable's
    hvec to this expression's hvec; ``const`` is the constant offset.
    """

    __slots__ = ("dims", "terms", "const")
    __array_ufunc__ = None

    def __init__(self, dims: Iterable[int], terms: Optional[Dict[str, np.ndarray]] = None,
                 const: Optional[np.ndarray] = None):
        self.dims = tuple(int(d) for d in dims)
        n2 = _side(self.dims) ** 2
        self.terms = dict(terms or {})
        self.const = np.zeros(n2) if const is None else np.asarray(const, dtype=float)
        for name, t in self.terms.items():
            if t.shape[0] != n2:
                raise InputError(f"term for {name!r} has {t.shape[0]} rows, expected {n2}")

    @classmethod
    def lift(cls, obj: Operand) -> "Expr":
        if isinstance(obj, Expr):
            return obj
        if isinstance(obj, Variable):
            return obj.expr()
        if isinstance(obj, HermitianOperator):
            return cls(obj.dims, const=hvec(obj))
        if np.isscalar(obj) and not np.iscomplexobj(obj):
            return cls((), const=np.array([float(obj)]))
        raise InputError(f"cannot use {type(obj).__name__} in a conic expression")

    @classmethod
    def constant(cls, op: HermitianOperator) -> "Expr":
        return cls.lift(op)

    @property
    def variables(self) -> List[str]:
        return list(self.terms)

    def _linear(self, mat: np.ndarray, dims: Dims) -> "Expr":
        return Expr(dims, {k: mat @ t for k, t in self.terms.items()}, mat @ self.const)

    # arithmetic

    def _combine(self, other: Operand, sign: float) -> "Expr":
        other = Expr.lift(other)
        if other.dims != self.dims:
            raise InputError(f"dims mismatch in expression: {list(self.dims)} vs {list(other.dims)}")
        terms = dict(self.terms)
        for k, t in other.terms.items():
            terms[k] = terms[k] + sign * t if k in terms else sign * t
        return Expr(self.dims, terms, self.const + sign * other.const)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __radd__(self, other):
        if np.isscalar(other) and other == 0 and self.dims != ():
            return self
        return Expr.lift(other)._combine(self, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return Expr.lift(other)._combine(self, -1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, scalar):
        if not np.isscalar(scalar) or np.iscomplexobj(scalar):
            return NotImplemented
        s = float(scalar)
        return Expr(self.dims, {k: s * t for k, t in self.terms.items()}, s * self.const)

    __rmul__ = __mul__

    # primitive maps

    def ptrace(self, keep: Iterable[int]) -> "Expr":
        mat, dims = _map_matrix("ptrace", self.dims, tuple(sorted(set(keep))))
        return self._linear(mat, dims)

    def ptranspose(self, subsystem: int) -> "Expr":
        mat, dims = _map_matrix("ptranspose", self.dims, int(subsystem))
        return self._linear(mat, dims)

    def permute(self, order: Sequence[int]) -> "Expr":
        mat, dims = _map_matrix("permute", self.dims, tuple(order))
        return self._linear(mat, dims)

    def trace(self) -> "Expr":
        mat, dims = _map_matrix("trace", self.dims, None)
        return self._linear(mat, dims)

    def inner(self, op: HermitianOperator) -> "Expr":
        """Re tr(op * self) as a scalar expression."""
        if op.dims != self.dims:
            raise InputError(f"dims mismatch in inner product: {list(op.dims)} vs {list(self.dims)}")
        return self._linear(hvec(op)[None, :], ())

    def kron(self, left: Optional[HermitianOperator] = None,
             right: Optional[HermitianOperator] = None) -> "Expr":
        """left (x) self (x) right for constant operators."""
        mat, dims = _kron_matrix(left, self.dims, right)
        return self._linear(mat, dims)

    def kron_identity(self, left: Iterable[int] = (), right: Iterable[int] = ()) -> "Expr":
        left, right = tuple(left), tuple(right)
        return self.kron(
            HermitianOperator.identity(left) if left else None,
            HermitianOperator.identity(right) if right else None,
        )

    # evaluation

    def evaluate_vec(self, values: Dict[str, np.ndarray]) -> np.ndarray:
        out = self.const.copy()
        for k, t in self.terms.items():
            out = out + t @ values[k]
        return out

    def evaluate(self, values: Dict[str, HermitianOperator]) -> HermitianOperator:
        vec = self.evaluate_vec({k: hvec(values[k]) for k in self.terms})
        return HermitianOperator.hermitian_part(unhvec(vec, _side(self.dims)), self.dims)

    def __repr__(self) -> str:
        return f"Expr(dims={list(self.dims)}, vars={self.variables})"


# --- programs ----------------------------------------------------------------

@dataclass(frozen=True)
class Constraint:
    name: str
    expr: Expr


@dataclass(frozen=True)
class ConeProgram:
    """An immutable conic program.

    ``cones`` lists every ``expr >= 0`` constraint, including the implicit
    ``<var>:psd`` and ``<var>:ppt`` memberships of tagged variables.
    """

    name: str
    variables: Tuple[Variable, ...]
    equalities: Tuple[Constraint, ...]
    cones: Tuple[Constraint, ...]
    objective: Expr
    sense: str = "min"

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def constraint_names(self) -> List[str]:
        return [c.name for c in self.equalities] + [c.name for c in self.cones]


class ProgramBuilder:
    """Incremental construction of a :class:`ConeProgram`."""

    def __init__(self, name: str = "program"):
        self.name = name
        self._variables: Dict[str, Variable] = {}
        self._equalities: List[Constraint] = []
        self._cones: List[Constraint] = []
        self._objective: Optional[Expr] = None
        self._sense = "min"

    def _check_name(self, name: str):
        taken = set(self._variables) | {c.name for c in self._equalities} | {c.name for c in self._cones}
        if name in taken:
            raise InputError(f"duplicate name {name!r} in program {self.name!r}")

    def variable(self, name: str, dims: Iterable[int], cone: Cone = Cone.FREE,
                 ppt_subsystem: Optional[int] = None) -> Variable:
        self._check_name(name)
        dims = tuple(int(d) for d in dims)
        if cone == Cone.PSD_AND_PPT:
            if ppt_subsystem is None or not 0 <= ppt_subsystem < len(dims):
                raise InputError(f"variable {name!r}: PPT cone needs a valid subsystem")
        var = Variable(name, dims, Cone(cone), ppt_subsystem)
        self._variables[name] = var
        if var.cone in (Cone.PSD, Cone.PSD_AND_PPT):
            self._cones.append(Constraint(f"{name}:psd", var.expr()))
        if var.cone == Cone.PSD_AND_PPT:
            self._cones.append(Constraint(f"{name}:ppt", var.expr().ptranspose(ppt_subsystem)))
        return var

    def scalar(self, name: str) -> Variable:
        return self.variable(name, ())

    def equal(self, name: str, lhs: Operand, rhs: Operand = 0.0) -> None:
        lhs = Expr.lift(lhs)
        if np.isscalar(rhs) and rhs == 0 and lhs.dims != ():
            expr = lhs
        else:
            expr = lhs - rhs
        self._check_name(name)
        self._equalities.append(Constraint(name, expr))

    def psd(self, name: str, expr: Operand) -> None:
        """expr >= 0 in the PSD order."""
        self._check_name(name)
        self._cones.append(Constraint(name, Expr.lift(expr)))

    def minimize(self, expr: Operand) -> None:
        self._objective, self._sense = Expr.lift(expr), "min"

    def maximize(self, expr: Operand) -> None:
        self._objective, self._sense = Expr.lift(expr), "max"

    def build(self) -> ConeProgram:
        objective = self._objective if self._objective is not None else Expr(())
        if objective.dims != ():
            raise InputError("objective must be a real scalar expression")
        declared = self._variables
        for c in [Constraint("objective", objective)] + self._equalities + self._cones:
            for v in c.expr.terms:
                if v not in declared:
                    raise InputError(f"constraint {c.name!r} uses undeclared variable {v!r}")
                if c.expr.terms[v].shape[1] != declared[v].size ** 2:
                    raise InputError(f"constraint {c.name!r} uses {v!r} with the wrong dims")
        return ConeProgram(
            name=self.name,
            variables=tuple(declared.values()),
            equalities=tuple(self._equalities),
            cones=tuple(self._cones),
            objective=objective,
            sense=self._sense,
        )


# --- standard form -----------------------------------------------------------

@dataclass
class ConeBlock:
    """One realified PSD block: s = h - G x[cols] as a (size x size) matrix."""

    name: str
    dims: Dims
    size: int
    cols: np.ndarray
    G: np.ndarray
    h: np.ndarray


@dataclass
class StandardForm:
    c: np.ndarray
    c0: float
    A: np.ndarray
    b: np.ndarray
    blocks: List[ConeBlock]
    sign: float
    var_slices: Dict[str, slice]
    eq_slices: Dict[str, slice]
    row_map: np.ndarray
    inconsistency: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def degree(self) -> int:
        return sum(b.size for b in self.blocks)


@dataclass
class RawResult:
    """Backend output in standard-form coordinates (already divided by tau)."""

    status: "Status"
    x: np.ndarray
    y: np.ndarray
    z: List[np.ndarray]
    iterations: int = 0
    pres: float = float("nan")
    dres: float = float("nan")
    gap: float = float("nan")


def compile_program(program: ConeProgram) -> StandardForm:
    """Lower a program to min c'x s.t. Ax = b, Gx + s = h, s PSD blocks."""
    offsets: Dict[str, slice] = {}
    pos = 0
    for v in program.variables:
        offsets[v.name] = slice(pos, pos + v.size ** 2)
        pos += v.size ** 2
    n = pos

    sign = 1.0 if program.sense == "min" else -1.0
    c = np.zeros(n)
    for k, t in program.objective.terms.items():
        c[offsets[k]] += sign * t[0]
    c0 = float(program.objective.const[0])

    rows, rhs, eq_slices = [], [], {}
    r0 = 0
    for eq in program.equalities:
        m = eq.expr.const.size
        block = np.zeros((m, n))
        for k, t in eq.expr.terms.items():
            block[:, offsets[k]] += t
        rows.append(block)
        rhs.append(-eq.expr.const)
        eq_slices[eq.name] = slice(r0, r0 + m)
        r0 += m
    A_full = np.vstack(rows) if rows else np.zeros((0, n))
    b_full = np.concatenate(rhs) if rhs else np.zeros(0)

    # Drop linearly dependent rows: A = U S Vt, keep the numerically nonzero part.
    inconsistency = None
    if A_full.shape[0]:
        u, s, vt = np.linalg.svd(A_full, full_matrices=False)
        rank = int(np.sum(s > max(A_full.shape) * np.finfo(float).eps * max(1.0, s[0]) * 10))
        u_r, s_r, vt_r = u[:, :rank], s[:rank], vt[:rank]
        A = vt_r
        b = (u_r.T @ b_full) / s_r
        row_map = u_r / s_r
        leftover = b_full - u_r @ (u_r.T @ b_full)
        if np.linalg.norm(leftover) > 1e-9 * max(1.0, np.linalg.norm(b_full)):
            inconsistency = leftover
            logger.warning(f"Program {program.name!r}: equality constraints are inconsistent "
                           f"(residual {np.linalg.norm(leftover):.3e})")
        if rank < A_full.shape[0]:
            logger.debug(f"Program {program.name!r}: dropped {A_full.shape[0] - rank} redundant equality rows")
    else:
        A, b, row_map = np.zeros((0, n)), np.zeros(0), np.zeros((0, 0))

    blocks = []
    for cone in program.cones:
        N = _side(cone.expr.dims)
        R = _realify_matrix(N)
        names = list(cone.expr.terms)
        cols = np.concatenate([np.arange(offsets[k].start, offsets[k].stop) for k in names]) if names else np.zeros(0, int)
        T = np.hstack([cone.expr.terms[k] for k in names]) if names else np.zeros((N * N, 0))
        blocks.append(ConeBlock(cone.name, cone.expr.dims, 2 * N, cols, -R @ T, R @ cone.expr.const))

    return StandardForm(c, c0, A, b, blocks, sign, offsets, eq_slices, row_map, inconsistency)


# --- solutions ---------------------------------------------------------------

class Status(str, Enum):
    OPTIMAL = "OPTIMAL"
    INFEASIBLE = "INFEASIBLE"
    UNBOUNDED = "UNBOUNDED"
    NUMERICAL_FAILURE = "NUMERICAL_FAILURE"


@dataclass(frozen=True)
class Solution:
    """Primal-dual pair returned by :func:`solve`.

    ``dual`` maps every constraint name to its multiplier: W (PSD) for cone
    constraints, Y for equalities. For a minimization they satisfy
    c = sum_k E_k^*(W_k) + sum_j F_j^*(Y_j); for a maximization the same holds
    for the negated objective. On INFEASIBLE ``dual`` holds the Farkas
    certificate, on UNBOUNDED ``primal`` holds the improving ray.
    """

    status: Status
    primal: Dict[str, HermitianOperator]
    dual: Dict[str, HermitianOperator]
    objective_value: float
    dual_value: float
    gap: float
    iterations: int = 0
    backend: str = "native"
    residuals: Dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == Status.OPTIMAL

    def scalar(self, name: str) -> float:
        return float(self.primal[name].matrix[0, 0].real)


def _unpack(program: ConeProgram, form: StandardForm, raw: RawResult, backend: str) -> Solution:
    primal = {}
    for v in program.variables:
        vec = raw.x[form.var_slices[v.name]] if raw.x is not None and raw.x.size else np.zeros(v.size ** 2)
        primal[v.name] = HermitianOperator.hermitian_part(unhvec(vec, v.size), v.dims)

    dual: Dict[str, HermitianOperator] = {}
    y_full = form.row_map @ raw.y if raw.y is not None and raw.y.size else np.zeros(form.row_map.shape[0])
    for eq in program.equalities:
        sl = form.eq_slices[eq.name]
        n = _side(eq.expr.dims)
        dual[eq.name] = HermitianOperator.hermitian_part(unhvec(-y_full[sl], n), eq.expr.dims)
    for cone, blk, z in zip(program.cones, form.blocks, raw.z or [None] * len(form.blocks)):
        if z is None:
            z = np.zeros((blk.size, blk.size))
        dual[cone.name] = realify_adjoint(z.reshape(blk.size, blk.size), cone.expr.dims)

    value = program.objective.evaluate_vec(
        {k: hvec(primal[k]) for k in program.objective.terms}
    )[0] if raw.status != Status.INFEASIBLE else float("nan")

    dual_value = float("nan")
    if raw.status in (Status.OPTIMAL, Status.NUMERICAL_FAILURE):
        # dual objective of the min form, mapped back to the program's sense
        d: float = -sum(float(blk.h @ z.reshape(-1)) for blk, z in zip(form.blocks, raw.z or []))
        d -= float(form.b @ raw.y) if raw.y is not None and raw.y.size else 0.0
        dual_value = form.sign * d + form.c0
    gap = abs(value - dual_value) if np.isfinite(dual_value) and np.isfinite(value) else float("inf")
    return Solution(
        status=raw.status,
        primal=primal,
        dual=dual,
        objective_value=float(value),
        dual_value=float(dual_value),
        gap=float(gap),
        iterations=raw.iterations,
        backend=backend,
        residuals={"primal": float(raw.pres), "dual": float(raw.dres), "complementarity": float(raw.gap)},
    )


def solve(program: ConeProgram, tol: Optional[float] = None, backend: Optional[str] = None,
          max_iter: Optional[int] = None) -> Solution:
    """Solve a program to tolerance ``tol`` (default from settings).

    Deterministic for identical inputs. Non-optimal outcomes are returned,
    not raised; callers that need an optimum check ``Solution.ok``.
    """
    tol = check_tol(tol)
    backend = backend or settings.NONLOCALITY_FORGE_BACKEND
    max_iter = max_iter or settings.NONLOCALITY_FORGE_MAX_ITER
    started = time.perf_counter()
    form = compile_program(program)

    if form.inconsistency is not None:
        # Farkas certificate: y with A'y = 0 and b'y < 0 in the unreduced rows
        y_cert = form.inconsistency / np.linalg.norm(form.inconsistency)
        dual = {}
        for eq in program.equalities:
            sl = form.eq_slices[eq.name]
            dual[eq.name] = HermitianOperator.hermitian_part(
                unhvec(y_cert[sl], _side(eq.expr.dims)), eq.expr.dims)
        solution = Solution(Status.INFEASIBLE, {}, dual, float("nan"), float("nan"), float("inf"), 0, backend)
    else:
        if backend == "native":
            from nlforge.ipm import solve_standard
        elif backend == "cvxpy":
            from nlforge.cvxpy_backend import solve_standard
        else:
            raise InputError(f"unknown backend {backend!r}")
        raw = solve_standard(form, tol=tol, max_iter=max_iter)
        solution = _unpack(program, form, raw, backend)

    elapsed = time.perf_counter() - started
    logger.debug(f"{program.name}: {solution.status.value} value={solution.objective_value:.10g} "
                 f"gap={solution.gap:.2e} iters={solution.iterations} ({elapsed:.3f}s, {backend})")
    if settings.NONLOCALITY_FORGE_DUMP_DIR:
        path = os.path.join(settings.NONLOCALITY_FORGE_DUMP_DIR, f"{program.name}.json")
        dump_program(program, path, solution)
    return solution


# --- duality -----------------------------------------------------------------

def dualize(program: ConeProgram) -> ConeProgram:
    """Lagrangian dual of ``program`` as another ConeProgram.

    One PSD variable ``Z[<cone>]`` per cone constraint and one free variable
    ``Y[<equality>]`` per equality; one equality per primal variable.
    A minimization dualizes to a maximization and vice versa; at optimality
    both have the same value.
    """
    builder = ProgramBuilder(f"dual({program.name})")
    zs = [builder.variable(f"Z[{c.name}]", c.expr.dims, Cone.PSD) for c in program.cones]
    ys = [builder.variable(f"Y[{e.name}]", e.expr.dims) for e in program.equalities]
    sign = 1.0 if program.sense == "min" else -1.0

    for v in program.variables:
        n2 = v.size ** 2
        terms: Dict[str, np.ndarray] = {}
        for z, c in zip(zs, program.cones):
            if v.name in c.expr.terms:
                terms[z.name] = c.expr.terms[v.name].T
        for y, e in zip(ys, program.equalities):
            if v.name in e.expr.terms:
                terms[y.name] = e.expr.terms[v.name].T
        grad = program.objective.terms.get(v.name, np.zeros((1, n2)))[0]
        # sum E^*(Z) + sum F^*(Y) = sign * c_v
        builder.equal(f"stationarity[{v.name}]", Expr(v.dims, terms, -sign * grad))

    obj = Expr(())
    for z, c in zip(zs, program.cones):
        obj = obj - z.expr().inner(HermitianOperator(unhvec(c.expr.const, _side(c.expr.dims)), c.expr.dims))
    for y, e in zip(ys, program.equalities):
        obj = obj - y.expr().inner(HermitianOperator(unhvec(e.expr.const, _side(e.expr.dims)), e.expr.dims))
    if program.sense == "min":
        builder.maximize(obj + float(program.objective.const[0]))
    else:
        builder.minimize(-1.0 * obj + float(program.objective.const[0]))
    return builder.build()


# --- verification ------------------------------------------------------------

@dataclass
class VerificationReport:
    """Independently recomputed residuals of a solution."""

    tol: float
    equality_residuals: Dict[str, float]
    cone_floors: Dict[str, float]
    dual_floors: Dict[str, float]
    complementarity: Dict[str, float]
    dual_residual: float
    primal_value: float
    dual_value: float
    gap: float
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tol": self.tol,
            "passed": self.passed,
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "gap": self.gap,
            "dual_residual": self.dual_residual,
            "max_equality_residual": max(self.equality_residuals.values(), default=0.0),
            "min_cone_eigenvalue": min(self.cone_floors.values(), default=0.0),
            "min_dual_eigenvalue": min(self.dual_floors.values(), default=0.0),
            "max_complementarity": max(self.complementarity.values(), default=0.0),
            "equality_residuals": self.equality_residuals,
            "cone_floors": self.cone_floors,
            "dual_floors": self.dual_floors,
            "complementarity": self.complementarity,
        }


def verify_solution(program: ConeProgram, solution: Solution, tol: Optional[float] = None) -> VerificationReport:
    """Recompute every residual of ``solution`` from the program data alone."""
    tol = check_tol(tol)
    x = {v.name: hvec(solution.primal[v.name]) for v in program.variables}

    eq_res = {}
    for eq in program.equalities:
        r = eq.expr.evaluate_vec(x)
        eq_res[eq.name] = float(np.linalg.norm(r)) / max(1.0, float(np.linalg.norm(eq.expr.const)))

    cone_floor, dual_floor, comp = {}, {}, {}
    stationarity = {v.name: np.zeros(v.size ** 2) for v in program.variables}
    sign = 1.0 if program.sense == "min" else -1.0
    dual_value = float(program.objective.const[0])
    dual_sum = 0.0
    for c in program.cones:
        e_vec = c.expr.evaluate_vec(x)
        e_op = HermitianOperator.hermitian_part(unhvec(e_vec, _side(c.expr.dims)), c.expr.dims)
        cone_floor[c.name] = float(e_op.eigvalsh()[0])
        w = solution.dual.get(c.name, HermitianOperator.zeros(c.expr.dims))
        dual_floor[c.name] = float(w.eigvalsh()[0])
        comp[c.name] = abs(w.inner(e_op))
        w_vec = hvec(w)
        for k, t in c.expr.terms.items():
            stationarity[k] += t.T @ w_vec
        dual_sum -= float(w_vec @ c.expr.const)
    for eq in program.equalities:
        y_vec = hvec(solution.dual.get(eq.name, HermitianOperator.zeros(eq.expr.dims)))
        for k, t in eq.expr.terms.items():
            stationarity[k] += t.T @ y_vec
        dual_sum -= float(y_vec @ eq.expr.const)
    dual_value += sign * dual_sum

    res = 0.0
    for v in program.variables:
        grad = program.objective.terms.get(v.name, np.zeros((1, v.size ** 2)))[0]
        res = max(res, float(np.linalg.norm(stationarity[v.name] - sign * grad)))

    primal_value = float(program.objective.evaluate_vec(x)[0])
    gap = abs(primal_value - dual_value)
    scale = max(1.0, abs(primal_value))
    limit = 10 * tol
    passed = (
        max(eq_res.values(), default=0.0) <= limit
        and min(cone_floor.values(), default=0.0) >= -limit
        and min(dual_floor.values(), default=0.0) >= -limit
        and max(comp.values(), default=0.0) <= limit * scale
        and res <= limit
        and gap <= limit * scale
    )
    return VerificationReport(tol, eq_res, cone_floor, dual_floor, comp, res,
                              primal_value, dual_value, gap, bool(passed))


def dump_program(program: ConeProgram, path: str, solution: Optional[Solution] = None) -> str:
    """Write a debug JSON view of ``program`` (and optionally its solution)."""
    from nlforge.documents import encode_operator, write_json_atomic

    def expr_doc(e: Expr) -> Dict[str, Any]:
        return {
            "dims": list(e.dims),
            "constant": encode_operator(HermitianOperator(unhvec(e.const, _side(e.dims)), e.dims)),
            "terms": {k: t.tolist() for k, t in e.terms.items()},
        }

    doc: Dict[str, Any] = {
        "name": program.name,
        "sense": program.sense,
        "variables": [
            {"name": v.name, "dims": list(v.dims), "cone": v.cone.value, "ppt_subsystem": v.ppt_subsystem}
            for v in program.variables
        ],
        "equalities": [{"name": c.name, **expr_doc(c.expr)} for c in program.equalities],
        "cones": [{"name": c.name, **expr_doc(c.expr)} for c in program.cones],
        "objective": expr_doc(program.objective),
    }
    if solution is not None:
        doc["solution"] = {
            "status": solution.status.value,
            "objective_value": solution.objective_value,
            "dual_value": solution.dual_value,
            "gap": solution.gap,
            "iterations": solution.iterations,
            "backend": solution.backend,
        }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    write_json_atomic(path, doc)
    return path
