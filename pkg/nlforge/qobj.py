"""
Quantum objects
POVMs, bipartite states, distributed measurements, teleportation
instruments, simulation subroutines and behaviours, with the constructions
that connect them.

Factor order conventions:
    Alice's POVM elements act on [A, A'], Bob's on [B', B];
    the shared state on [A', B']; distributed measurements on [A, B];
    teleportation Choi operators on [V, B'] with V a copy of A.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import sqrtm
from scipy.stats import unitary_group

from nlforge.errors import InputError, SolverError
from nlforge.linalg import (
    HermitianOperator,
    LinearMapOnOperators,
    adjoint_map,
    compose_maps,
    heisenberg_weyl,
    max_entangled,
    partial_trace,
    tensor,
)

logger = logging.getLogger(__name__)

TOL = 1e-10
NO_SIGNALLING_TOL = 1e-9


def _validate_density(op: HermitianOperator, what: str):
    if not op.is_psd(TOL):
        raise InputError(f"{what}: not positive semidefinite (lambda_min={op.eigvalsh()[0]:.3e})")
    if abs(op.trace() - 1.0) > TOL:
        raise InputError(f"{what}: trace {op.trace():.12g} != 1")


def _d(dims) -> int:
    return int(np.prod(dims, dtype=int))


# --- POVMs -------------------------------------------------------------------

@dataclass(frozen=True)
class Povm:
    """Positive operators summing to the identity."""

    elements: Tuple[HermitianOperator, ...]

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if not self.elements:
            raise InputError("POVM has no elements")
        dims = self.elements[0].dims
        total = np.zeros_like(self.elements[0].matrix)
        for k, e in enumerate(self.elements):
            if e.dims != dims:
                raise InputError(f"POVM element {k} has dims {list(e.dims)}, expected {list(dims)}")
            if not e.is_psd(TOL):
                raise InputError(f"POVM element {k} is not PSD (lambda_min={e.eigvalsh()[0]:.3e})")
            total = total + e.matrix
        err = float(np.max(np.abs(total - np.eye(total.shape[0]))))
        if err > TOL:
            raise InputError(f"POVM elements sum to identity only within {err:.3e}")

    @property
    def dims(self):
        return self.elements[0].dims

    @property
    def outcomes(self) -> int:
        return len(self.elements)

    def __len__(self):
        return len(self.elements)

    def __getitem__(self, k: int) -> HermitianOperator:
        return self.elements[k]

    @classmethod
    def trivial(cls, dims) -> "Povm":
        return cls((HermitianOperator.identity(dims),))

    @classmethod
    def from_basis(cls, unitary: np.ndarray, dims=None) -> "Povm":
        """Rank-one projectors on the columns of a unitary."""
        u = np.asarray(unitary, dtype=complex)
        dims = dims if dims is not None else (u.shape[0],)
        return cls(tuple(HermitianOperator.projector(u[:, k], dims) for k in range(u.shape[1])))

    @classmethod
    def computational(cls, d: int) -> "Povm":
        return cls.from_basis(np.eye(d))

    @classmethod
    def repaired(cls, elements: Sequence[Union[HermitianOperator, np.ndarray]], dims) -> "Povm":
        """Project near-POVM solver output onto a valid POVM.

        Negative eigenvalues are clipped and the elements are renormalized as
        S^{-1/2} M S^{-1/2} with S the clipped sum.
        """
        clipped = []
        for e in elements:
            m = e.matrix if isinstance(e, HermitianOperator) else np.asarray(e, dtype=complex)
            vals, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
            clipped.append((vecs * np.clip(vals, 0.0, None)) @ vecs.conj().T)
        s = sum(clipped)
        s_isqrt = np.linalg.inv(sqrtm(s))
        out = [HermitianOperator.hermitian_part(s_isqrt @ m @ s_isqrt.conj().T, dims) for m in clipped]
        # exact completeness: put the rounding residual on the largest element
        resid = np.eye(s.shape[0]) - sum(o.matrix for o in out)
        k = int(np.argmax([o.trace() for o in out]))
        out[k] = HermitianOperator.hermitian_part(out[k].matrix + resid, dims)
        return cls(tuple(out))


def bell_measurement(d: int) -> Povm:
    """Projectors (1 (x) U_b) phi+ (1 (x) U_b)^dagger over the Heisenberg-Weyl U_b.

    For d = 2 the order is Phi+, Phi-, Psi+, Psi-.
    """
    phi = max_entangled(d)
    eye = np.eye(d)
    return Povm(tuple(phi.conjugate_by(np.kron(eye, u)) for u in heisenberg_weyl(d)))


def controlled_povm(settings: Sequence[Povm], side: str = "A") -> Povm:
    """Sum_x |x><x| (x) M_{a|x} (side A) or sum_y M_{b|y} (x) |y><y| (side B)."""
    if not settings:
        raise InputError("controlled_povm needs at least one setting")
    dims, outcomes = settings[0].dims, settings[0].outcomes
    for k, s in enumerate(settings):
        if s.dims != dims or s.outcomes != outcomes:
            raise InputError(f"setting {k} has dims {list(s.dims)} / {s.outcomes} outcomes, "
                             f"expected {list(dims)} / {outcomes}")
    n = len(settings)
    if side not in ("A", "B"):
        raise InputError(f"side must be 'A' or 'B', got {side!r}")
    elements = []
    for a in range(outcomes):
        total = None
        for x, s in enumerate(settings):
            proj = HermitianOperator.projector(np.eye(n)[x], (n,))
            term = tensor(proj, s[a]) if side == "A" else tensor(s[a], proj)
            total = term if total is None else total + term
        elements.append(total)
    return Povm(tuple(elements))


# --- states ------------------------------------------------------------------

@dataclass(frozen=True)
class BipartiteState:
    """Density operator on [d_A', d_B']."""

    op: HermitianOperator

    def __post_init__(self):
        if len(self.op.dims) != 2:
            raise InputError(f"bipartite state needs two subsystems, got dims {list(self.op.dims)}")
        _validate_density(self.op, "state")

    @property
    def dims(self):
        return self.op.dims

    def marginal(self, k: int) -> HermitianOperator:
        return partial_trace(self.op, [k])

    def local_unitary(self, ua: np.ndarray, ub: np.ndarray) -> "BipartiteState":
        return BipartiteState(self.op.conjugate_by(np.kron(ua, ub)))


@dataclass(frozen=True)
class SeparableModel:
    """Explicit separable decomposition sum_l p(l) rho_A^l (x) rho_B^l."""

    weights: Tuple[float, ...]
    local_states_A: Tuple[HermitianOperator, ...]
    local_states_B: Tuple[HermitianOperator, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", tuple(float(v) for v in w))
        object.__setattr__(self, "local_states_A", tuple(self.local_states_A))
        object.__setattr__(self, "local_states_B", tuple(self.local_states_B))
        if not (len(w) == len(self.local_states_A) == len(self.local_states_B)) or len(w) == 0:
            raise InputError("separable model needs matching, nonempty weight and state lists")
        if np.any(w < -TOL) or abs(w.sum() - 1.0) > TOL:
            raise InputError(f"separable weights are not a probability vector: {w}")
        for k, (ra, rb) in enumerate(zip(self.local_states_A, self.local_states_B)):
            _validate_density(ra, f"local state A[{k}]")
            _validate_density(rb, f"local state B[{k}]")

    def state(self) -> BipartiteState:
        total = sum(p * tensor(ra, rb) for p, ra, rb in zip(self.weights, self.local_states_A, self.local_states_B))
        return BipartiteState(total)


def isotropic_state(d: int, p: float) -> BipartiteState:
    """p phi+ + (1 - p) 1/d^2."""
    if not 0.0 <= p <= 1.0:
        raise InputError(f"visibility must lie in [0, 1], got {p}")
    return BipartiteState(p * max_entangled(d) + (1.0 - p) / d ** 2 * HermitianOperator.identity((d, d)))


def pure_entangled_state(coefficients: Sequence[float]) -> BipartiteState:
    """sum_i c_i |ii> (normalized)."""
    c = np.asarray(coefficients, dtype=complex)
    d = c.size
    ket = np.zeros(d * d, dtype=complex)
    ket[np.arange(d) * (d + 1)] = c
    ket /= np.linalg.norm(ket)
    return BipartiteState(HermitianOperator.projector(ket, (d, d)))


def product_state(rho_a: HermitianOperator, rho_b: HermitianOperator) -> BipartiteState:
    return BipartiteState(tensor(rho_a, rho_b))


# --- distributed measurements -------------------------------------------------

def _stack(ops: Sequence[HermitianOperator], dims) -> np.ndarray:
    """Elements as a (o, d1, d2, d1, d2) array."""
    return np.stack([op.matrix.reshape(tuple(dims) + tuple(dims)) for op in ops])


@dataclass(frozen=True)
class Provenance:
    """How a measurement or instrument was built."""

    kind: str
    alice: Optional[Povm] = None
    bob: Optional[Povm] = None
    state: Optional[BipartiteState] = None
    model: Optional[SeparableModel] = None


@dataclass(frozen=True)
class DistributedMeasurement:
    """Bipartite POVM {M_ab} on [A, B], indexed elements[a][b]."""

    elements: Tuple[Tuple[HermitianOperator, ...], ...]
    provenance: Optional[Provenance] = field(default=None, compare=False)

    def __post_init__(self):
        rows = tuple(tuple(row) for row in self.elements)
        object.__setattr__(self, "elements", rows)
        if not rows or not rows[0] or any(len(r) != len(rows[0]) for r in rows):
            raise InputError("distributed measurement needs a rectangular, nonempty outcome table")
        dims = rows[0][0].dims
        if len(dims) != 2:
            raise InputError(f"distributed measurement elements need dims [d_A, d_B], got {list(dims)}")
        total = np.zeros_like(rows[0][0].matrix)
        for a, row in enumerate(rows):
            for b, e in enumerate(row):
                if e.dims != dims:
                    raise InputError(f"element ({a},{b}) has dims {list(e.dims)}, expected {list(dims)}")
                if not e.is_psd(TOL):
                    raise InputError(f"element ({a},{b}) is not PSD (lambda_min={e.eigvalsh()[0]:.3e})")
                total = total + e.matrix
        err = float(np.max(np.abs(total - np.eye(total.shape[0]))))
        if err > TOL:
            raise InputError(f"elements sum to identity only within {err:.3e}")
        if self.provenance is not None:
            ns = self.no_signalling_residual()
            if ns > NO_SIGNALLING_TOL:
                raise InputError(f"measurement violates no-signalling marginals by {ns:.3e}")

    @property
    def dims(self):
        return self.elements[0][0].dims

    @property
    def outcomes(self) -> Tuple[int, int]:
        return len(self.elements), len(self.elements[0])

    def element(self, a: int, b: int) -> HermitianOperator:
        return self.elements[a][b]

    def array(self) -> np.ndarray:
        """Elements as (o_A, o_B, d_A, d_B, d_A, d_B)."""
        dA, dB = self.dims
        return np.stack([[e.matrix.reshape(dA, dB, dA, dB) for e in row] for row in self.elements])

    @classmethod
    def from_array(cls, arr: np.ndarray, provenance: Optional[Provenance] = None) -> "DistributedMeasurement":
        oA, oB, dA, dB = arr.shape[:4]
        n = dA * dB
        return cls(tuple(tuple(HermitianOperator.hermitian_part(arr[a, b].reshape(n, n), (dA, dB))
                               for b in range(oB)) for a in range(oA)), provenance)

    def alice_marginals(self) -> List[HermitianOperator]:
        """M_a with sum_b M_ab = M_a (x) 1."""
        dB = self.dims[1]
        return [partial_trace(sum(row), [0]) / dB for row in self.elements]

    def bob_marginals(self) -> List[HermitianOperator]:
        dA = self.dims[0]
        oA, oB = self.outcomes
        return [partial_trace(sum(self.elements[a][b] for a in range(oA)), [1]) / dA for b in range(oB)]

    def no_signalling_residual(self) -> float:
        dA, dB = self.dims
        oA, oB = self.outcomes
        res = 0.0
        for a, ma in enumerate(self.alice_marginals()):
            diff = sum(self.elements[a]) - tensor(ma, HermitianOperator.identity((dB,)))
            res = max(res, float(np.max(np.abs(diff.matrix))))
        for b, mb in enumerate(self.bob_marginals()):
            diff = sum(self.elements[a][b] for a in range(oA)) - tensor(HermitianOperator.identity((dA,)), mb)
            res = max(res, float(np.max(np.abs(diff.matrix))))
        return res

    def mix(self, other: "DistributedMeasurement", p: float) -> "DistributedMeasurement":
        """p * self + (1 - p) * other."""
        if other.outcomes != self.outcomes or other.dims != self.dims:
            raise InputError("can only mix measurements with identical outcomes and dims")
        return DistributedMeasurement.from_array(p * self.array() + (1.0 - p) * other.array())

    def relabeled(self, f_a: Sequence[int], f_b: Sequence[int],
                  outcomes: Optional[Tuple[int, int]] = None) -> "DistributedMeasurement":
        """Deterministic post-processing a -> f_a[a], b -> f_b[b]."""
        oA, oB = outcomes or self.outcomes
        arr = self.array()
        out = np.zeros((oA, oB) + arr.shape[2:], dtype=complex)
        for a in range(arr.shape[0]):
            for b in range(arr.shape[1]):
                out[f_a[a], f_b[b]] += arr[a, b]
        return DistributedMeasurement.from_array(out)


def build_distributed(mA: Povm, mB: Povm, rho: BipartiteState) -> DistributedMeasurement:
    """M_ab = tr_{A'B'}[(M_a (x) M_b)(1_A (x) rho (x) 1_B)]."""
    if len(mA.dims) != 2 or len(mB.dims) != 2:
        raise InputError("local POVMs need dims [d_A, d_A'] and [d_B', d_B]")
    dA, dAp = mA.dims
    dBp, dB = mB.dims
    if rho.dims != (dAp, dBp):
        raise InputError(f"state dims {list(rho.dims)} do not chain with POVMs ({dAp}, {dBp})")
    ma = _stack(mA.elements, mA.dims)
    mb = _stack(mB.elements, mB.dims)
    r = rho.op.matrix.reshape(dAp, dBp, dAp, dBp)
    arr = np.einsum("xakAK,ylbLB,KLkl->xyabAB", ma, mb, r, optimize=True)
    return DistributedMeasurement.from_array(arr, Provenance("quantum", mA, mB, rho))


def _alice_effects(mA: Povm, rho_ap: HermitianOperator) -> np.ndarray:
    """tr_{A'}[M_a (1 (x) rho_A')] for every a, as (o, d_A, d_A)."""
    dA, dAp = mA.dims
    ma = _stack(mA.elements, mA.dims)
    return np.einsum("xakAK,Kk->xaA", ma, rho_ap.matrix)


def _bob_effects(mB: Povm, rho_bp: HermitianOperator) -> np.ndarray:
    mb = _stack(mB.elements, mB.dims)
    return np.einsum("ylbLB,Ll->ybB", mb, rho_bp.matrix)


def build_free_distributed(mA: Povm, mB: Povm, sep: SeparableModel) -> DistributedMeasurement:
    """M_ab = sum_l p(l) M_{a|l} (x) M_{b|l} for a separable shared state."""
    dA, dAp = mA.dims
    dBp, dB = mB.dims
    if sep.local_states_A[0].dims != (dAp,) or sep.local_states_B[0].dims != (dBp,):
        raise InputError("separable model dims do not chain with the local POVMs")
    arr = 0
    for p, ra, rb in zip(sep.weights, sep.local_states_A, sep.local_states_B):
        ea = _alice_effects(mA, ra)
        eb = _bob_effects(mB, rb)
        arr = arr + p * np.einsum("xaA,ybB->xyabAB", ea, eb)
    return DistributedMeasurement.from_array(arr, Provenance("free", mA, mB, sep.state(), sep))


def alice_gradient(mB: Povm, rho: BipartiteState, weights: np.ndarray) -> np.ndarray:
    """K_a on [A, A'] with sum_ab tr[X_ab M_ab] = sum_a tr[M_a K_a].

    ``weights`` is X as (o_A, o_B, d_A, d_B, d_A, d_B); returns (o_A, dA*dA', dA*dA').
    """
    dBp, dB = mB.dims
    dAp = rho.dims[0]
    mb = _stack(mB.elements, mB.dims)
    r = rho.op.matrix.reshape(dAp, dBp, dAp, dBp)
    k = np.einsum("ylbLB,KLkl,xyABab->xAKak", mb, r, weights, optimize=True)
    oA, dA = k.shape[0], k.shape[1]
    return k.reshape(oA, dA * dAp, dA * dAp)


def bob_gradient(mA: Povm, rho: BipartiteState, weights: np.ndarray) -> np.ndarray:
    """K_b on [B', B] with sum_ab tr[X_ab M_ab] = sum_b tr[M_b K_b]."""
    dA, dAp = mA.dims
    dBp = rho.dims[1]
    ma = _stack(mA.elements, mA.dims)
    r = rho.op.matrix.reshape(dAp, dBp, dAp, dBp)
    k = np.einsum("xakAK,KLkl,xyABab->yLBlb", ma, r, weights, optimize=True)
    oB, dB = k.shape[0], k.shape[2]
    return k.reshape(oB, dBp * dB, dBp * dB)


# --- behaviours --------------------------------------------------------------

@dataclass(frozen=True)
class QuestionSet:
    states: Tuple[HermitianOperator, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if not self.states:
            raise InputError("question set is empty")
        for k, s in enumerate(self.states):
            _validate_density(s, f"question {k}")
            if s.dims != self.states[0].dims:
                raise InputError("questions must share dims")

    @property
    def dims(self):
        return self.states[0].dims

    @classmethod
    def orthogonal(cls, n: int) -> "QuestionSet":
        return cls(tuple(HermitianOperator.projector(np.eye(n)[x], (n,)) for x in range(n)))

    @classmethod
    def pauli_eigenstates(cls) -> "QuestionSet":
        """The six qubit Pauli eigenstates."""
        s = 1 / np.sqrt(2)
        kets = [[1, 0], [0, 1], [s, s], [s, -s], [s, 1j * s], [s, -1j * s]]
        return cls(tuple(HermitianOperator.projector(k, (2,)) for k in kets))


@dataclass(frozen=True, eq=False)
class Behaviour:
    """p(a, b | x, y) stored as table[a, b, x, y]."""

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 4:
            raise InputError(f"behaviour table must be 4-dimensional, got shape {t.shape}")
        if np.any(t < -TOL):
            raise InputError("behaviour has negative probabilities")
        if np.max(np.abs(t.sum(axis=(0, 1)) - 1.0)) > TOL:
            raise InputError("behaviour is not normalized for every (x, y)")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)


def behaviour(m: DistributedMeasurement, qA: QuestionSet, qB: QuestionSet) -> Behaviour:
    """p(a,b|x,y) = tr[M_ab (w_x (x) w_y)]."""
    dA, dB = m.dims
    if qA.dims != (dA,) or qB.dims != (dB,):
        raise InputError(f"question dims {list(qA.dims)}, {list(qB.dims)} do not match measurement {list(m.dims)}")
    arr = m.array()
    wa = np.stack([s.matrix for s in qA.states])
    wb = np.stack([s.matrix for s in qB.states])
    table = np.einsum("xyabAB,iAa,jBb->xyij", arr, wa, wb, optimize=True).real
    return Behaviour(table)


# --- simulation --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SimulationSubroutine:
    """Shared randomness, local pre-processing channels and post-processing.

    ``post_A[l][a, i]`` is p(a | i, l); channels map the new input space into
    the original one (their adjoints act on measurement elements).
    """

    weights: Tuple[float, ...]
    post_A: Tuple[np.ndarray, ...]
    post_B: Tuple[np.ndarray, ...]
    pre_A: Tuple[LinearMapOnOperators, ...]
    pre_B: Tuple[LinearMapOnOperators, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", tuple(float(v) for v in w))
        n = len(w)
        for name in ("post_A", "post_B", "pre_A", "pre_B"):
            value = tuple(getattr(self, name))
            if len(value) != n:
                raise InputError(f"{name} has {len(value)} entries for {n} shared-randomness values")
            object.__setattr__(self, name, value)
        if n == 0 or np.any(w < -TOL) or abs(w.sum() - 1.0) > TOL:
            raise InputError(f"subroutine weights are not a probability vector: {w}")
        for name in ("post_A", "post_B"):
            mats = []
            for k, p in enumerate(getattr(self, name)):
                p = np.array(p, dtype=float)
                if p.ndim != 2 or np.any(p < -TOL) or np.max(np.abs(p.sum(axis=0) - 1.0)) > TOL:
                    raise InputError(f"{name}[{k}] is not a column-stochastic matrix")
                p.setflags(write=False)
                mats.append(p)
            object.__setattr__(self, name, tuple(mats))
        for name in ("pre_A", "pre_B"):
            for k, ch in enumerate(getattr(self, name)):
                if not ch.trace_preserving:
                    raise InputError(f"{name}[{k}] is not trace preserving")

    @property
    def input_outcomes(self) -> Tuple[int, int]:
        return self.post_A[0].shape[1], self.post_B[0].shape[1]

    @property
    def output_outcomes(self) -> Tuple[int, int]:
        return self.post_A[0].shape[0], self.post_B[0].shape[0]


def identity_subroutine(dims: Tuple[int, int], outcomes: Tuple[int, int]) -> SimulationSubroutine:
    dA, dB = dims
    oA, oB = outcomes
    return SimulationSubroutine(
        (1.0,), (np.eye(oA),), (np.eye(oB),),
        (LinearMapOnOperators.identity((dA,)),), (LinearMapOnOperators.identity((dB,)),),
    )


def relabeling_subroutine(dims: Tuple[int, int], f_a: Sequence[int], f_b: Sequence[int],
                          outcomes: Tuple[int, int]) -> SimulationSubroutine:
    """Deterministic outcome relabeling a -> f_a[a], b -> f_b[b]."""
    pa = np.zeros((outcomes[0], len(f_a)))
    pa[list(f_a), np.arange(len(f_a))] = 1.0
    pb = np.zeros((outcomes[1], len(f_b)))
    pb[list(f_b), np.arange(len(f_b))] = 1.0
    return SimulationSubroutine(
        (1.0,), (pa,), (pb,),
        (LinearMapOnOperators.identity((dims[0],)),), (LinearMapOnOperators.identity((dims[1],)),),
    )


def _heisenberg(ch: LinearMapOnOperators) -> List[np.ndarray]:
    return list(adjoint_map(ch).kraus)


def simulate(m: DistributedMeasurement, s: SimulationSubroutine) -> DistributedMeasurement:
    """M'_ab = sum p(l) p(a|i,l) p(b|j,l) (E_l^dag (x) N_l^dag)[M_ij]."""
    dA, dB = m.dims
    oA, oB = m.outcomes
    if s.input_outcomes != (oA, oB):
        raise InputError(f"subroutine expects outcomes {s.input_outcomes}, measurement has {(oA, oB)}")
    arr = m.array().reshape(oA, oB, dA * dB, dA * dB)
    out = 0
    for p, pa, pb, ea, nb in zip(s.weights, s.post_A, s.post_B, s.pre_A, s.pre_B):
        if _d(ea.output_dims) != dA or _d(nb.output_dims) != dB:
            raise InputError("subroutine channels do not map into the measurement's input spaces")
        new_a, new_b = _d(ea.input_dims), _d(nb.input_dims)
        transformed = 0
        for ka in _heisenberg(ea):
            for kb in _heisenberg(nb):
                k = np.kron(ka, kb)
                transformed = transformed + np.einsum("ij,xyjk,lk->xyil", k, arr, k.conj(), optimize=True)
        mixed = np.einsum("ai,bj,ijxy->abxy", pa, pb, transformed, optimize=True)
        out = out + p * mixed
    oA2, oB2 = s.output_outcomes
    return DistributedMeasurement.from_array(out.reshape(oA2, oB2, new_a, new_b, new_a, new_b))


def compose_subroutines(outer: SimulationSubroutine, inner: SimulationSubroutine) -> SimulationSubroutine:
    """The subroutine equivalent to applying ``inner`` first, then ``outer``."""
    weights, post_a, post_b, pre_a, pre_b = [], [], [], [], []
    for p, pa1, pb1, ea1, nb1 in zip(inner.weights, inner.post_A, inner.post_B, inner.pre_A, inner.pre_B):
        for q, pa2, pb2, ea2, nb2 in zip(outer.weights, outer.post_A, outer.post_B, outer.pre_A, outer.pre_B):
            weights.append(p * q)
            post_a.append(pa2 @ pa1)
            post_b.append(pb2 @ pb1)
            pre_a.append(compose_maps(ea1, ea2))
            pre_b.append(compose_maps(nb1, nb2))
    return SimulationSubroutine(tuple(weights), tuple(post_a), tuple(post_b), tuple(pre_a), tuple(pre_b))


# --- teleportation ---------------------------------------------------------------

@dataclass(frozen=True)
class TeleportationInstrument:
    """Choi operators J_a on [V, B'] of the subchannels A -> B'."""

    choi: Tuple[HermitianOperator, ...]
    provenance: Optional[Provenance] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "choi", tuple(self.choi))
        if not self.choi:
            raise InputError("instrument has no outcomes")
        dims = self.choi[0].dims
        if len(dims) != 2:
            raise InputError(f"Choi operators need dims [d_V, d_B'], got {list(dims)}")
        for k, j in enumerate(self.choi):
            if j.dims != dims:
                raise InputError(f"Choi operator {k} has dims {list(j.dims)}")
            if not j.is_psd(TOL):
                raise InputError(f"Choi operator {k} is not PSD (lambda_min={j.eigvalsh()[0]:.3e})")
        total = sum(self.choi)
        rho_b = self.output_state()
        _validate_density(rho_b, "instrument output state")
        expected = tensor(HermitianOperator.identity((dims[0],)) / dims[0], rho_b)
        err = float(np.max(np.abs((total - expected).matrix)))
        if err > NO_SIGNALLING_TOL:
            raise InputError(f"instrument is signalling (residual {err:.3e})")

    @property
    def dims(self):
        return self.choi[0].dims

    @property
    def outcomes(self) -> int:
        return len(self.choi)

    def output_state(self) -> HermitianOperator:
        """rho_B' with sum_a J_a = 1/d_V (x) rho_B'."""
        return partial_trace(sum(self.choi), [1])

    def apply(self, a: int, sigma: HermitianOperator) -> HermitianOperator:
        """(Lambda_a (x) id)[sigma] for sigma on [V, X]; returns an operator on [B', X]."""
        dV, dBp = self.dims
        if sigma.dims[0] != dV or len(sigma.dims) != 2:
            raise InputError(f"input dims {list(sigma.dims)} do not start with d_V={dV}")
        dX = sigma.dims[1]
        s4 = sigma.matrix.reshape(dV, dX, dV, dX)
        j4 = self.choi[a].matrix.reshape(dV, dBp, dV, dBp)
        out = dV * np.einsum("iyjz,iojp->oypz", s4, j4, optimize=True)
        return HermitianOperator.hermitian_part(out.reshape(dBp * dX, dBp * dX), (dBp, dX))


def teleportation_instrument(mA: Povm, rho: BipartiteState) -> TeleportationInstrument:
    """J_a = tr_{AA'}[(1_V (x) M_a (x) 1_B')(phi+_{VA} (x) rho)]."""
    dA, dAp = mA.dims
    if rho.dims[0] != dAp:
        raise InputError(f"state dims {list(rho.dims)} do not chain with POVM dims {list(mA.dims)}")
    dBp = rho.dims[1]
    phi = max_entangled(dA).matrix.reshape(dA, dA, dA, dA)
    r = rho.op.matrix.reshape(dAp, dBp, dAp, dBp)
    choi = []
    for e in mA.elements:
        m4 = e.matrix.reshape(dA, dAp, dA, dAp)
        j = np.einsum("akAK,vAwa,Kbkc->vbwc", m4, phi, r, optimize=True)
        choi.append(HermitianOperator.hermitian_part(j.reshape(dA * dBp, dA * dBp), (dA, dBp)))
    return TeleportationInstrument(tuple(choi), Provenance("quantum", alice=mA, state=rho))


def measure_instrument(t: TeleportationInstrument, mB: Povm) -> DistributedMeasurement:
    """Distributed measurement obtained when Bob measures [B', B] after the instrument.

    M_ab = d_V sum_{o,p} J_a[(i,o),(j,p)] M_b[(p,.),(o,.)], arranged on [A, B].
    """
    dV, dBp = t.dims
    if len(mB.dims) != 2 or mB.dims[0] != dBp:
        raise InputError(f"Bob's POVM dims {list(mB.dims)} do not start with d_B'={dBp}")
    dB = mB.dims[1]
    j = np.stack([c.matrix.reshape(dV, dBp, dV, dBp) for c in t.choi])
    mb = _stack(mB.elements, mB.dims)
    arr = dV * np.einsum("xiojp,ypbog->xyjbig", j, mb, optimize=True)
    prov = None
    if t.provenance is not None:
        prov = Provenance("teleportation", t.provenance.alice, mB, t.provenance.state)
    return DistributedMeasurement.from_array(arr, prov)


# --- random instances ---------------------------------------------------------

def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def random_density(d: int, rank: Optional[int] = None, rng=None) -> HermitianOperator:
    rng = _rng(rng) if not isinstance(rng, np.random.Generator) else rng
    rank = rank or d
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return HermitianOperator.hermitian_part(rho / np.trace(rho).real, (d,))


def random_state(dims: Tuple[int, int], rank: Optional[int] = None, seed=None) -> BipartiteState:
    """Ginibre state of the given rank on dims."""
    rng = _rng(seed)
    n = _d(dims)
    rank = rank or n
    if not 1 <= rank <= n:
        raise InputError(f"rank {rank} outside [1, {n}]")
    return BipartiteState(random_density(n, rank, rng).with_dims(dims))


def random_unitary(d: int, rng) -> np.ndarray:
    return unitary_group.rvs(d, random_state=rng) if d > 1 else np.ones((1, 1), dtype=complex)


def random_povm(dims, outcomes: int, seed=None) -> Povm:
    """Rows of a Haar isometry C^n -> C^{n*outcomes}, cut into outcome blocks."""
    rng = _rng(seed)
    dims = tuple(dims)
    n = _d(dims)
    v = random_unitary(n * outcomes, rng)[:, :n]
    blocks = [v[k * n:(k + 1) * n, :] for k in range(outcomes)]
    return Povm.repaired([b.conj().T @ b for b in blocks], dims)


def random_separable_model(dims: Tuple[int, int], n_terms: int = 3, seed=None) -> SeparableModel:
    rng = _rng(seed)
    w = rng.dirichlet(np.ones(n_terms))
    return SeparableModel(
        tuple(w),
        tuple(random_density(dims[0], rng.integers(1, dims[0] + 1), rng) for _ in range(n_terms)),
        tuple(random_density(dims[1], rng.integers(1, dims[1] + 1), rng) for _ in range(n_terms)),
    )


def random_channel(d: int, rng, terms: int = 2) -> LinearMapOnOperators:
    """Random mixture of Haar unitary conjugations."""
    w = rng.dirichlet(np.ones(terms))
    return LinearMapOnOperators.mixed_unitary(w, [random_unitary(d, rng) for _ in range(terms)])


def _random_stochastic(rows: int, cols: int, rng) -> np.ndarray:
    return rng.dirichlet(np.ones(rows), size=cols).T


def random_subroutine(dims: Tuple[int, int], outcomes: Tuple[int, int],
                      out_outcomes: Optional[Tuple[int, int]] = None,
                      n_lambda: int = 2, seed=None) -> SimulationSubroutine:
    """Dirichlet shared randomness and post-processing, mixed-unitary channels."""
    rng = _rng(seed)
    out_outcomes = out_outcomes or outcomes
    return SimulationSubroutine(
        tuple(rng.dirichlet(np.ones(n_lambda))),
        tuple(_random_stochastic(out_outcomes[0], outcomes[0], rng) for _ in range(n_lambda)),
        tuple(_random_stochastic(out_outcomes[1], outcomes[1], rng) for _ in range(n_lambda)),
        tuple(random_channel(dims[0], rng) for _ in range(n_lambda)),
        tuple(random_channel(dims[1], rng) for _ in range(n_lambda)),
    )


def random_free_measurement(d: int = 2, outcomes: Tuple[int, int] = (2, 2), seed=None) -> DistributedMeasurement:
    """build_free_distributed over random local POVMs and a random separable model."""
    rng = _rng(seed)
    sA, sB, sS = (int(v) for v in rng.integers(0, 2**31, size=3))
    mA = random_povm((d, d), outcomes[0], sA)
    mB = random_povm((d, d), outcomes[1], sB)
    return build_free_distributed(mA, mB, random_separable_model((d, d), 3, sS))


def bell_distributed(rho: BipartiteState) -> DistributedMeasurement:
    """Both parties perform the generalized Bell measurement on their halves."""
    dAp, dBp = rho.dims
    return build_distributed(bell_measurement(dAp), bell_measurement(dBp), rho)


# --- optimization over one POVM -----------------------------------------------

def optimal_povm(operators: Sequence[np.ndarray], dims, tol: Optional[float] = None) -> Tuple[float, Povm]:
    """max sum_a tr[M_a K_a] over POVMs {M_a} on dims; returns (value, POVM)."""
    from nlforge.conic import Cone, ProgramBuilder, solve

    builder = ProgramBuilder("optimal_povm")
    dims = tuple(dims)
    mats = [HermitianOperator.hermitian_part(k, dims) for k in operators]
    ms = [builder.variable(f"M_{a}", dims, Cone.PSD) for a in range(len(mats))]
    builder.equal("completeness", sum(m.expr() for m in ms), HermitianOperator.identity(dims))
    builder.maximize(sum(m.expr().inner(k) for m, k in zip(ms, mats)))
    sol = solve(builder.build(), tol)
    if not sol.ok:
        raise SolverError(f"POVM optimization ended with {sol.status.value}", sol)
    povm = Povm.repaired([sol.primal[m.name] for m in ms], dims)
    value = float(sum(e.inner(k) for e, k in zip(povm.elements, mats)))
    return value, povm
