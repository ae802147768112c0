"""
Dense operator algebra
Hermitian operators with subsystem bookkeeping, linear maps on operators
and the handful of multipartite primitives everything else is built from.

Subsystem indices are 0-based positions in ``dims``.
"""

import logging
from functools import reduce
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from nlforge.errors import InputError

logger = logging.getLogger(__name__)

HERMITIAN_ATOL = 1e-12
CHANNEL_ATOL = 1e-10

Dims = Tuple[int, ...]


def _as_dims(dims: Iterable[int]) -> Dims:
    out = tuple(int(d) for d in dims)
    if any(d < 1 for d in out):
        raise InputError(f"subsystem dimensions must be positive, got {list(out)}")
    return out


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    """Make the first non-negligible component of every column real positive."""
    vecs = vecs.copy()
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size:
            lead = col[nz[0]]
            vecs[:, k] = col * (np.conj(lead) / abs(lead))
    return vecs


class HermitianOperator:
    """Immutable Hermitian matrix on a tensor product of subsystems.

    ``dims`` lists the subsystem dimensions; an empty tuple denotes a scalar
    (1x1) operator. Inputs whose anti-Hermitian part is below
    ``1e-12 * max(1, max|x|)`` are symmetrized, anything larger is rejected.
    """

    __slots__ = ("_dims", "_matrix")
    __array_ufunc__ = None

    def __init__(self, matrix, dims: Optional[Iterable[int]] = None):
        m = np.array(matrix, dtype=complex)
        if m.ndim == 0:
            m = m.reshape(1, 1)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InputError(f"expected a square matrix, got shape {m.shape}")
        n = m.shape[0]
        if dims is None:
            dims = (n,) if n > 1 else ()
        dims = _as_dims(dims)
        if int(np.prod(dims, dtype=int)) != n:
            raise InputError(f"dims {list(dims)} do not match matrix side {n}")

        scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
        asym = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
        if asym > HERMITIAN_ATOL * scale:
            raise InputError(f"matrix is not Hermitian (asymmetry {asym:.3e})")
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        self._dims = dims
        self._matrix = m

    # --- constructors ---------------------------------------------------

    @classmethod
    def identity(cls, dims: Iterable[int]) -> "HermitianOperator":
        dims = _as_dims(dims)
        return cls(np.eye(int(np.prod(dims, dtype=int))), dims)

    @classmethod
    def zeros(cls, dims: Iterable[int]) -> "HermitianOperator":
        dims = _as_dims(dims)
        n = int(np.prod(dims, dtype=int))
        return cls(np.zeros((n, n)), dims)

    @classmethod
    def projector(cls, ket, dims: Optional[Iterable[int]] = None) -> "HermitianOperator":
        """|psi><psi| for an (unnormalized) ket."""
        v = np.asarray(ket, dtype=complex).reshape(-1)
        return cls(np.outer(v, v.conj()), dims if dims is not None else (v.size,))

    @classmethod
    def hermitian_part(cls, matrix, dims: Optional[Iterable[int]] = None) -> "HermitianOperator":
        """(X + X^dagger)/2 without the asymmetry check; used on solver output."""
        m = np.asarray(matrix, dtype=complex)
        return cls(0.5 * (m + m.conj().T), dims)

    # --- accessors -------------------------------------------------------

    @property
    def dims(self) -> Dims:
        return self._dims

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def size(self) -> int:
        return self._matrix.shape[0]

    def trace(self) -> float:
        return float(np.trace(self._matrix).real)

    def inner(self, other: "HermitianOperator") -> float:
        """Re tr(self * other)."""
        return float(np.real(np.vdot(self._matrix, other._matrix)))

    def eigh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Ascending eigenvalues with phase-normalized eigenvectors (columns)."""
        vals, vecs = np.linalg.eigh(self._matrix)
        return vals, _fix_phases(vecs)

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self._matrix)

    def is_psd(self, atol: float = CHANNEL_ATOL) -> bool:
        return self.size == 0 or float(self.eigvalsh()[0]) >= -atol

    def transpose(self) -> "HermitianOperator":
        return HermitianOperator(self._matrix.T, self._dims)

    def with_dims(self, dims: Iterable[int]) -> "HermitianOperator":
        return HermitianOperator(self._matrix, dims)

    def allclose(self, other: "HermitianOperator", atol: float = 1e-9) -> bool:
        return self._matrix.shape == other._matrix.shape and bool(
            np.allclose(self._matrix, other._matrix, atol=atol, rtol=0.0)
        )

    def conjugate_by(self, u: np.ndarray) -> "HermitianOperator":
        """U X U^dagger (U square, same size)."""
        u = np.asarray(u, dtype=complex)
        return HermitianOperator.hermitian_part(u @ self._matrix @ u.conj().T, self._dims)

    # --- arithmetic ------------------------------------------------------

    def _check_same(self, other: "HermitianOperator"):
        if not isinstance(other, HermitianOperator):
            return NotImplemented
        if other._dims != self._dims:
            raise InputError(f"dims mismatch: {list(self._dims)} vs {list(other._dims)}")
        return None

    def __add__(self, other):
        if self._check_same(other) is NotImplemented:
            return NotImplemented
        return HermitianOperator(self._matrix + other._matrix, self._dims)

    def __radd__(self, other):
        if isinstance(other, (int, float)) and other == 0:
            return self
        return NotImplemented

    def __sub__(self, other):
        if self._check_same(other) is NotImplemented:
            return NotImplemented
        return HermitianOperator(self._matrix - other._matrix, self._dims)

    def __neg__(self):
        return HermitianOperator(-self._matrix, self._dims)

    def __mul__(self, scalar):
        if isinstance(scalar, HermitianOperator) or np.iscomplexobj(scalar):
            return NotImplemented
        return HermitianOperator(float(scalar) * self._matrix, self._dims)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __repr__(self) -> str:
        return f"HermitianOperator(dims={list(self._dims)}, trace={self.trace():.6g})"


def identity(dims: Iterable[int]) -> HermitianOperator:
    return HermitianOperator.identity(dims)


def tensor(*ops: HermitianOperator) -> HermitianOperator:
    """Kronecker product; dims are concatenated in argument order."""
    if not ops:
        return HermitianOperator(np.ones((1, 1)), ())
    matrix = reduce(np.kron, (op.matrix for op in ops))
    dims = sum((op.dims for op in ops), ())
    return HermitianOperator(matrix, dims)


def _check_indices(dims: Dims, indices: Iterable[int]) -> List[int]:
    out = sorted(set(int(i) for i in indices))
    for i in out:
        if not 0 <= i < len(dims):
            raise InputError(f"subsystem index {i} out of range for dims {list(dims)}")
    return out


def partial_trace(x: HermitianOperator, keep: Iterable[int]) -> HermitianOperator:
    """Trace out every subsystem not listed in ``keep``.

    The kept subsystems stay in their original order. An empty ``keep``
    returns the 1x1 operator holding tr(x).
    """
    dims = x.dims
    kept = _check_indices(dims, keep)
    traced = [k for k in range(len(dims)) if k not in kept]
    t = x.matrix.reshape(dims + dims)
    n = len(dims)
    for k in reversed(traced):
        t = np.trace(t, axis1=k, axis2=k + n)
        n -= 1
    out_dims = tuple(dims[k] for k in kept)
    side = int(np.prod(out_dims, dtype=int))
    return HermitianOperator.hermitian_part(t.reshape(side, side), out_dims)


def partial_transpose(x: HermitianOperator, subsystem: Union[int, Iterable[int]]) -> HermitianOperator:
    """Transpose the listed tensor factor(s) in place."""
    dims = x.dims
    subs = _check_indices(dims, [subsystem] if np.isscalar(subsystem) else subsystem)
    n = len(dims)
    axes = list(range(2 * n))
    for k in subs:
        axes[k], axes[k + n] = axes[k + n], axes[k]
    t = x.matrix.reshape(dims + dims).transpose(axes)
    return HermitianOperator(t.reshape(x.size, x.size), dims)


def permute(x: HermitianOperator, order: Sequence[int]) -> HermitianOperator:
    """Reorder tensor factors: factor ``order[k]`` of x becomes factor k."""
    dims = x.dims
    order = [int(o) for o in order]
    if sorted(order) != list(range(len(dims))):
        raise InputError(f"{order} is not a permutation of {len(dims)} subsystems")
    n = len(dims)
    t = x.matrix.reshape(dims + dims).transpose(order + [n + o for o in order])
    return HermitianOperator(t.reshape(x.size, x.size), tuple(dims[o] for o in order))


def max_entangled(d: int) -> HermitianOperator:
    """Normalized projector onto sum_i |ii>/sqrt(d)."""
    if d < 2:
        raise InputError(f"max_entangled needs d >= 2, got {d}")
    ket = np.eye(d).reshape(-1)
    # 1/d exactly, not (1/sqrt(d))^2
    return HermitianOperator(np.outer(ket, ket) / d, (d, d))


def heisenberg_weyl(d: int) -> List[np.ndarray]:
    """The d^2 unitaries X^j Z^k, listed with index j*d + k."""
    if d < 2:
        raise InputError(f"heisenberg_weyl needs d >= 2, got {d}")
    shift = np.roll(np.eye(d), 1, axis=0)
    omega = np.exp(2j * np.pi / d)
    phase = np.diag(omega ** np.arange(d))
    ops = []
    for j in range(d):
        xj = np.linalg.matrix_power(shift, j)
        for k in range(d):
            ops.append(xj @ np.linalg.matrix_power(phase, k))
    return ops


def min_eigenpair(x: HermitianOperator) -> Tuple[float, np.ndarray]:
    vals, vecs = x.eigh()
    return float(vals[0]), vecs[:, 0]


def min_eigenvalue(x: HermitianOperator) -> float:
    return float(x.eigvalsh()[0])


class LinearMapOnOperators:
    """A completely positive map given by Kraus operators or a Choi operator.

    The Choi operator follows J = sum_ij |i><j| (x) Phi(|i><j|) on
    ``input_dims + output_dims``. Choi input is converted to Kraus form on
    construction. By default the map must be trace non-increasing; pass
    ``trace_nonincreasing=False`` for Heisenberg-picture (adjoint) maps.
    """

    def __init__(
        self,
        input_dims: Iterable[int],
        output_dims: Iterable[int],
        kraus: Optional[Sequence[np.ndarray]] = None,
        choi: Optional[HermitianOperator] = None,
        trace_nonincreasing: bool = True,
    ):
        self.input_dims = _as_dims(input_dims)
        self.output_dims = _as_dims(output_dims)
        d_in = int(np.prod(self.input_dims, dtype=int))
        d_out = int(np.prod(self.output_dims, dtype=int))
        if (kraus is None) == (choi is None):
            raise InputError("give exactly one of kraus= or choi=")

        if choi is not None:
            if choi.size != d_in * d_out:
                raise InputError(f"Choi operator of size {choi.size} does not fit {d_in}->{d_out}")
            vals, vecs = np.linalg.eigh(choi.matrix)
            if vals[0] < -CHANNEL_ATOL:
                raise InputError(f"Choi operator is not PSD (lambda_min={vals[0]:.3e})")
            kraus = [
                (np.sqrt(lam) * vecs[:, k]).reshape(d_in, d_out).T
                for k, lam in enumerate(vals)
                if lam > CHANNEL_ATOL
            ] or [np.zeros((d_out, d_in))]

        ks = []
        for k in kraus:
            k = np.array(k, dtype=complex)
            if k.shape != (d_out, d_in):
                raise InputError(f"Kraus operator shape {k.shape} does not fit {d_in}->{d_out}")
            k.setflags(write=False)
            ks.append(k)
        self._kraus = tuple(ks)

        gram = sum(k.conj().T @ k for k in self._kraus)
        lam_max = float(np.linalg.eigvalsh(gram)[-1])
        if trace_nonincreasing and lam_max > 1.0 + CHANNEL_ATOL:
            raise InputError(f"map increases trace (lambda_max(sum K^dag K)={lam_max:.12g})")
        self.trace_preserving = bool(np.allclose(gram, np.eye(d_in), atol=CHANNEL_ATOL, rtol=0.0))

    @property
    def kraus(self) -> Tuple[np.ndarray, ...]:
        return self._kraus

    @property
    def choi(self) -> HermitianOperator:
        vs = [k.T.reshape(-1) for k in self._kraus]
        j = sum(np.outer(v, v.conj()) for v in vs)
        return HermitianOperator.hermitian_part(j, self.input_dims + self.output_dims)

    @classmethod
    def identity(cls, dims: Iterable[int]) -> "LinearMapOnOperators":
        dims = _as_dims(dims)
        return cls(dims, dims, kraus=[np.eye(int(np.prod(dims, dtype=int)))])

    @classmethod
    def unitary(cls, u: np.ndarray, dims: Optional[Iterable[int]] = None) -> "LinearMapOnOperators":
        u = np.asarray(u, dtype=complex)
        dims = _as_dims(dims) if dims is not None else (u.shape[0],)
        return cls(dims, dims, kraus=[u])

    @classmethod
    def mixed_unitary(cls, weights: Sequence[float], unitaries: Sequence[np.ndarray],
                      dims: Optional[Iterable[int]] = None) -> "LinearMapOnOperators":
        """sum_k w_k U_k (.) U_k^dagger."""
        d = np.asarray(unitaries[0]).shape[0]
        dims = _as_dims(dims) if dims is not None else (d,)
        return cls(dims, dims, kraus=[np.sqrt(w) * np.asarray(u) for w, u in zip(weights, unitaries) if w > 0])

    @classmethod
    def depolarizing(cls, d: int) -> "LinearMapOnOperators":
        """X -> tr(X) 1/d."""
        ops = heisenberg_weyl(d)
        return cls.mixed_unitary([1.0 / d**2] * d**2, ops)

    def __call__(self, x: HermitianOperator) -> HermitianOperator:
        return apply_map(self, x)

    def __repr__(self) -> str:
        return (
            f"LinearMapOnOperators({list(self.input_dims)} -> {list(self.output_dims)}, "
            f"{len(self._kraus)} Kraus, tp={self.trace_preserving})"
        )


def apply_map(m: LinearMapOnOperators, x: HermitianOperator) -> HermitianOperator:
    if x.dims != m.input_dims:
        raise InputError(f"map expects dims {list(m.input_dims)}, got {list(x.dims)}")
    out = sum(k @ x.matrix @ k.conj().T for k in m.kraus)
    return HermitianOperator.hermitian_part(out, m.output_dims)


def apply_choi(choi: HermitianOperator, x: HermitianOperator, output_dims: Iterable[int]) -> HermitianOperator:
    """Phi(X) = tr_in[(X^T (x) 1) J] for a Choi operator on in (x) out."""
    output_dims = _as_dims(output_dims)
    d_in = x.size
    d_out = int(np.prod(output_dims, dtype=int))
    if choi.size != d_in * d_out:
        raise InputError(f"Choi size {choi.size} does not fit {d_in}->{d_out}")
    j4 = choi.matrix.reshape(d_in, d_out, d_in, d_out)
    out = np.einsum("ij,iojp->op", x.matrix, j4)
    return HermitianOperator.hermitian_part(out, output_dims)


def adjoint_map(m: LinearMapOnOperators) -> LinearMapOnOperators:
    """Heisenberg-picture dual: tr(adj(Y) X) = tr(Y m(X))."""
    return LinearMapOnOperators(
        m.output_dims,
        m.input_dims,
        kraus=[k.conj().T for k in m.kraus],
        trace_nonincreasing=False,
    )


def kron_maps(a: LinearMapOnOperators, b: LinearMapOnOperators) -> LinearMapOnOperators:
    """a (x) b acting on a.input (x) b.input."""
    return LinearMapOnOperators(
        a.input_dims + b.input_dims,
        a.output_dims + b.output_dims,
        kraus=[np.kron(ka, kb) for ka in a.kraus for kb in b.kraus],
        trace_nonincreasing=False,
    )


def compose_maps(outer: LinearMapOnOperators, inner: LinearMapOnOperators) -> LinearMapOnOperators:
    """outer o inner."""
    if outer.input_dims != inner.output_dims:
        raise InputError(f"cannot compose {list(inner.output_dims)} into {list(outer.input_dims)}")
    return LinearMapOnOperators(
        inner.input_dims,
        outer.output_dims,
        kraus=[k1 @ k2 for k1 in outer.kraus for k2 in inner.kraus],
        trace_nonincreasing=False,
    )
