"""
Operator algebra: partial traces, partial transposes, permutations and maps.
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlforge.errors import InputError
from nlforge.linalg import (
    HermitianOperator,
    LinearMapOnOperators,
    adjoint_map,
    apply_choi,
    apply_map,
    compose_maps,
    heisenberg_weyl,
    kron_maps,
    max_entangled,
    min_eigenvalue,
    partial_trace,
    partial_transpose,
    permute,
    tensor,
)
from nlforge.qobj import random_channel, random_density

seeds = st.integers(min_value=0, max_value=2**31 - 1)


def _random_hermitian(n, rng):
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return g + g.conj().T


class TestHermitianOperator:
    def test_rejects_non_hermitian(self):
        """Matrices with a visible anti-Hermitian part are refused."""
        with pytest.raises(InputError):
            HermitianOperator(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_symmetrizes_rounding_noise(self):
        m = np.array([[1.0, 1e-14j], [0.0, 1.0]])
        op = HermitianOperator(m)
        assert np.allclose(op.matrix, op.matrix.conj().T, atol=0.0)

    def test_dims_must_match_size(self):
        with pytest.raises(InputError):
            HermitianOperator(np.eye(4), (2, 3))

    def test_arithmetic_checks_dims(self):
        """Adding operators on different factorizations is an input error."""
        with pytest.raises(InputError):
            HermitianOperator.identity((2, 2)) + HermitianOperator.identity((4,))

    def test_min_eigenvalue(self):
        assert np.isclose(min_eigenvalue(partial_transpose(max_entangled(2), 1)), -0.5)
        assert np.isclose(min_eigenvalue(max_entangled(3)), 0.0)

    def test_eigh_phase_convention(self):
        """Eigenvectors come back with a real positive leading entry."""
        rng = np.random.default_rng(3)
        op = HermitianOperator(_random_hermitian(3, rng))
        _, vecs = op.eigh()
        for k in range(3):
            lead = vecs[np.argmax(np.abs(vecs[:, k]) > 1e-12), k]
            assert abs(lead.imag) < 1e-12 and lead.real > 0


class TestPartialOperations:
    @settings(max_examples=25, deadline=None)
    @given(seeds)
    def test_partial_trace_of_product(self, seed):
        """tr_B(a (x) b) = tr(b) a."""
        rng = np.random.default_rng(seed)
        a = random_density(2, rng=rng)
        b = random_density(3, rng=rng)
        assert partial_trace(tensor(a, b), [0]).allclose(a)
        assert partial_trace(tensor(a, b), [1]).allclose(b)

    @settings(max_examples=25, deadline=None)
    @given(seeds)
    def test_partial_transpose_is_involution(self, seed):
        rng = np.random.default_rng(seed)
        x = HermitianOperator(_random_hermitian(6, rng), (2, 3))
        for k in (0, 1):
            assert partial_transpose(partial_transpose(x, k), k).allclose(x)

    @settings(max_examples=25, deadline=None)
    @given(seeds)
    def test_partial_transpose_preserves_trace_inner(self, seed):
        """<X^{T_B}, Y^{T_B}> = <X, Y>."""
        rng = np.random.default_rng(seed)
        x = HermitianOperator(_random_hermitian(4, rng), (2, 2))
        y = HermitianOperator(_random_hermitian(4, rng), (2, 2))
        assert np.isclose(partial_transpose(x, 1).inner(partial_transpose(y, 1)), x.inner(y))

    def test_phi_plus_is_npt(self):
        """The partial transpose of phi+ is the swap over d, with eigenvalue -1/d."""
        for d in (2, 3):
            vals = partial_transpose(max_entangled(d), 1).eigvalsh()
            assert np.isclose(vals[0], -1.0 / d)

    def test_permute_swaps_factors(self):
        rng = np.random.default_rng(11)
        a, b = random_density(2, rng=rng), random_density(3, rng=rng)
        assert permute(tensor(a, b), [1, 0]).allclose(tensor(b, a))

    def test_out_of_range_subsystem(self):
        with pytest.raises(InputError):
            partial_trace(HermitianOperator.identity((2, 2)), [2])


class TestHeisenbergWeyl:
    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_trace_orthogonal_unitaries(self, d):
        """tr(U_a^dagger U_b) = d delta_ab."""
        ops = heisenberg_weyl(d)
        assert len(ops) == d * d
        gram = np.array([[np.trace(u.conj().T @ v) for v in ops] for u in ops])
        assert np.allclose(gram, d * np.eye(d * d))
        for u in ops:
            assert np.allclose(u.conj().T @ u, np.eye(d))


class TestLinearMaps:
    @settings(max_examples=20, deadline=None)
    @given(seeds)
    def test_choi_and_kraus_agree(self, seed):
        """Applying the Choi operator equals applying the Kraus form."""
        rng = np.random.default_rng(seed)
        ch = random_channel(2, rng)
        x = random_density(2, rng=rng)
        assert apply_choi(ch.choi, x, ch.output_dims).allclose(apply_map(ch, x))
        rebuilt = LinearMapOnOperators(ch.input_dims, ch.output_dims, choi=ch.choi)
        assert apply_map(rebuilt, x).allclose(apply_map(ch, x))

    @settings(max_examples=20, deadline=None)
    @given(seeds)
    def test_adjoint_duality(self, seed):
        """tr(adj(Y) X) = tr(Y m(X))."""
        rng = np.random.default_rng(seed)
        ch = random_channel(3, rng)
        x = random_density(3, rng=rng)
        y = HermitianOperator(_random_hermitian(3, rng))
        assert np.isclose(apply_map(adjoint_map(ch), y).inner(x), y.inner(apply_map(ch, x)))

    def test_composition_and_tensoring(self):
        rng = np.random.default_rng(5)
        a, b = random_channel(2, rng), random_channel(2, rng)
        x = random_density(2, rng=rng)
        assert apply_map(compose_maps(a, b), x).allclose(apply_map(a, apply_map(b, x)))
        y = random_density(2, rng=rng)
        assert apply_map(kron_maps(a, b), tensor(x, y)).allclose(tensor(apply_map(a, x), apply_map(b, y)))

    def test_depolarizing_channel(self):
        ch = LinearMapOnOperators.depolarizing(3)
        x = random_density(3, rng=np.random.default_rng(0))
        assert apply_map(ch, x).allclose(HermitianOperator.identity((3,)) / 3)
        assert ch.trace_preserving

    def test_trace_increasing_map_rejected(self):
        with pytest.raises(InputError):
            LinearMapOnOperators((2,), (2,), kraus=[2 * np.eye(2)])
