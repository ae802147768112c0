"""
Quantum objects: POVMs, states, distributed measurements, subroutines and
teleportation instruments.
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlforge import qobj
from nlforge.errors import InputError
from nlforge.linalg import HermitianOperator, max_entangled, partial_transpose

seeds = st.integers(min_value=0, max_value=2**31 - 1)


class TestPovm:
    def test_rejects_incomplete_elements(self):
        """Elements that do not sum to the identity are refused."""
        with pytest.raises(InputError):
            qobj.Povm((HermitianOperator(np.diag([1.0, 0.0])),))

    def test_rejects_non_psd_element(self):
        with pytest.raises(InputError):
            qobj.Povm((HermitianOperator(np.diag([1.5, 1.0])), HermitianOperator(np.diag([-0.5, 0.0]))))

    def test_repaired_projects_onto_povm(self):
        """Slightly negative, slightly incomplete solver output becomes a valid POVM."""
        noisy = [np.diag([1.0 + 1e-7, -1e-8]), np.diag([-1e-8, 1.0 - 1e-7])]
        povm = qobj.Povm.repaired(noisy, (2,))
        assert povm.outcomes == 2
        assert povm[0].allclose(HermitianOperator(np.diag([1.0, 0.0])), atol=1e-6)

    def test_bell_measurement_order(self, bell):
        """For d = 2 the elements are Phi+, Phi-, Psi+, Psi-."""
        s = 1 / np.sqrt(2)
        kets = [[s, 0, 0, s], [s, 0, 0, -s], [0, s, s, 0], [0, s, -s, 0]]
        for element, ket in zip(bell.elements, kets):
            assert element.allclose(HermitianOperator.projector(ket, (2, 2)))

    def test_bell_fixture_matches_builtin(self, bell, fixtures_dir):
        from nlforge.documents import load_povm

        loaded = load_povm(str(fixtures_dir / "bell_povm_2.json"))
        for a, b in zip(loaded.elements, bell.elements):
            assert a.allclose(b)

    def test_controlled_povm_is_complete(self):
        z = qobj.Povm.computational(2)
        x = qobj.Povm.from_basis(np.array([[1, 1], [1, -1]]) / np.sqrt(2))
        controlled = qobj.controlled_povm([z, x], side="A")
        assert controlled.dims == (2, 2)
        assert controlled.outcomes == 2


class TestStates:
    def test_isotropic_bounds(self):
        with pytest.raises(InputError):
            qobj.isotropic_state(2, 1.5)

    def test_isotropic_fixture(self, fixtures_dir):
        from nlforge.documents import load_state

        loaded = load_state(str(fixtures_dir / "isotropic_0.5.json"))
        assert loaded.op.allclose(qobj.isotropic_state(2, 0.5).op)

    def test_pure_entangled_state_normalizes(self):
        state = qobj.pure_entangled_state([3.0, 4.0])
        assert np.isclose(state.op.trace(), 1.0)
        assert np.isclose(state.marginal(0).matrix[0, 0].real, 9 / 25)

    def test_bipartite_state_needs_two_factors(self):
        with pytest.raises(InputError):
            qobj.BipartiteState(HermitianOperator.identity((4,)) / 4)

    @settings(max_examples=10, deadline=None)
    @given(seeds)
    def test_separable_model_is_ppt(self, seed):
        """States from explicit separable decompositions have a PSD partial transpose."""
        rho = qobj.random_separable_model((2, 2), 3, seed).state()
        assert partial_transpose(rho.op, 1).is_psd(1e-10)

    def test_random_state_is_reproducible(self):
        a = qobj.random_state((2, 2), 2, seed=42)
        b = qobj.random_state((2, 2), 2, seed=42)
        assert a.op.allclose(b.op, atol=0.0)
        assert np.sum(a.op.eigvalsh() > 1e-10) == 2


class TestDistributedMeasurement:
    def test_bell_phi_plus_elements(self, bell_phi_plus):
        """Bell/Bell on phi+ gives sixteen rank-one elements of weight 1/4."""
        assert bell_phi_plus.outcomes == (4, 4)
        assert bell_phi_plus.dims == (2, 2)
        for row in bell_phi_plus.elements:
            for e in row:
                assert np.isclose(e.trace(), 0.25)
                assert np.sum(e.eigvalsh() > 1e-10) == 1

    @settings(max_examples=10, deadline=None)
    @given(seeds)
    def test_quantum_construction_is_no_signalling(self, seed):
        rng = np.random.default_rng(seed)
        mA = qobj.random_povm((2, 2), 2, int(rng.integers(1 << 30)))
        mB = qobj.random_povm((2, 2), 3, int(rng.integers(1 << 30)))
        rho = qobj.random_state((2, 2), seed=int(rng.integers(1 << 30)))
        m = qobj.build_distributed(mA, mB, rho)
        assert m.no_signalling_residual() <= 1e-10
        assert m.outcomes == (2, 3)

    @settings(max_examples=10, deadline=None)
    @given(seeds)
    def test_free_construction_is_ppt(self, seed):
        """Measurements from separable states have PPT elements."""
        m = qobj.random_free_measurement(2, (2, 2), seed)
        assert m.provenance.kind == "free"
        for row in m.elements:
            for e in row:
                assert partial_transpose(e, 1).is_psd(1e-10)

    def test_signalling_elements_allowed_without_provenance(self, bell):
        """A hand-loaded Bell-basis table is accepted but reports its signalling."""
        elements = ((bell[0], bell[1]), (bell[2], bell[3]))
        m = qobj.DistributedMeasurement(elements)
        assert m.no_signalling_residual() > 0.1
        with pytest.raises(InputError):
            qobj.DistributedMeasurement(elements, qobj.Provenance("quantum"))

    def test_rejects_ragged_table(self, bell):
        with pytest.raises(InputError):
            qobj.DistributedMeasurement(((bell[0], bell[1]), (bell[2],)))

    def test_mix_and_relabel(self, bell_phi_plus, free_measurement):
        """relabeled sums outcomes; mix interpolates element-wise."""
        coarse = bell_phi_plus.relabeled([0, 0, 1, 1], [0, 1, 0, 1], outcomes=(2, 2))
        assert coarse.outcomes == (2, 2)
        merged = sum(bell_phi_plus.elements[a][b] for a in (0, 1) for b in (0, 2))
        assert coarse.elements[0][0].allclose(merged)
        mixed = coarse.mix(free_measurement, 0.25)
        expected = 0.25 * coarse.elements[1][0] + 0.75 * free_measurement.elements[1][0]
        assert mixed.elements[1][0].allclose(expected)

    def test_behaviour_normalized(self, bell_phi_plus):
        qa = qobj.QuestionSet.pauli_eigenstates()
        b = qobj.behaviour(bell_phi_plus, qa, qa)
        assert b.table.shape == (4, 4, 6, 6)
        assert np.allclose(b.table.sum(axis=(0, 1)), 1.0)


class TestSubroutines:
    def test_identity_subroutine_is_trivial(self, bell_phi_plus):
        s = qobj.identity_subroutine(bell_phi_plus.dims, bell_phi_plus.outcomes)
        out = qobj.simulate(bell_phi_plus, s)
        for a in range(4):
            for b in range(4):
                assert out.elements[a][b].allclose(bell_phi_plus.elements[a][b])

    def test_relabeling_subroutine_matches_relabeled(self, bell_phi_plus):
        f_a, f_b = [1, 0, 1, 0], [0, 0, 1, 1]
        s = qobj.relabeling_subroutine(bell_phi_plus.dims, f_a, f_b, (2, 2))
        direct = bell_phi_plus.relabeled(f_a, f_b, outcomes=(2, 2))
        simulated = qobj.simulate(bell_phi_plus, s)
        for a in range(2):
            for b in range(2):
                assert simulated.elements[a][b].allclose(direct.elements[a][b])

    @settings(max_examples=5, deadline=None)
    @given(seeds)
    def test_composition(self, seed):
        """simulate(simulate(m, inner), outer) = simulate(m, compose(outer, inner))."""
        m = qobj.random_free_measurement(2, (2, 2), seed)
        inner = qobj.random_subroutine(m.dims, m.outcomes, out_outcomes=(3, 2), seed=seed + 1)
        outer = qobj.random_subroutine(m.dims, (3, 2), out_outcomes=(2, 2), seed=seed + 2)
        twice = qobj.simulate(qobj.simulate(m, inner), outer)
        once = qobj.simulate(m, qobj.compose_subroutines(outer, inner))
        for a in range(2):
            for b in range(2):
                assert twice.elements[a][b].allclose(once.elements[a][b], atol=1e-9)

    def test_simulation_outputs_valid_measurement(self, bell_phi_plus):
        s = qobj.random_subroutine(bell_phi_plus.dims, bell_phi_plus.outcomes, seed=3)
        out = qobj.simulate(bell_phi_plus, s)
        assert out.no_signalling_residual() <= 1e-9

    def test_outcome_mismatch(self, bell_phi_plus):
        s = qobj.identity_subroutine(bell_phi_plus.dims, (2, 2))
        with pytest.raises(InputError):
            qobj.simulate(bell_phi_plus, s)

    def test_stochastic_matrices_checked(self):
        with pytest.raises(InputError):
            qobj.SimulationSubroutine((1.0,), (np.ones((2, 2)),), (np.eye(2),),
                                      (qobj.LinearMapOnOperators.identity((2,)),),
                                      (qobj.LinearMapOnOperators.identity((2,)),))


class TestTeleportation:
    def test_ideal_instrument_matches_fixture(self, bell, phi_plus, fixtures_dir):
        from nlforge.documents import load_instrument

        built = qobj.teleportation_instrument(bell, phi_plus)
        loaded = load_instrument(str(fixtures_dir / "ideal_teleportation.json"))
        assert loaded.outcomes == built.outcomes == 4
        for a, b in zip(loaded.choi, built.choi):
            assert a.allclose(b)
        assert built.output_state().allclose(HermitianOperator.identity((2,)) / 2)

    def test_ideal_teleportation_corrects_to_identity(self, bell, phi_plus):
        """Each outcome applies a unitary, so phi+ on [V, X] stays maximally entangled."""
        t = qobj.teleportation_instrument(bell, phi_plus)
        for a in range(4):
            out = t.apply(a, max_entangled(2))
            assert np.isclose(out.trace(), 0.25)
            assert np.isclose(out.eigvalsh()[-1], 0.25)

    def test_signalling_instrument_rejected(self):
        with pytest.raises(InputError):
            qobj.TeleportationInstrument((max_entangled(2),))

    @settings(max_examples=5, deadline=None)
    @given(seeds)
    def test_measure_instrument_reproduces_distributed(self, seed):
        """Bob measuring the teleported system equals the direct construction."""
        rng = np.random.default_rng(seed)
        mA = qobj.random_povm((2, 2), 3, int(rng.integers(1 << 30)))
        mB = qobj.random_povm((2, 2), 2, int(rng.integers(1 << 30)))
        rho = qobj.random_state((2, 2), seed=int(rng.integers(1 << 30)))
        via = qobj.measure_instrument(qobj.teleportation_instrument(mA, rho), mB)
        direct = qobj.build_distributed(mA, mB, rho)
        for a in range(3):
            for b in range(2):
                assert via.elements[a][b].allclose(direct.elements[a][b], atol=1e-10)


class TestOptimalPovm:
    def test_helstrom_bound(self):
        """Two equiprobable pure states: 1/2 (1 + sqrt(1 - |<0|+>|^2))."""
        zero = 0.5 * np.diag([1.0, 0.0])
        plus = 0.25 * np.ones((2, 2))
        value, povm = qobj.optimal_povm([zero, plus], (2,), tol=1e-9)
        assert np.isclose(value, 0.5 * (1 + np.sqrt(0.5)), atol=1e-7)
        assert povm.outcomes == 2
