"""
RoE, RoBN and RoT programs with their certificates, plus the state-level
equalities and the quantifier properties.
"""
import math

import numpy as np
import pytest

from nlforge import qobj, robustness
from nlforge.conic import Solution, Status
from nlforge.documents import load_instrument, load_measurement, load_state
from nlforge.errors import InputError, SolverError, VerificationError
from nlforge.linalg import HermitianOperator, partial_transpose


class TestRoE:
    def test_phi_plus(self, phi_plus):
        """RoE of phi+ is d - 1 = 1."""
        report = robustness.roe(phi_plus)
        assert abs(report.value - 1.0) <= 1e-6
        assert report.quantifier == "roe"
        assert report.relaxation == "PPT_OUTER"

    @pytest.mark.parametrize("theta", [math.pi / 16, math.pi / 8, math.pi / 4])
    def test_pure_states(self, theta):
        """cos t |00> + sin t |11> has RoE sin 2t."""
        state = qobj.pure_entangled_state([math.cos(theta), math.sin(theta)])
        psi = np.array([math.cos(theta), 0.0, 0.0, math.sin(theta)])
        assert math.isclose(robustness.pure_state_roe(psi, (2, 2)), math.sin(2 * theta), abs_tol=1e-12)
        assert abs(robustness.roe(state).value - math.sin(2 * theta)) <= 1e-5

    def test_separable_states(self):
        for seed in range(3):
            rho = qobj.random_separable_model((2, 2), 3, seed).state()
            assert robustness.roe(rho).value <= 1e-6

    def test_product_fixture(self, fixtures_dir):
        assert robustness.roe(load_state(str(fixtures_dir / "product_state.json"))).value <= 1e-6

    @pytest.mark.parametrize("p", [0.0, 0.25, 0.5, 0.75, 1.0])
    def test_isotropic_fixtures(self, fixtures_dir, p):
        """RoE of the two-qubit isotropic state is max(0, (3p - 1) / 2)."""
        rho = load_state(str(fixtures_dir / f"isotropic_{p:g}.json"))
        assert rho.op.allclose(qobj.isotropic_state(2, p).op, atol=1e-12)
        assert abs(robustness.roe(rho).value - max(0.0, (3 * p - 1) / 2)) <= 1e-5

    def test_certificate_decomposition(self, phi_plus):
        """1 - A = P + Q^{T_B} with A, P, Q all PSD."""
        report = robustness.roe(phi_plus)
        cert = report.dual_certificate
        for name in ("A", "W", "Q"):
            assert cert[name].eigvalsh()[0] >= -1e-7
        rhs = cert["W"] + partial_transpose(cert["Q"], 1)
        lhs = HermitianOperator.identity((2, 2)) - cert["A"]
        assert lhs.allclose(rhs, atol=1e-6)
        assert abs(report.extras["certificate_value"] - report.value) <= 1e-6

    def test_primal_witness_dominates(self, phi_plus):
        report = robustness.roe(phi_plus)
        sigma = report.primal_witness["sigma"]
        assert (sigma - phi_plus.op).eigvalsh()[0] >= -1e-7
        assert partial_transpose(sigma, 1).eigvalsh()[0] >= -1e-7
        assert abs(report.primal_witness["eta"] - report.value) <= 1e-7

    def test_cross_check(self, phi_plus):
        """Solving the derived dual separately reproduces the value."""
        report = robustness.roe(phi_plus, cross_check=True)
        assert abs(report.value - 1.0) <= 1e-6

    def test_tolerance_out_of_range(self, phi_plus):
        with pytest.raises(InputError):
            robustness.roe(phi_plus, tol=0.1)


class TestRoBN:
    def test_bell_phi_plus(self, bell_phi_plus_robn):
        """Bell measurements on phi+ give RoBN 1."""
        report = bell_phi_plus_robn
        assert abs(report.value - 1.0) <= 1e-5
        assert abs(report.primal_value - report.dual_value) <= 1e-7

    def test_certificate_reproduces_value(self, bell_phi_plus, bell_phi_plus_robn):
        """sum tr[A_ab M_ab] - 1 = RoBN and tr D + tr E = 1."""
        report = bell_phi_plus_robn
        blocks = report.dual_certificate["A"]
        total = sum(blocks[a][b].inner(bell_phi_plus.element(a, b)) for a in range(4) for b in range(4))
        assert abs(total - 1.0 - report.value) <= 1e-6
        assert abs(report.extras["normalization_trace"] - 1.0) <= 1e-6
        assert min(blk.eigvalsh()[0] for row in blocks for blk in row) >= -1e-7

    def test_tight_noise_marginals(self, bell_phi_plus_robn):
        """The published noise sums to r times the identity."""
        report = bell_phi_plus_robn
        total = sum(n for row in report.primal_witness["N"] for n in row)
        assert total.allclose(report.value * HermitianOperator.identity((2, 2)), atol=1e-6)

    def test_free_measurement(self, free_measurement):
        assert robustness.robn(free_measurement).value <= 1e-6

    def test_free_fixture(self, fixtures_dir):
        m = load_measurement(str(fixtures_dir / "free_zz_measurement.json"))
        assert m.provenance is None
        assert robustness.robn(m).value <= 1e-6

    def test_bell_phi_plus_fixture(self, fixtures_dir, bell_phi_plus):
        m = load_measurement(str(fixtures_dir / "bell_phi_plus.json"))
        assert m.outcomes == (4, 4)
        assert all(m.element(a, b).allclose(bell_phi_plus.element(a, b), atol=1e-12)
                   for a in range(4) for b in range(4))
        assert abs(robustness.robn(m).value - 1.0) <= 1e-5

    def test_isotropic_matches_roe(self, bell):
        """Bell/Bell on an isotropic state reaches RoE of the state."""
        rho = qobj.isotropic_state(2, 0.8)
        robn_value = robustness.robn(qobj.build_distributed(bell, bell, rho)).value
        assert abs(robn_value - robustness.roe(rho).value) <= 1e-5


class TestRoT:
    def test_ideal_teleportation(self, fixtures_dir):
        t = load_instrument(str(fixtures_dir / "ideal_teleportation.json"))
        report = robustness.rot(t)
        assert abs(report.value - 1.0) <= 1e-5
        assert len(report.dual_certificate["A"]) == 4

    def test_classical_instrument(self, bell):
        """Teleporting with a product state has no nonclassicality."""
        zero = HermitianOperator.projector([1.0, 0.0])
        t = qobj.teleportation_instrument(bell, qobj.product_state(zero, zero))
        assert robustness.rot(t).value <= 1e-6

    def test_classical_instrument_fixture(self, fixtures_dir):
        t = load_instrument(str(fixtures_dir / "classical_instrument.json"))
        assert robustness.rot(t).value <= 1e-6

    @pytest.mark.parametrize("seed", [0, 1])
    def test_equals_robn_with_bell_bob(self, bell, seed):
        """RoT of the induced instrument equals RoBN with Bob's Bell measurement."""
        rho = qobj.random_state((2, 2), seed % 4 + 1, seed)
        rot_value = robustness.rot(qobj.teleportation_instrument(bell, rho)).value
        robn_value = robustness.robn(qobj.build_distributed(bell, bell, rho)).value
        assert abs(rot_value - robn_value) <= 1e-5


class TestRobnOfState:
    def test_phi_plus_flagged_equal(self, phi_plus):
        report = robustness.robn_of_state(phi_plus)
        assert report.extras["agree"] is True
        assert abs(report.extras["roe"] - 1.0) <= 1e-6

    def test_rejects_unequal_dims(self):
        rho = qobj.random_state((2, 3), seed=1)
        with pytest.raises(InputError):
            robustness.robn_of_state(rho)

    def test_seesaw_does_not_decrease(self):
        """A see-saw pass started from Z measurements never loses value."""
        rho = qobj.random_state((2, 2), 2, seed=5)
        z = qobj.Povm.from_basis(np.eye(4), (2, 2))
        start = robustness.robn(qobj.build_distributed(z, z, rho)).value
        report, mA, mB = robustness.seesaw_refine(rho, z, z, rounds=1)
        assert report.method == "seesaw"
        assert report.value >= start - 1e-7
        assert mA.dims == (2, 2) and mB.dims == (2, 2)


class TestFailures:
    def test_solver_failure_carries_solution(self, monkeypatch, phi_plus):
        """Non-optimal solver output surfaces as SolverError with the partial solution."""
        failed = Solution(Status.NUMERICAL_FAILURE, {}, {}, float("nan"), float("nan"), float("inf"))
        monkeypatch.setattr(robustness, "solve", lambda program, tol: failed)
        with pytest.raises(SolverError) as exc:
            robustness.roe(phi_plus)
        assert exc.value.solution is failed

    def test_certificate_mismatch_is_verification_error(self, phi_plus):
        report = robustness.RobustnessReport(
            "roe", 0.5, 0.5, 0.5, 0.0, 1e-8, {}, {"A": HermitianOperator.identity((2, 2))})
        with pytest.raises(VerificationError) as exc:
            robustness._check_certificate(report, [phi_plus.op])
        assert exc.value.diagnostics["certificate_value"] == pytest.approx(0.0)

    def test_normalization_off_is_verification_error(self, phi_plus):
        """A certificate that reproduces the value still needs tr D + tr E = 1."""
        report = robustness.RobustnessReport(
            "robn", 0.0, 0.0, 0.0, 0.0, 1e-8, {}, {"A": HermitianOperator.identity((2, 2))})
        with pytest.raises(VerificationError) as exc:
            robustness._check_certificate(report, [phi_plus.op], normalization=0.9)
        assert exc.value.diagnostics["normalization_trace"] == 0.9
        assert report.certificate_error == pytest.approx(0.0)


class TestPropertySuite:
    @pytest.mark.parametrize("quantifier", ["roe", "robn", "rot"])
    def test_properties_hold(self, quantifier):
        report = robustness.property_suite(quantifier, [0], 2)
        assert report.passed, report.counterexamples
        assert report.checks == {"faithfulness": 1, "convexity": 5, "monotonicity": 1}

    def test_unknown_quantifier(self):
        with pytest.raises(InputError):
            robustness.property_suite("rob", [0])
