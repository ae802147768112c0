"""
Verification suites: task fan-out, failure capture and the seeded batteries.
"""
import pytest

from nlforge import suites
from nlforge.documents import suite_report_doc
from nlforge.errors import InputError, SolverError, VerificationError


class TestRunTasks:
    def test_results_keep_submission_order(self):
        """A thread pool still hands back results in task order."""
        tasks = [(f"t{k}", lambda k=k: suites.InstanceResult(f"t{k}", True, {"r": float(k)})) for k in range(6)]
        results = suites.run_tasks(tasks, threads=3)
        assert [r.name for r in results] == [f"t{k}" for k in range(6)]

    def test_forge_errors_become_failed_instances(self):
        def broken():
            raise VerificationError("mismatch", {"difference": 0.5})

        result = suites._guarded("broken", broken)
        assert not result.passed
        assert result.counterexample == {"error": "mismatch", "difference": 0.5}
        assert result.elapsed >= 0.0

    def test_solver_errors_are_captured(self):
        def failing():
            raise SolverError("stalled")

        result = suites.run_tasks([("failing", failing)], threads=1)[0]
        assert not result.passed
        assert result.detail["error"] == "stalled"

    def test_input_errors_propagate(self):
        def bad():
            raise InputError("bad instance")

        with pytest.raises(InputError):
            suites.run_tasks([("bad", bad)], threads=1)


class TestSuiteResult:
    def test_max_residuals_handles_missing_values(self):
        result = suites.SuiteResult("roe", 1e-8, [
            suites.InstanceResult("a", True, {"difference": 1e-9}),
            suites.InstanceResult("b", True, {"difference": 3e-9, "gap": float("nan")}),
        ], 0.5)
        assert result.max_residuals() == {"difference": 3e-9, "gap": None}
        assert result.passed and result.failures == 0

    def test_payload_validates(self):
        result = suites.SuiteResult("roe", 1e-8, [suites.InstanceResult("a", False, {"difference": 0.1})], 0.5)
        doc = suite_report_doc(result.to_payload(["counterexamples/000_a.json"]))
        assert doc["payload"]["failures"] == 1
        assert doc["payload"]["passed"] is False


class TestRunSuite:
    def test_roe_suite(self):
        """phi+, three pure states and one separable seed."""
        result = suites.run_suite("roe", seeds=1, d=2)
        assert result.passed, [r.detail for r in result.instances if not r.passed]
        assert len(result.instances) == 5
        assert result.instances[0].name == "roe[phi_plus]"

    def test_rot_robn_suite(self):
        result = suites.run_suite("rot_robn", seeds=1, d=2)
        assert result.passed
        assert result.max_residuals()["difference"] <= suites.EQUALITY_TOL

    @pytest.mark.parametrize("name, instances", [
        ("dsd_advantage", 4),
        ("robn_roe", 1),
        ("monotone", 2),
        ("accessible_info", 4),
    ])
    def test_single_seed_batteries(self, name, instances):
        result = suites.run_suite(name, seeds=1, d=2)
        assert result.passed, [(r.name, r.detail) for r in result.instances if not r.passed]
        assert len(result.instances) == instances
        residuals = result.max_residuals()
        assert residuals["gap"] <= suites.GAP_TOL
        assert residuals["certificate_error"] <= suites.CERTIFICATE_TOL

    def test_properties_battery(self):
        result = suites.run_suite("properties", seeds=1, d=2)
        assert result.passed, [(r.name, r.detail) for r in result.instances if not r.passed]
        assert [r.name for r in result.instances] == ["properties[robn]", "properties[rot]", "properties[roe]"]

    def test_monotone_battery_reports_a_broken_bound(self, monkeypatch):
        """With the classical baseline forced down every bound is crossed."""
        from nlforge import games

        monkeypatch.setattr(games, "dsd_classical_score", lambda g, tol=None: 0.01)
        result = suites.run_suite("monotone", seeds=1, d=2)
        assert not result.passed
        assert result.failures == 2
        forward = result.instances[0]
        assert forward.detail["after"] > forward.detail["bound"]
        assert forward.counterexample["bound"] == pytest.approx(0.02, abs=1e-6)

    @pytest.mark.parametrize("alias, name", sorted(suites.SUITE_ALIASES.items()))
    def test_aliases(self, alias, name):
        assert suites.resolve_suite(alias) == name
        assert name in suites.SUITES

    def test_alias_runs_the_named_battery(self):
        result = suites.run_suite("result4", seeds=1, d=2)
        assert result.suite == "robn_roe"


class TestDualityResiduals:
    def test_within_limits(self):
        result = suites._with_duality(suites.InstanceResult("ok", True), 1e-8, (1e-10, 1e-9), (2e-10, 3e-9))
        assert result.passed
        assert result.residuals == {"gap": 2e-10, "certificate_error": 3e-9}

    def test_large_gap_fails_the_instance(self):
        result = suites._with_duality(suites.InstanceResult("loose", True), 1e-8, (1e-3, 0.0))
        assert not result.passed
        assert result.residuals["gap"] == 1e-3
        assert result.counterexample is not None

    def test_certificate_error_fails_the_instance(self):
        result = suites._with_duality(suites.InstanceResult("loose", True), 1e-8, (0.0, 1e-4))
        assert not result.passed

    def test_limits_follow_the_tolerance(self):
        result = suites._with_duality(suites.InstanceResult("coarse", True), 1e-5, (5e-5, 5e-4))
        assert result.passed


    @pytest.mark.parametrize("kwargs", [
        {"name": "no_such_suite"},
        {"name": "roe", "seeds": 0},
        {"name": "roe", "d": 1},
        {"name": "roe", "tol": 1.0},
    ])
    def test_rejects_bad_arguments(self, kwargs):
        with pytest.raises(InputError):
            suites.run_suite(**kwargs)

    def test_registered_suites(self):
        assert set(suites.SUITES) == {
            "roe", "dsd_advantage", "rot_robn", "robn_roe", "monotone", "accessible_info", "properties"}
