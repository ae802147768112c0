"""
Command-line surface: subcommands, exit codes and written documents.
"""
import json
import logging

import pytest

from nlforge import cli, robustness, suites
from nlforge.config import settings
from nlforge.conic import Solution, Status
from nlforge.documents import load_ensemble, read_document
from nlforge.errors import VerificationError


@pytest.fixture(autouse=True)
def debug_log(monkeypatch, tmp_path):
    """Keep the error log out of the working directory."""
    path = tmp_path / "debug.log"
    monkeypatch.setattr(settings, "NONLOCALITY_FORGE_DEBUG_LOG", str(path))
    debug_logger = logging.getLogger("debug")
    for h in list(debug_logger.handlers):
        debug_logger.removeHandler(h)
    yield path
    for h in list(debug_logger.handlers):
        h.close()
        debug_logger.removeHandler(h)


def _stdout_doc(capsys):
    return json.loads(capsys.readouterr().out)


class TestEmit:
    def test_phi_plus_matches_fixture(self, capsys, fixtures_dir):
        """The built-in phi+ serializes to the checked-in bytes."""
        assert cli.main(["emit", "phi_plus"]) == cli.EXIT_OK
        assert capsys.readouterr().out == (fixtures_dir / "phi_plus.json").read_text(encoding="utf-8")

    def test_bell_povm_to_file(self, tmp_path):
        out = tmp_path / "bell.json"
        assert cli.main(["emit", "bell_povm", "--out", str(out)]) == cli.EXIT_OK
        assert read_document(str(out)).outcomes == 4

    def test_isotropic_out_of_range(self):
        assert cli.main(["emit", "isotropic", "--p", "1.5"]) == cli.EXIT_INPUT


class TestQuantifierCommands:
    def test_roe_phi_plus(self, capsys, fixtures_dir):
        assert cli.main(["roe", "--state", str(fixtures_dir / "phi_plus.json")]) == cli.EXIT_OK
        payload = _stdout_doc(capsys)["payload"]
        assert payload["report_type"] == "robustness"
        assert abs(payload["value"] - 1.0) <= 1e-6

    def test_rot_ideal_teleportation(self, tmp_path, fixtures_dir):
        out = tmp_path / "rot.json"
        code = cli.main(["rot", "--instrument", str(fixtures_dir / "ideal_teleportation.json"), "--out", str(out)])
        assert code == cli.EXIT_OK
        assert abs(read_document(str(out))["value"] - 1.0) <= 1e-5

    def test_robn_from_parts(self, capsys, fixtures_dir):
        """--alice/--bob/--state builds Bell/Bell on phi+."""
        bell = str(fixtures_dir / "bell_povm_2.json")
        code = cli.main(["robn", "--alice", bell, "--bob", bell, "--state", str(fixtures_dir / "phi_plus.json")])
        assert code == cli.EXIT_OK
        assert abs(_stdout_doc(capsys)["payload"]["value"] - 1.0) <= 1e-5

    def test_robn_state(self, capsys, fixtures_dir):
        assert cli.main(["robn-state", "--state", str(fixtures_dir / "phi_plus.json")]) == cli.EXIT_OK
        extras = _stdout_doc(capsys)["payload"]["extras"]
        assert extras["agree"] is True

    def test_conflicting_measurement_arguments(self, fixtures_dir):
        m = str(fixtures_dir / "free_zz_measurement.json")
        assert cli.main(["robn", "--measurement", m, "--state", m]) == cli.EXIT_INPUT
        assert cli.main(["robn"]) == cli.EXIT_INPUT

    def test_malformed_document(self, tmp_path, debug_log):
        bad = tmp_path / "bad.json"
        bad.write_text('{"schema_version": "1", "kind": "state"')
        assert cli.main(["roe", "--state", str(bad)]) == cli.EXIT_INPUT
        assert "Input error in roe" in debug_log.read_text()

    def test_wrong_kind(self, fixtures_dir):
        assert cli.main(["roe", "--state", str(fixtures_dir / "bell_povm_2.json")]) == cli.EXIT_INPUT

    def test_usage_errors(self, fixtures_dir):
        state = str(fixtures_dir / "phi_plus.json")
        assert cli.main(["no-such-command"]) == cli.EXIT_INPUT
        assert cli.main(["roe", "--state", state, "--tol", "big"]) == cli.EXIT_INPUT
        assert cli.main(["roe", "--state", state, "--tol", "0.5"]) == cli.EXIT_INPUT

    def test_solver_failure_writes_status(self, monkeypatch, tmp_path, fixtures_dir):
        failed = Solution(Status.NUMERICAL_FAILURE, {}, {}, 0.3, float("nan"), float("inf"))
        monkeypatch.setattr(robustness, "solve", lambda program, tol: failed)
        out = tmp_path / "failed.json"
        code = cli.main(["roe", "--state", str(fixtures_dir / "phi_plus.json"), "--out", str(out)])
        assert code == cli.EXIT_FAILURE
        payload = json.loads(out.read_text())["payload"]
        assert payload["status"] == "NUMERICAL_FAILURE"
        assert payload["dual_value"] is None

    def test_verification_failure_writes_counterexample(self, monkeypatch, tmp_path, fixtures_dir):
        def disagree(rho, tol=None, seesaw=False, rounds=None):
            raise VerificationError("values disagree", {"difference": 0.25})

        monkeypatch.setattr(robustness, "robn_of_state", disagree)
        out = tmp_path / "cx.json"
        code = cli.main(["robn-state", "--state", str(fixtures_dir / "phi_plus.json"), "--out", str(out)])
        assert code == cli.EXIT_FAILURE
        payload = json.loads(out.read_text())["payload"]
        assert payload["report_type"] == "counterexample"
        assert payload["difference"] == 0.25


class TestGameCommand:
    def test_emit_ensemble_only(self, tmp_path, capsys, fixtures_dir):
        ensemble = tmp_path / "ensemble.json"
        code = cli.main(["game", "--measurement", str(fixtures_dir / "free_zz_measurement.json"),
                         "--emit-ensemble", str(ensemble)])
        assert code == cli.EXIT_OK
        assert load_ensemble(str(ensemble)).shape == (2, 2)
        assert capsys.readouterr().out == ""

    def test_scores(self, capsys, fixtures_dir):
        code = cli.main(["game", "--measurement", str(fixtures_dir / "free_zz_measurement.json"), "--scores"])
        assert code == cli.EXIT_OK
        payload = _stdout_doc(capsys)["payload"]
        assert payload["report_type"] == "score"
        assert abs(payload["ratio"] - 1.0) <= 1e-4


class TestVerifyCommand:
    def test_passing_suite(self, tmp_path):
        out = tmp_path / "suite.json"
        code = cli.main(["verify", "--suite", "roe", "--seeds", "1", "--out", str(out),
                         "--counterexamples", str(tmp_path / "cx")])
        assert code == cli.EXIT_OK
        payload = json.loads(out.read_text())["payload"]
        assert payload["passed"] is True
        assert payload["instances"] == 5
        assert not (tmp_path / "cx").exists()

    def test_failing_suite_writes_counterexamples(self, monkeypatch, tmp_path, capsys):
        def failing(seeds, d, tol):
            return [("always[fails]", lambda: suites.InstanceResult(
                "always[fails]", False, {"difference": 1.0}, counterexample={"value": 1.0}))]

        monkeypatch.setitem(suites.SUITES, "roe", failing)
        cx = tmp_path / "cx"
        code = cli.main(["verify", "--suite", "roe", "--seeds", "1", "--counterexamples", str(cx)])
        assert code == cli.EXIT_FAILURE
        assert [p.name for p in cx.iterdir()] == ["000_always_fails_.json"]
        payload = _stdout_doc(capsys)["payload"]
        assert payload["failures"] == 1
        assert payload["counterexamples"] == [str(cx / "000_always_fails_.json")]

    def test_unknown_suite(self):
        assert cli.main(["verify", "--suite", "no_such_suite"]) == cli.EXIT_INPUT

    def test_numbered_alias(self, monkeypatch, capsys):
        def cheap(seeds, d, tol):
            return [("cheap", lambda: suites.InstanceResult("cheap", True, {"difference": 0.0}))]

        monkeypatch.setitem(suites.SUITES, "dsd_advantage", cheap)
        assert cli.main(["verify", "--suite", "result1", "--seeds", "1"]) == cli.EXIT_OK
        payload = _stdout_doc(capsys)["payload"]
        assert payload["suite"] == "dsd_advantage"
        assert payload["passed"] is True


class TestSweepAndSelfcheck:
    def test_sweep_csv(self, capsys):
        assert cli.main(["sweep", "--points", "2"]) == cli.EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "p,roe,robn_state,rot_ideal_channel"
        assert len(lines) == 3
        first = [float(v) for v in lines[1].split(",")]
        last = [float(v) for v in lines[2].split(",")]
        assert first[0] == 0.0 and max(first[1:]) <= 1e-6
        assert all(abs(v - 1.0) <= 1e-5 for v in last[1:])

    def test_sweep_out_leaves_no_temporaries(self, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        assert cli.main(["sweep", "--points", "2", "--out", str(out)]) == cli.EXIT_OK
        assert capsys.readouterr().out == ""
        assert [p.name for p in tmp_path.iterdir() if p.name != "debug.log"] == ["sweep.csv"]
        assert out.read_text().splitlines()[0] == "p,roe,robn_state,rot_ideal_channel"

    def test_selfcheck(self, monkeypatch):
        from nlforge import health_checks

        monkeypatch.setattr(health_checks, "check_all", lambda: {"native_solver": "OK"})
        assert cli.main(["selfcheck"]) == cli.EXIT_OK
        monkeypatch.setattr(health_checks, "check_all", lambda: {"native_solver": "FAILED (x)"})
        assert cli.main(["selfcheck"]) == cli.EXIT_FAILURE
