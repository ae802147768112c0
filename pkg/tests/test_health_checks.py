import pytest

from nlforge import health_checks
from nlforge.config import settings


class TestHealthChecks:
    def test_native_solver_ok(self, capsys):
        assert health_checks.check_native_solver() == "OK"
        assert "  - Native solver" in capsys.readouterr().out

    def test_native_solver_failure_is_reported(self, monkeypatch, capsys):
        def broken(*args, **kwargs):
            raise RuntimeError("factorization failed")

        monkeypatch.setattr(health_checks, "solve", broken)
        status = health_checks.check_native_solver()
        assert status == "FAILED (factorization failed)"
        assert status in capsys.readouterr().out

    def test_cvxpy_backend_ok(self):
        pytest.importorskip("cvxpy")
        assert health_checks.check_cvxpy_backend() == "OK"

    def test_fixtures_ok(self, monkeypatch, fixtures_dir):
        monkeypatch.setattr(settings, "NONLOCALITY_FORGE_FIXTURES_DIR", str(fixtures_dir))
        assert health_checks.check_fixtures() == "OK"

    def test_fixtures_missing(self, monkeypatch, tmp_path):
        monkeypatch.setattr(settings, "NONLOCALITY_FORGE_FIXTURES_DIR", str(tmp_path))
        status = health_checks.check_fixtures()
        assert status.startswith("FAILED (missing phi_plus.json")

    def test_fixtures_unreadable(self, monkeypatch, tmp_path):
        """A present but malformed fixture fails the check."""
        for name in health_checks.EXPECTED_FIXTURES:
            (tmp_path / name).write_text("{}")
        monkeypatch.setattr(settings, "NONLOCALITY_FORGE_FIXTURES_DIR", str(tmp_path))
        assert health_checks.check_fixtures().startswith("FAILED (")

    def test_debug_log_directory_missing(self, monkeypatch, tmp_path):
        monkeypatch.setattr(settings, "NONLOCALITY_FORGE_DEBUG_LOG", str(tmp_path / "nope" / "debug.log"))
        assert "does not exist" in health_checks.check_debug_log()

    def test_check_all(self, monkeypatch, capsys, tmp_path):
        monkeypatch.setattr(settings, "NONLOCALITY_FORGE_DEBUG_LOG", str(tmp_path / "debug.log"))
        statuses = health_checks.check_all()
        assert set(statuses) == {"native_solver", "cvxpy_backend", "fixtures", "debug_log"}
        out = capsys.readouterr().out
        assert out.startswith("=== Health Check Results ===")
        assert "=== End Health Checks ===" in out
