"""Pytest configuration helpers for the nonlocality-forge project."""
import os
import sys
from pathlib import Path

import pytest

# Ensure the project root is importable when tests run from the repository root.
PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

FIXTURES_DIR = PROJECT_ROOT / "fixtures"

# Provide deterministic defaults for environment variables read by the settings.
DEFAULT_ENV = {
    "NONLOCALITY_FORGE_TOL": "1e-8",
    "NONLOCALITY_FORGE_BACKEND": "native",
    "NONLOCALITY_FORGE_THREADS": "1",
    "NONLOCALITY_FORGE_FIXTURES_DIR": str(FIXTURES_DIR),
    "NONLOCALITY_FORGE_LOG_LEVEL": "INFO",
}

for key, value in DEFAULT_ENV.items():
    os.environ.setdefault(key, value)


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES_DIR


@pytest.fixture(scope="session")
def bell():
    from nlforge import qobj

    return qobj.bell_measurement(2)


@pytest.fixture(scope="session")
def phi_plus():
    from nlforge import qobj
    from nlforge.linalg import max_entangled

    return qobj.BipartiteState(max_entangled(2))


@pytest.fixture(scope="session")
def bell_phi_plus(bell, phi_plus):
    """Bell/Bell measurements on a maximally entangled pair."""
    from nlforge import qobj

    return qobj.build_distributed(bell, bell, phi_plus)


@pytest.fixture(scope="session")
def bell_phi_plus_robn(bell_phi_plus):
    """Solved once per session; several game tests reuse its certificate."""
    from nlforge import robustness

    return robustness.robn(bell_phi_plus)


@pytest.fixture(scope="session")
def free_measurement():
    from nlforge import qobj

    return qobj.random_free_measurement(2, (2, 2), seed=7)
