import os
from typing import Dict

import numpy as np

from nlforge.config import settings
from nlforge.conic import Cone, ProgramBuilder, solve
from nlforge.linalg import HermitianOperator

EXPECTED_FIXTURES = (
    "phi_plus.json",
    "product_state.json",
    "bell_povm_2.json",
    "free_zz_measurement.json",
    "bell_phi_plus.json",
    "ideal_teleportation.json",
    "classical_instrument.json",
)


def _lambda_max_program(h: HermitianOperator):
    b = ProgramBuilder("health:lambda_max")
    x = b.variable("X", h.dims, Cone.PSD)
    b.equal("trace", x.trace(), 1.0)
    b.maximize(x.inner(h))
    return b.build()


def _toy_operator() -> HermitianOperator:
    return HermitianOperator(np.array([[2.0, 1.0j], [-1.0j, -1.0]]), (2,))


def check_native_solver():
    """Solves max tr[HX] over density matrices and compares with lambda_max(H)."""
    status = "OK"
    try:
        h = _toy_operator()
        sol = solve(_lambda_max_program(h), backend="native")
        expected = float(h.eigvalsh()[-1])
        if not sol.ok:
            status = f"FAILED (status {sol.status.value})"
        elif abs(sol.objective_value - expected) > 1e-6:
            status = f"FAILED (value {sol.objective_value:.10g}, expected {expected:.10g})"
    except Exception as e:
        status = f"FAILED ({e})"
    print(f"  - Native solver (tol {settings.NONLOCALITY_FORGE_TOL:g}): {status}")
    return status


def check_cvxpy_backend():
    """Checks that cvxpy imports and solves the same toy program."""
    status = "OK"
    try:
        import cvxpy  # noqa: F401

        h = _toy_operator()
        sol = solve(_lambda_max_program(h), tol=1e-6, backend="cvxpy")
        if not sol.ok:
            status = f"FAILED (status {sol.status.value})"
        elif abs(sol.objective_value - float(h.eigvalsh()[-1])) > 1e-4:
            status = f"FAILED (value {sol.objective_value:.10g})"
    except ImportError:
        status = "FAILED (cvxpy not installed)"
    except Exception as e:
        status = f"FAILED ({e})"
    print(f"  - cvxpy backend: {status}")
    return status


def check_fixtures():
    """Checks that the fixtures directory holds the bundled documents."""
    status = "OK"
    directory = settings.NONLOCALITY_FORGE_FIXTURES_DIR
    try:
        from nlforge.documents import read_document

        missing = [f for f in EXPECTED_FIXTURES if not os.path.exists(os.path.join(directory, f))]
        if missing:
            status = f"FAILED (missing {', '.join(missing)})"
        else:
            for f in EXPECTED_FIXTURES:
                read_document(os.path.join(directory, f))
    except Exception as e:
        status = f"FAILED ({e})"
    print(f"  - Fixtures ({directory}): {status}")
    return status


def check_debug_log():
    path = settings.NONLOCALITY_FORGE_DEBUG_LOG
    directory = os.path.dirname(os.path.abspath(path))
    status = "OK"
    if not os.path.isdir(directory):
        status = f"FAILED (directory {directory} does not exist)"
    elif not os.access(directory, os.W_OK):
        status = f"FAILED (directory {directory} is not writable)"
    print(f"  - Debug log ({path}): {status}")
    return status


def check_all() -> Dict[str, str]:
    """Run all health checks."""
    print("=== Health Check Results ===")
    statuses = {
        "native_solver": check_native_solver(),
        "cvxpy_backend": check_cvxpy_backend(),
        "fixtures": check_fixtures(),
        "debug_log": check_debug_log(),
    }
    print("=== End Health Checks ===\n")
    return statuses
