"""
Exception hierarchy for nonlocality-forge.
Library code raises these; only the CLI turns them into exit codes.
"""

from typing import Any, Dict, Optional


class ForgeError(Exception):
    """Base class for every error raised by the library."""


class InputError(ForgeError):
    """Malformed, inconsistent or out-of-range input (exit code 2)."""


class SolverError(ForgeError):
    """A conic program did not reach an optimal solution.

    The partially converged solution, if any, is kept on ``solution`` so
    callers can still write a report with the final status.
    """

    def __init__(self, message: str, solution: Optional[Any] = None):
        super().__init__(message)
        self.solution = solution


class VerificationError(ForgeError):
    """A numerical identity that should hold did not."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
