"""
Exception types shared by the library and the CLI.

Each error carries a diagnostics dict and the process exit code the CLI
maps it to.
"""

from typing import Dict, Any, Optional


class DlqkitError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        if not self.diagnostics:
            return self.message
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{self.message} ({details})"


class InvalidInputError(DlqkitError, ValueError):
    """Malformed data, dimension mismatch, non-regular pencil, inconsistent initial value."""

    exit_code = 2


class NumericalFailureError(DlqkitError):
    """Ambiguous rank decision, residual blow-up or failed certificate."""

    exit_code = 1


class UnsupportedStructureError(DlqkitError):
    """Structure outside the constructive theory (e.g. unit-circle eigenvalues in a selection)."""

    exit_code = 3


class InfeasibleSynthesisError(NumericalFailureError):
    """The optimal trajectory does not exist for the given data."""

    exit_code = 1
