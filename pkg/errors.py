"""Exception taxonomy for the workbench; exit codes are read by the CLI."""

from typing import Any, Optional


class WorkbenchError(Exception):
    """Base class for every error raised on purpose by the workbench."""

    exit_code = 1


class ContractError(WorkbenchError, ValueError):
    """A precondition of an operation was violated (bad input, malformed file)."""

    exit_code = 2


class StructuralError(ContractError):
    """Objects that must share a space (or a base vector) do not."""


class UnsupportedValueError(ContractError):
    """An exact rational result does not exist for the requested evaluation."""


class CapExceededError(WorkbenchError):
    """An enumeration would exceed its configured cap."""

    exit_code = 3

    def __init__(self, what: str, size: int, cap: int, hint: str = "") -> None:
        self.what = what
        self.size = size
        self.cap = cap
        message = f"{what}: size {size} exceeds cap {cap}"
        if hint:
            message = f"{message} ({hint})"
        super().__init__(message)


class InfeasibleError(WorkbenchError):
    """A constructive search found no solution; `core` names the conflicting part."""

    def __init__(self, message: str, core: Optional[dict[str, Any]] = None) -> None:
        self.core = core or {}
        super().__init__(message)


class InvariantError(WorkbenchError):
    """An internal invariant failed. Always a bug signal."""
