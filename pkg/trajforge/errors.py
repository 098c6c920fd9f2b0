"""
Exception hierarchy for TrajForge.

Every error carries the process exit code the CLI reports for it:
1 for I/O or configuration problems, 2 for contract violations.
"""

from typing import Any, Dict, Optional


class TrajForgeError(Exception):
    """Base class for all TrajForge errors."""

    exit_code = 2

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable form printed by the CLI."""
        payload = {
            "error": type(self).__name__,
            "message": self.message,
            "exit_code": self.exit_code,
        }
        payload.update(self.details)
        return payload


class ConfigError(TrajForgeError):
    exit_code = 1


class DataIOError(TrajForgeError):
    exit_code = 1


class ContractViolation(TrajForgeError):
    exit_code = 2


class InvalidGeoPoint(ContractViolation):
    pass


class InvalidTrajectory(ContractViolation):
    pass


class ZeroOrNegativeInterval(ContractViolation):
    pass


class MalformedXml(ContractViolation):
    pass


class NoUsablePoints(ContractViolation):
    pass


class SchemaViolation(ContractViolation):
    """A JSONL line does not match the interchange schema."""

    def __init__(self, message: str, line: Optional[int] = None, **details: Any):
        super().__init__(f"line {line}: {message}" if line is not None else message,
                         line=line, **details)
        self.line = line


class TooShort(ContractViolation):
    pass


class IndexMapMismatch(ContractViolation):
    pass


class EmptyDataset(ContractViolation):
    pass


class NonFiniteLoss(ContractViolation):
    pass


class LengthMismatch(ContractViolation):
    pass


class EmptyEvalSet(ContractViolation):
    pass
