"""
Error codes and exceptions of the Schwarz solver.
Every failure carries an ErrorCode; the benchmark CLI exits with its value.
"""
from enum import Enum
from typing import Any, Dict, Optional


class ErrorCode(Enum):
    OK = 0
    GENERAL_ERROR = 1
    INVALID_MESH = 2
    NON_NESTED = 3
    OVERLAP_RANGE = 4
    ILL_CONDITIONED_ELEMENT = 5
    NOT_SYMMETRIC = 6
    STRUCTURAL = 7
    INVALID_PENALTY = 8
    EMPTY_SUBDOMAIN = 9
    DIMENSION_MISMATCH = 10
    NOT_SPD = 11
    PRECONDITIONER_NOT_SPD = 12
    RANK_DEFICIENT = 13
    INVALID_CONFIG = 14
    INDEX_OUT_OF_RANGE = 15
    NOT_CONVERGED = 16


class SolverError(Exception):
    code = ErrorCode.GENERAL_ERROR

    def __init__(self, message: str, code: Optional[ErrorCode] = None,
                 **diagnostics: Any):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.diagnostics: Dict[str, Any] = diagnostics

    def __str__(self) -> str:
        text = super().__str__()
        if self.diagnostics:
            details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
            text = f"{text} ({details})"
        return f"[{self.code.name}] {text}"


class ConfigurationError(SolverError, ValueError):
    """Rejected input: bad mesh sizes, overlap, family, penalty or config field."""
    code = ErrorCode.INVALID_CONFIG


class StructuralError(SolverError):
    code = ErrorCode.STRUCTURAL


class NotSPDError(SolverError):
    code = ErrorCode.NOT_SPD


class RankDeficiencyError(SolverError):
    code = ErrorCode.RANK_DEFICIENT
