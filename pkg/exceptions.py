# Typed errors with CLI exit codes
from typing import List, Optional


class SolscopeError(Exception):
    """Base error; every subclass maps to one process exit code"""

    exit_code = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


# Configuration and caller errors (exit 2)

class InvalidParameter(SolscopeError):
    exit_code = 2


class GridMismatch(SolscopeError):
    exit_code = 2


class WindowMismatch(SolscopeError):
    exit_code = 2


class CoverageGap(SolscopeError):
    exit_code = 2


class DegenerateInput(SolscopeError):
    exit_code = 2


class InvalidAlpha(SolscopeError):
    exit_code = 2


class InadmissiblePair(SolscopeError):
    exit_code = 2


class ConfigParseError(SolscopeError):
    exit_code = 2

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ConfigValidationError(SolscopeError):
    exit_code = 2

    def __init__(self, violations: List[str]):
        joined = "\n  - ".join(violations)
        super().__init__(f"{len(violations)} configuration violation(s):\n  - {joined}")
        self.violations = list(violations)


# Numerical aborts (exit 3)

class NanDetected(SolscopeError):
    exit_code = 3

    def __init__(self, time: float):
        super().__init__(f"non-finite values in the state at t = {time:.6g}")
        self.time = time


class H1CeilingExceeded(SolscopeError):
    exit_code = 3

    def __init__(self, last_safe_time: float, ceiling: float, value: float):
        super().__init__(
            f"H1 norm {value:.6g} exceeded ceiling {ceiling:.6g}; last safe time t = {last_safe_time:.6g}"
        )
        self.last_safe_time = last_safe_time
        self.ceiling = ceiling
        self.value = value


# Non-convergence (exit 4)

class NoSignChange(SolscopeError):
    exit_code = 4


class NotDecayed(SolscopeError):
    exit_code = 4


class NotConverged(SolscopeError):
    exit_code = 4

    def __init__(self, message: str, history: Optional[list] = None):
        super().__init__(message)
        self.history = history or []


class NonConvergentIteration(SolscopeError):
    exit_code = 4


# IO (exit 5)

class StorageError(SolscopeError):
    exit_code = 5


EXIT_CODES = {
    0: "ok",
    2: "configuration error",
    3: "numerical abort (NaN / H1 ceiling)",
    4: "non-convergence",
    5: "io error",
}
