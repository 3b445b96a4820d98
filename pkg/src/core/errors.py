"""Exception hierarchy shared by the library and the CLI.

Each class carries the process exit code the CLI reports for it:
1 configuration, 2 numeric / data failure, 3 theorem verification.
"""

from typing import Iterable, List, Optional


class RegGcnError(Exception):
    exit_code: int = 2


class ConfigError(RegGcnError):
    """All configuration violations found in one validation pass."""

    exit_code = 1

    def __init__(self, violations: Iterable[str]):
        self.violations: List[str] = list(violations)
        super().__init__("; ".join(self.violations) or "invalid configuration")


class ShapeError(RegGcnError):
    pass


class ContractError(RegGcnError):
    pass


class NonFiniteError(RegGcnError):
    pass


class SingularMatrixError(RegGcnError):
    pass


class DegenerateBasisError(RegGcnError):
    def __init__(self, message: str, column: int):
        self.column = column
        super().__init__(message)


class ConvergenceError(RegGcnError):
    def __init__(self, message: str, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")


class PsdViolationError(RegGcnError):
    pass


class InputError(RegGcnError):
    pass


class ParseError(RegGcnError):
    def __init__(self, message: str, path: str, line_no: Optional[int] = None):
        self.path = path
        self.line_no = line_no
        where = f"{path}:{line_no}" if line_no is not None else path
        super().__init__(f"{where}: {message}")


class SplitError(RegGcnError):
    pass


class SpecError(RegGcnError):
    pass


class ParameterError(RegGcnError):
    def __init__(self, message: str, lam: float, mu: float):
        self.lam = lam
        self.mu = mu
        super().__init__(f"{message} (lambda={lam:.6g}, mu={mu:.6g})")


class GuardError(RegGcnError):
    pass


class TheoremVerificationError(RegGcnError):
    exit_code = 3

    def __init__(self, variant: str, discrepancy: float, tolerance: float):
        self.variant = variant
        self.discrepancy = discrepancy
        self.tolerance = tolerance
        super().__init__(
            f"stationarity check failed for {variant}: "
            f"max discrepancy {discrepancy:.3e} > {tolerance:.1e}"
        )
