"""Exception hierarchy shared by every miqubo module."""
from typing import Optional


class MiquboError(Exception):
    """Base class for all errors raised by miqubo."""


class UserInputError(MiquboError):
    """Bad input data or configuration; the CLI exits with status 2."""


class DataError(UserInputError, ValueError):
    pass


class TargetNotFoundError(DataError):
    def __init__(self, target_name: str, available=()):
        self.target_name = target_name
        self.available = list(available)
        super().__init__(
            f"Target column '{target_name}' not found; "
            f"available columns: {', '.join(self.available) or '<none>'}"
        )


class RaggedRowError(DataError):
    def __init__(self, line: int, message: str = ""):
        self.line = line
        super().__init__(f"Ragged row at line {line}" + (f": {message}" if message else ""))


class CellParseError(DataError):
    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(
            f"Cannot parse value {value!r} in column '{column}' (data row {row}) as a number"
        )


class ConfigError(UserInputError, ValueError):
    pass


class CellBudgetError(UserInputError, ValueError):
    def __init__(self, cells: int, budget: int):
        self.cells = cells
        self.budget = budget
        super().__init__(
            f"Joint distribution needs {cells} cells, over the budget of {budget}"
        )


class InfeasibleProfileError(UserInputError):
    pass


class InternalConsistencyError(MiquboError):
    pass


class SolverError(MiquboError):
    pass


class InfeasibleSelectionError(SolverError):
    def __init__(self, k: int, backend: str):
        self.k = k
        self.backend = backend
        super().__init__(
            f"No weight-{k} sample found by backend '{backend}'; "
            "retry with a larger budget or the exhaustive backend"
        )


class ConvergenceError(MiquboError):
    pass


class SvrConvergenceError(ConvergenceError):
    def __init__(self, violation: float, iterations: int, tol: Optional[float] = None):
        self.violation = violation
        self.iterations = iterations
        self.tol = tol
        super().__init__(
            f"SVR dual did not converge after {iterations} pair updates "
            f"(KKT violation {violation:.3e}, tol {tol})"
        )
