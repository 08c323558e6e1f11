"""Exception hierarchy shared by the services and the command line."""


class QuadPlanError(Exception):
    """Base class for all planner errors."""

    exit_code = 1


class ConfigError(QuadPlanError):
    """Invalid or unknown configuration entry."""

    exit_code = 2

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class DomainError(QuadPlanError, ValueError):
    """Input outside the mathematical domain of an operation."""


class BatteryDepletedError(QuadPlanError):
    """Drawn charge reached the cell capacity."""


class DivergenceError(QuadPlanError):
    """Simulation state blew up."""


class CascadeError(QuadPlanError):
    """Baseline controller asked for non-positive thrust."""


class ConvergenceError(QuadPlanError):
    """Solver finished without meeting its tolerances."""

    exit_code = 3

    def __init__(self, result):
        super().__init__(f"solver finished with status '{result.status}'")
        self.result = result


class OutputError(QuadPlanError):
    """Result file could not be written."""

    exit_code = 4

    def __init__(self, path, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
