"""
Error types for the storage sizing engines

Every engine raises a subclass of SizingError so the CLI can map any
engine failure to exit code 1 and name the error class on stderr.
"""

from typing import List, Optional


class SizingError(Exception):
    """Root of all engine errors"""


class ParameterDomainError(SizingError, ValueError):
    """A model parameter lies outside its admissible range"""


class DomainError(SizingError, ValueError):
    """A function argument lies outside the function's domain"""


class ConfigurationError(SizingError):
    """An environment setting could not be parsed"""


class StabilityError(SizingError):
    """Mean demand is not strictly below the grid power"""

    def __init__(self, mean_demand: float, grid_power: float, detail: str = ""):
        self.mean_demand = mean_demand
        self.grid_power = grid_power
        message = (
            f"unstable system: mean demand {mean_demand:.6g} kW must be below "
            f"grid power {grid_power:.6g} kW"
        )
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class CapacityError(SizingError):
    """A state space is larger than the configured cap"""

    def __init__(self, size: int, cap: int, what: str = "state space"):
        self.size = size
        self.cap = cap
        super().__init__(f"{what} of {size} states exceeds the cap of {cap}")


class InfeasibleError(SizingError):
    """No finite answer satisfies the outage target"""


class NumericalError(SizingError):
    """The eigen solver produced an unusable decomposition"""

    def __init__(self, message: str, residuals: Optional[List[float]] = None):
        self.residuals = residuals or []
        if self.residuals:
            message += f" (max residual {max(self.residuals):.3e})"
        super().__init__(message)


class ConditioningError(SizingError):
    """The boundary-condition system is singular"""

    def __init__(self, message: str, condition_number: float):
        self.condition_number = condition_number
        super().__init__(f"{message} (condition number {condition_number:.3e})")


class UnsupportedEngineError(SizingError):
    """The selected engine cannot handle this population"""


class UnsupportedDimensionError(SizingError):
    """The operation is only defined for a fixed number of classes"""


class UndefinedSavingsError(SizingError):
    """Peak-allocation storage is zero so savings are undefined"""


class EstimatorError(SizingError):
    """The Monte Carlo estimator cannot produce the requested statistic"""


class DegenerateInputError(SizingError):
    """The simulated chain has a state without outgoing transitions"""


class ScenarioError(SizingError):
    """A scenario document is malformed"""

    def __init__(
        self, message: str, line: Optional[int] = None, field: Optional[str] = None
    ):
        self.line = line
        self.field = field
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        if location:
            message = f"{message} [{', '.join(location)}]"
        super().__init__(message)

