"""Exception types raised across the package."""


class SpecalignError(Exception):
    """Base class for all package-specific errors."""


class SymmetryError(SpecalignError):
    """Input matrix is not symmetric within tolerance."""


class ConvergenceError(SpecalignError):
    """Iterative solver failed to converge within its iteration cap."""


class DimensionError(SpecalignError):
    """Operands have incompatible shapes or sizes."""


class GraphConstructionError(SpecalignError):
    """Invalid neighbor count or too few vertices for a kNN graph."""


class InvalidTemperatureError(SpecalignError):
    """Sharpening temperature must be positive."""


class InsufficientMemoryError(SpecalignError):
    """Memory bank does not hold enough initialized slots for voting."""


class DataFormatError(SpecalignError):
    """Malformed dataset file; the message names the offending line."""


class InsufficientClassError(SpecalignError):
    """A class has fewer samples than the requested per-class count."""


class ConfigError(SpecalignError):
    """Invalid or inconsistent run configuration."""


class DivergenceError(SpecalignError):
    """Training produced a non-finite loss; the message names the iteration."""

    def __init__(self, iteration: int, detail: str = ""):
        self.iteration = iteration
        msg = f"non-finite loss at iteration {iteration}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
