"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when inputs have mismatched dimensions or violate invariants."""


class InfeasibleTargetError(InvalidInputError):
    """A hyperplane target cannot be reached from the probability simplex."""

    def __init__(self, index, message):
        super().__init__(f"target {index}: {message}")
        self.index = index


class NumericalFailureError(RuntimeError):
    """An iterative method stopped at its iteration cap without converging."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual
