"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class GeometryError(RuntimeError):
    """A mesh became invalid (degenerate or inverted cell)."""


class PositivityError(RuntimeError):
    """Density lost nonnegativity during time stepping."""

    def __init__(self, cell, value, message=None):
        self.cell = cell
        self.value = value
        if message is None:
            message = (
                f"negative density {value:.3e} in cell {cell}; "
                "the CFL contract is empirical - retry with a smaller cfl_number"
            )
        super().__init__(message)


class PreconditionError(ValueError):
    """A documented precondition of a diagnostic was violated."""


class ConfigError(ValueError):
    """Scenario configuration is invalid; carries every violation found."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
