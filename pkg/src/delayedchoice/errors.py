"""Exception types shared across the package."""


class InvalidStateError(ValueError):
    """A two-qubit state is non-finite or not normalized."""


class NonUnitaryBasisError(ValueError):
    """A measurement basis fails the orthonormality/completeness check."""

    def __init__(self, residual: float):
        super().__init__(f"basis is not unitary: residual {residual:.3g} > 1e-12")
        self.residual = residual


class InvalidEnsembleError(ValueError):
    """An ensemble or alpha table violates its invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ZeroMarginal(ArithmeticError):
    """Conditioning on a later outcome that has zero probability."""

    def __init__(self, outcome: int, marginal: float):
        super().__init__(f"later outcome A={outcome} has marginal {marginal:.3g}")
        self.outcome = outcome
        self.marginal = marginal


class EmptySubensemble(ValueError):
    """An estimator was handed no records."""


class ConfigParseError(ValueError):
    """The scenario file is not well-formed YAML/JSON or not a mapping."""


class ConfigValidationError(ValueError):
    """The scenario file parsed but violates the schema; carries every violation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.violations))
