"""Exception hierarchy shared by the library and the experiment harness."""


class SchoenbatError(Exception):
    pass


class DimensionError(SchoenbatError, ValueError):
    """Operand shapes are inconsistent or a dimension is non-positive."""


class NonFiniteError(SchoenbatError, ValueError):
    pass


class KernelDomainError(SchoenbatError, ValueError):
    """A kernel was evaluated outside its radius of convergence."""

    def __init__(self, message, radius, where=None):
        super().__init__(message)
        self.radius = radius
        self.where = where


class SeriesTruncationError(SchoenbatError, ArithmeticError):
    """The Maclaurin series did not reach the tolerance within ``max_terms``."""

    def __init__(self, message, partial, terms):
        super().__init__(message)
        self.partial = partial
        self.terms = terms


class DegenerateRowError(SchoenbatError, ArithmeticError):
    """An attention row has a zero (or guard-small) normalizer."""

    def __init__(self, message, rows):
        super().__init__(message)
        self.rows = rows


class FitDegenerateError(SchoenbatError, ValueError):
    pass


class ConfigError(SchoenbatError, ValueError):
    pass
