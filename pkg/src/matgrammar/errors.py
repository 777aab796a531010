"""Exception types shared across the package."""


class MatGrammarError(Exception):
    """Base class for all package errors."""


class DimensionConflict(MatGrammarError):
    """No consistent dimension assignment exists for an expression."""


class MissingLeaf(MatGrammarError):
    """A binding does not cover some leaf of the expression."""


class ShapeMismatch(MatGrammarError):
    """A matrix does not match the shape its parameters imply."""


class UnsupportedForm(MatGrammarError):
    """Expression lacks the additive Gaussian noise term required here."""


class InvalidHyper(MatGrammarError):
    """Nonpositive or otherwise invalid hyperparameter."""


class ParseError(MatGrammarError):
    """Malformed structure text or data file; carries a location."""

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class RaggedRows(MatGrammarError):
    """CSV rows have differing lengths."""


class TooSmall(MatGrammarError):
    """Holdout would leave an observed block smaller than 2x2."""


class NumericalFailure(MatGrammarError):
    """Non-recoverable numerical problem (non-PD covariance, non-finite bound)."""


class NonRepresentable(MatGrammarError):
    """A random decomposition cannot absorb the target exactly."""
