"""Exception types shared across the package."""


class WhiterecError(Exception):
    """Base class for all package-specific errors."""


class ParseError(WhiterecError):
    """A raw interaction file could not be parsed."""


class EmptyDatasetError(WhiterecError):
    """No interactions remain after loading or filtering."""


class SplitError(WhiterecError):
    """The train/validation/test split could not be produced."""


class CapacityError(WhiterecError):
    """A requested dense matrix would exceed the configured memory cap."""


class NotSPDError(WhiterecError):
    """A matrix expected to be symmetric positive definite is not."""


class SingularMatrixError(WhiterecError):
    """A rank-deficient matrix was used where full rank is required."""


class NumericalError(WhiterecError):
    """A numerical routine failed or produced an impossible result."""


class VocabularyMismatchError(WhiterecError):
    """Model and dataset item vocabularies do not agree."""


class EvaluationError(WhiterecError):
    """No users could be evaluated."""


class ConfigError(WhiterecError):
    """Invalid pipeline configuration."""
