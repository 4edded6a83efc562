"""Exception classes shared across the package."""


class UnilandError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(UnilandError):
    """Invalid configuration: unknown scheme, bad expert counts, malformed files."""


class ShapeError(UnilandError):
    """Tensor shape or channel-count mismatch."""


class CapacityError(UnilandError):
    """More targets than queries: the matcher cannot assign every target."""


class NumericError(UnilandError):
    """Non-finite values where finite ones are required."""


class IncompletePredictionError(UnilandError):
    """A unified-id required by a scheme is missing from a prediction."""


class DegenerateNormalizerError(UnilandError):
    """Metric normalizer is zero or negative."""


class UndefinedStatisticError(UnilandError):
    """A statistic requested over an empty collection."""


class DegenerateGatingError(UnilandError):
    """A gating vector is identically zero, so cosine similarity is undefined."""
