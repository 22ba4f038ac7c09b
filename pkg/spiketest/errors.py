"""Exception hierarchy.

Every error is a ``ValueError`` so callers that only guard against bad input
keep working; ``exit_code`` is what the command line returns for it.
"""
from spiketest.constants import (
    EXIT_EMPTY_RANGE,
    EXIT_ESTIMATOR,
    EXIT_NOT_DISTANT,
    EXIT_NUMERICAL,
    EXIT_VALIDATION,
)


class SpikeTestError(ValueError):
    exit_code = EXIT_VALIDATION


class InvalidMeasure(SpikeTestError):
    pass


class InvalidModel(SpikeTestError):
    pass


class InvalidConfig(SpikeTestError):
    pass


class NotDistantSpike(SpikeTestError):
    exit_code = EXIT_NOT_DISTANT


class BelowThreshold(SpikeTestError):
    exit_code = EXIT_NOT_DISTANT


class EmptyRange(SpikeTestError):
    exit_code = EXIT_EMPTY_RANGE


class NumericalError(SpikeTestError):
    exit_code = EXIT_NUMERICAL


class PoleAtAtom(NumericalError):
    pass


class OutsideDomain(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class DegenerateSpikes(NumericalError):
    pass


class EstimatorError(SpikeTestError):
    """Raised when plug-in estimation fails on one data set."""

    exit_code = EXIT_ESTIMATOR


class ZeroBulk(EstimatorError):
    pass


class DegenerateEigenvalue(EstimatorError):
    pass


class NegativeNoiseEstimate(EstimatorError):
    pass


class InsufficientSeparation(EstimatorError):
    pass
