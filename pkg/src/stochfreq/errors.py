"""Exception hierarchy.

Every error carries a ``category`` that the CLI maps onto an exit code:
``config`` -> 2, ``numeric`` -> 3, ``io`` -> 4.
"""

from __future__ import annotations


class StochFreqError(Exception):
    category = "numeric"


class ConfigError(StochFreqError, ValueError):
    category = "config"


class NumericError(StochFreqError, ArithmeticError):
    category = "numeric"


class RunIOError(StochFreqError, OSError):
    category = "io"


# quantile ingest
class IngestError(ConfigError):
    pass


class MalformedRecord(IngestError):
    pass


class NonMonotoneProportions(IngestError):
    pass


class CrossingQuantiles(IngestError):
    pass


class LengthMismatch(IngestError):
    pass


class ProportionOutOfRange(IngestError):
    pass


class UOutOfRange(IngestError):
    pass


# gmm
class TooFewSamples(ConfigError):
    pass


class EmptyClusterUnrecoverable(NumericError):
    pass


class DegenerateComponent(NumericError):
    pass


class InvalidGmm(ConfigError):
    pass


# ito
class InvalidDriftRate(ConfigError):
    pass


class VanishingDensity(NumericError):
    pass


class QuadratureFailure(NumericError):
    pass


# sfr
class InvalidParams(ConfigError):
    pass


class DegenerateAggregation(NumericError):
    pass


class UnstableSystem(NumericError):
    def __init__(self, message: str, eigenvalue: complex | None = None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


# analytic solver
class NonFiniteInput(NumericError):
    pass


class SingularA(NumericError):
    pass


class IllConditionedEigenbasis(NumericError):
    pass


class NonConvergedFallback(NumericError):
    pass


class ComplexResidue(NumericError):
    pass


class TimeNotOnGrid(ConfigError):
    pass


class AlphaOutOfRange(ConfigError):
    pass


# monte carlo
class MisalignedCaptureTime(ConfigError):
    pass


class NonFiniteState(NumericError):
    pass


class UnknownCaptureTime(ConfigError):
    pass


# metrics
class EmptySamples(ConfigError):
    pass


# cli
class IncompleteRun(RunIOError):
    pass
