"""Exception hierarchy.

Every error derives from :class:`DycaError`.  Errors caused by bad input
derive additionally from :class:`InputError` (a ``ValueError``); errors
raised when a numerical routine breaks down derive from
:class:`NumericalError` (an ``ArithmeticError``).  The CLI maps the two
families to exit codes 1 and 2.
"""

from __future__ import annotations


class DycaError(Exception):
    """Base class for all package errors."""


class InputError(DycaError, ValueError):
    """Invalid or inconsistent input."""


class NumericalError(DycaError, ArithmeticError):
    """A numerical procedure failed on otherwise valid input."""


# -- signal_core ---------------------------------------------------------------


class NonFiniteSample(InputError):
    def __init__(self, channel: int, index: int, value: float | None = None):
        self.channel = channel
        self.index = index
        super().__init__(f"non-finite sample {value!r} at channel {channel}, index {index}")


class EmptySignal(InputError):
    pass


class BadSampleRate(InputError):
    pass


class WindowLongerThanSignal(InputError):
    pass


class ShapeMismatch(InputError):
    pass


# -- linalg --------------------------------------------------------------------


class NotPositiveDefinite(NumericalError):
    def __init__(self, pivot: int, value: float | None = None):
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite: pivot {pivot} is {value!r}")


class NoConvergence(NumericalError):
    pass


class ExactlySingular(NumericalError):
    pass


# -- dyca ----------------------------------------------------------------------


class DegenerateCorrelation(NumericalError):
    pass


class TooFewSamples(InputError):
    pass


class ZeroDenominator(NumericalError):
    pass


class RankDeficientBasis(NumericalError):
    pass


class RankDeficientRegressors(NumericalError):
    pass


# -- baselines -----------------------------------------------------------------


class KTooLarge(InputError):
    pass


class WhiteningFailed(NumericalError):
    pass


# -- synth ---------------------------------------------------------------------


class TrajectoryDiverged(NumericalError):
    pass


class BadStep(InputError):
    pass


class RankDeficientMixing(InputError):
    pass


class OverlappingBursts(InputError):
    pass


# -- io ------------------------------------------------------------------------


class ParseError(InputError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None,
                 column: int | None = None):
        self.path = path
        self.line = line
        self.column = column
        where = ", ".join(
            part for part in (
                path and f"file {path}",
                line is not None and f"line {line}",
                column is not None and f"column {column}",
            ) if part
        )
        super().__init__(f"{message} ({where})" if where else message)


class NonUniformSampling(InputError):
    pass


class OverlapError(InputError):
    pass


class ConfigError(InputError):
    pass
