"""Exception hierarchy shared by every module.

Each error carries the process exit code the CLI maps it to:
1 for runtime failures, 3 for data-invariant violations.
"""


class FramebitsError(Exception):
    exit_code = 1


class DataError(FramebitsError, ValueError):
    """Input data violates a documented invariant."""

    exit_code = 3


# media_io
class InvalidGeometry(DataError):
    pass


class TruncatedFile(DataError):
    pass


class IndexOutOfRange(FramebitsError, IndexError):
    pass


# complexity
class GridMismatch(DataError):
    pass


# gop
class InvalidConfig(DataError):
    pass


# dataset
class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(ParseError):
    pass


class InvariantViolation(ParseError):
    pass


class MissingFeature(DataError):
    pass


class Misalignment(DataError):
    pass


class TooFewSequences(DataError):
    pass


# models
class DegenerateInput(DataError):
    pass


class FeatureMismatch(DataError):
    pass


class EmptyValidation(DataError):
    pass


class CorruptFile(FramebitsError):
    pass


class VersionMismatch(CorruptFile):
    pass


# ratecontrol
class NonPositiveBits(DataError):
    pass


class EmptyGop(DataError):
    pass


class NonPositivePrediction(NonPositiveBits):
    pass


class ReplayMiss(FramebitsError, LookupError):
    pass


# metrics
class ZeroTruth(DataError):
    pass


class LengthMismatch(DataError):
    pass


class ZeroVariance(DataError):
    pass


class NoOverlap(DataError):
    pass


class DegenerateCurve(DataError):
    pass


class ZeroTarget(DataError):
    pass
