"""Exception hierarchy shared across the pipeline."""


class SlagFlowError(Exception):
    """Base class for every error raised by slagflow."""


# ingest
class MissingFile(SlagFlowError, FileNotFoundError):
    pass


class MalformedManifest(SlagFlowError, ValueError):
    pass


class DuplicateEntry(MalformedManifest):
    pass


class ParseError(SlagFlowError, ValueError):
    pass


class AxisLengthMismatch(SlagFlowError, ValueError):
    pass


class EmptyRecording(SlagFlowError, ValueError):
    pass


class InvalidSpec(SlagFlowError, ValueError):
    pass


# preprocessing
class DegenerateSignal(SlagFlowError, ValueError):
    pass


class TooShort(SlagFlowError, ValueError):
    pass


class ZeroSignal(SlagFlowError, ValueError):
    pass


class NotFitted(SlagFlowError, RuntimeError):
    pass


class UnknownAxis(SlagFlowError, KeyError):
    pass


class EmptyResult(SlagFlowError, ValueError):
    pass


# loading
class AxisMismatch(SlagFlowError, ValueError):
    pass


class UnalignedAxes(SlagFlowError, ValueError):
    pass


class LabelConflict(SlagFlowError, ValueError):
    pass


class ShapeMismatch(SlagFlowError, ValueError):
    pass


# models
class InvalidArg(SlagFlowError, ValueError):
    pass


class ShapeError(SlagFlowError, ValueError):
    pass


class NonFiniteActivation(SlagFlowError, FloatingPointError):
    pass


class NonFiniteInput(SlagFlowError, ValueError):
    pass


# training
class TooFewSamples(SlagFlowError, ValueError):
    pass


class EmptySplit(SlagFlowError, ValueError):
    pass


class NonFiniteLoss(SlagFlowError, FloatingPointError):
    pass


class EmptyInput(SlagFlowError, ValueError):
    pass


# experiments
class TooFewDomains(SlagFlowError, ValueError):
    pass


class ExperimentFailed(SlagFlowError, RuntimeError):
    """A run inside an experiment failed; ``partial`` keeps the runs that finished."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConfigError(SlagFlowError, ValueError):
    pass
