"""Exception hierarchy shared by every layer of the package."""


class ThresholdNLSError(Exception):
    """Base class for all package errors."""


class InvalidArgument(ThresholdNLSError, ValueError):
    pass


class NoConvergence(ThresholdNLSError):
    pass


class QualitativeFailure(ThresholdNLSError):
    pass


class DegenerateInput(ThresholdNLSError, ValueError):
    pass


class SpectralFailure(ThresholdNLSError):
    pass


class NearSingular(ThresholdNLSError):
    pass


class LinearSolveFailure(ThresholdNLSError):
    pass


class IntegratorFailure(ThresholdNLSError):
    pass


class ModulationFailure(ThresholdNLSError):
    pass


class SpectralDataInvalid(ThresholdNLSError):
    pass


class PreconditionViolation(ThresholdNLSError, ValueError):
    pass


class CheckpointError(ThresholdNLSError):
    """Unreadable, truncated, or incompatible checkpoint file."""


class StageFailure(ThresholdNLSError):
    """Wraps a failure inside the run pipeline with the stage that raised it."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
