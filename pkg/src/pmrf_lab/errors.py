"""Exception types raised across the package."""


class PmrfError(ValueError):
    """Base class for all contract violations in this package."""


class NonSymmetric(PmrfError):
    pass


class BadKernel(PmrfError):
    pass


class DegenerateSize(PmrfError):
    pass


class BadChannels(PmrfError):
    pass


class BadShape(PmrfError):
    pass


class ShapeMismatch(PmrfError):
    pass


class NonFinite(PmrfError):
    pass


class TooFewSamples(PmrfError):
    pass


class Singular(PmrfError):
    pass


class BadMagic(PmrfError):
    pass


class Truncated(PmrfError):
    pass


class ConfigError(PmrfError):
    pass


class StageError(RuntimeError):
    """Wraps a failure inside one experiment stage, tagged with the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
