"""Exception types shared across the toolkit."""


class SlowpointsError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(SlowpointsError):
    """A tensor has an incompatible shape; the message names the offender."""


class ConvergenceError(SlowpointsError):
    """An iterative solver hit its iteration cap without converging."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class InsufficientDataError(SlowpointsError):
    """Too few points for the requested statistic."""


class DivergenceError(SlowpointsError):
    """Training loss became non-finite."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ParameterError(SlowpointsError):
    """An argument is outside its supported domain."""


class FitRangeError(SlowpointsError):
    """No usable linear region for a slope fit."""


class ParseError(SlowpointsError):
    """A table or record failed to parse; message carries the location."""


class CheckpointError(SlowpointsError):
    """Base for checkpoint load failures."""


class VersionError(CheckpointError):
    """Unrecognized serialization format version."""


class ChecksumError(CheckpointError):
    """Payload bytes do not match the embedded checksum (or are unreadable)."""


class ArchitectureMismatchError(CheckpointError):
    """Stored arrays do not match the requested architecture."""


class StageError(SlowpointsError):
    """A pipeline stage failed; `stage` names it."""

    def __init__(self, stage, message):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
