"""Exception hierarchy shared by all modules."""


class MovegraphError(Exception):
    """Base class for every error raised by this package."""


class RecordingFormatError(MovegraphError, ValueError):
    """A recording file or channel violates the data model."""


class GeometryError(MovegraphError, ValueError):
    pass


class TriggerError(MovegraphError, ValueError):
    """A trigger cannot be evaluated against the given channel."""


class GrammarError(MovegraphError, ValueError):
    """A movement grammar failed validation."""


class PlanError(MovegraphError, ValueError):
    pass


class SearchCapExceeded(MovegraphError, RuntimeError):
    """The recognizer explored more states than allowed."""

    def __init__(self, stage: str, limit: int):
        super().__init__(f"{stage}: exceeded {limit} explored search states")
        self.stage = stage
        self.limit = limit
