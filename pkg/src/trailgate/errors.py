"""Exception hierarchy shared by every stage of the pipeline."""


class TrailGateError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(TrailGateError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(TrailGateError):
    pass


class LabelError(TrailGateError):
    pass


class ConfigError(TrailGateError):
    pass


class StageError(TrailGateError):
    """A pipeline stage failed; ``stage`` names which one."""

    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class DivergenceError(TrailGateError):
    pass
