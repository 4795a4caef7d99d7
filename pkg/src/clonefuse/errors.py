"""Exception hierarchy shared across the pipeline."""


class CloneFuseError(Exception):
    """Base class; the CLI maps every subclass to a data/config exit code."""


class IngestError(CloneFuseError):
    pass


class LexError(CloneFuseError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ConfigError(CloneFuseError):
    pass


class ModelError(CloneFuseError):
    pass


class TrainingError(CloneFuseError):
    pass
