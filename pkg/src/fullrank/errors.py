"""Exception hierarchy shared across the package.

ValidationError and its subclasses mark problems with user-supplied input
(files, configs, CLI arguments) and map to CLI exit code 1; everything else
raised during a run maps to exit code 2.
"""


class FullrankError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(FullrankError):
    """Bad input: malformed file, broken invariant, invalid config."""


class IngestError(ValidationError):
    """A data file failed to parse or violated a corpus invariant."""


class FormatError(ValidationError):
    """A binary or run file does not match its declared layout."""


class StageError(FullrankError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class TrainingDiverged(FullrankError):
    """Training aborted on a non-finite loss; carries a diagnostics dump."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics
