"""Exception hierarchy shared by every stage of the pipeline."""


class LegalAttrError(Exception):
    """Base class for all package errors."""


class ValidationError(LegalAttrError, ValueError):
    """Input failed a precondition."""


# tokenizer
class DuplicateTokenError(ValidationError):
    def __init__(self, token, line):
        super().__init__(f"duplicate token {token!r} on line {line}")
        self.token = token
        self.line = line


class MissingUnkError(ValidationError):
    pass


class LeadingContinuationError(ValidationError):
    pass


class EmptyQueryError(ValidationError):
    pass


# model
class EmptyInputError(ValidationError):
    pass


class OptionCountMismatchError(ValidationError):
    pass


class MixedKindsError(ValidationError):
    pass


class EmptyDatasetError(ValidationError):
    pass


class CheckpointError(ValidationError):
    pass


# attribution
class ShapeMismatchError(ValidationError):
    pass


class ZeroStepsError(ValidationError):
    pass


# analytics
class NonpositiveBinError(ValidationError):
    pass


class EmptyGroupError(ValidationError):
    pass


class RaggedMatrixError(ValidationError):
    pass


# ingestion
class IngestError(ValidationError):
    def __init__(self, message, line=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


class BadLabelError(IngestError):
    pass


class EmptySentenceError(IngestError):
    pass


class OptionCountError(IngestError):
    pass


class AnswerRangeError(IngestError):
    pass


class HeaderMismatchError(IngestError):
    pass


# orchestration
class ConfigError(ValidationError):
    pass


class StageError(LegalAttrError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
