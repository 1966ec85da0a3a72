"""Typed errors raised across the evaluation pipeline.

Library code raises these; ``cli.py`` is the only place that turns them into
exit codes.
"""


class EvalError(Exception):
    """Root of every error raised by this package."""


class ConfigError(EvalError):
    pass


# --- schema ---

class SchemaError(EvalError):
    pass


class MalformedJson(SchemaError):
    pass


class UnknownDimension(SchemaError):
    def __init__(self, name: str):
        super().__init__(f"unknown dimension: {name!r}")
        self.name = name


class UnknownField(SchemaError):
    def __init__(self, name: str):
        super().__init__(f"unknown field: {name!r}")
        self.name = name


class EmptyPrompt(SchemaError):
    pass


class MissingReferenceImage(SchemaError):
    pass


class InvalidRecord(SchemaError):
    pass


# --- flowcore ---

class FlowError(EvalError):
    pass


class DimensionMismatch(FlowError):
    pass


class FrameTooSmall(FlowError):
    pass


class InsufficientCorners(FlowError):
    def __init__(self, found: int, required: int):
        super().__init__(f"found {found} corners, need at least {required}")
        self.found = found
        self.required = required


class DegenerateConfiguration(FlowError):
    pass


class PointAtInfinity(FlowError):
    pass


class FlowFormatError(FlowError):
    pass


# --- temporal tools ---

class ToolError(EvalError):
    pass


class EmptyInput(ToolError):
    pass


class NonFiniteInput(ToolError):
    pass


class TooFewFrames(ToolError):
    pass


class EmptyGrid(ToolError):
    pass


class EmptyTable(ToolError):
    pass


class LengthMismatch(ToolError):
    pass


class BackendFailure(ToolError):
    pass


# --- agent / backends ---

class AgentError(EvalError):
    pass


class BackendUnavailable(AgentError):
    pass


class StructuringFailed(AgentError):
    pass


class ExpansionFailed(AgentError):
    def __init__(self, message: str, missing: tuple[str, ...] = ()):
        super().__init__(message)
        self.missing = missing


class EmptyVideo(AgentError):
    pass


class NoActiveDimensions(AgentError):
    pass


class TooManyImages(AgentError):
    pass


class JudgingFailed(AgentError):
    pass


class JudgeParseError(AgentError):
    """Judger output could not be turned into judgments; triggers a re-prompt."""


class MalformedOutput(JudgeParseError):
    pass


class MissingDimension(JudgeParseError):
    def __init__(self, dimension: str):
        super().__init__(f"missing dimension: {dimension}")
        self.dimension = dimension


class DuplicateDimension(JudgeParseError):
    def __init__(self, dimension: str):
        super().__init__(f"duplicate dimension: {dimension}")
        self.dimension = dimension


class UnknownAnswer(JudgeParseError):
    def __init__(self, text: str):
        super().__init__(f"unknown answer: {text!r} (expected yes, half or no)")
        self.text = text


class MissingReason(JudgeParseError):
    def __init__(self, dimension: str):
        super().__init__(f"a reason is required for dimension {dimension} when the answer is not yes")
        self.dimension = dimension


# --- alignment ---

class AlignmentError(EvalError):
    pass


class EmptyJoin(AlignmentError):
    pass


class MismatchedSets(AlignmentError):
    pass


class UnknownFormat(AlignmentError):
    pass


class UndefinedCorrelation(AlignmentError):
    pass


# --- video loading ---

class VideoLoadError(EvalError):
    pass


class MissingManifest(VideoLoadError):
    pass


class MissingFrame(VideoLoadError):
    def __init__(self, index: int):
        super().__init__(f"missing frame {index}")
        self.index = index


class UnsupportedFormat(VideoLoadError):
    pass


class VideoDimensionMismatch(VideoLoadError):
    pass
