"""Exception hierarchy. Each family maps to one CLI exit code."""


class ProbeprintError(Exception):
    exit_code = 1


class IngestError(ProbeprintError):
    exit_code = 3


class LabeledFrameError(IngestError):
    def __init__(self, frame_index, message=None):
        self.frame_index = frame_index
        super().__init__(message or f"frame {frame_index} has no resolvable device label")


class DissectionError(IngestError):
    def __init__(self, message, element_id=None, offset=None, frame_index=None):
        self.element_id = element_id
        self.offset = offset
        self.frame_index = frame_index
        super().__init__(message)


class DatasetFormatError(IngestError):
    pass


class CapacityError(ProbeprintError):
    """Not enough distinct pairs to satisfy the request."""

    exit_code = 4

    def __init__(self, message, maximum):
        self.maximum = maximum
        super().__init__(message)


class SplitError(ProbeprintError):
    exit_code = 4


class ParameterError(ProbeprintError):
    exit_code = 2


class TrainingError(ProbeprintError):
    exit_code = 4


class MatchingError(ProbeprintError):
    exit_code = 5


class ModelFormatError(ProbeprintError):
    exit_code = 4


class ModelVersionError(ModelFormatError):
    def __init__(self, found, supported):
        self.found = found
        self.supported = supported
        super().__init__(f"unsupported model version {found} (this build reads version {supported})")


class EvaluationError(ProbeprintError):
    exit_code = 5


class ProtocolError(EvaluationError):
    pass
