"""Exception types with CLI exit-code significance."""


class PipelineError(Exception):
    """Base class for pipeline failures."""


class IngestError(PipelineError):
    """Corpus stream could not be read at all."""


class NoCandidates(PipelineError):
    """Extractive generation was asked to run with an empty ranked-candidate list."""


class BackendUnavailable(PipelineError):
    """External backend did not answer within the retry budget."""


class ProtocolViolation(PipelineError):
    """External backend answered with a malformed or contract-breaking payload."""
