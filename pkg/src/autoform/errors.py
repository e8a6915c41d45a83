"""Exception hierarchy shared across the toolkit."""


class AutoformError(Exception):
    """Base class for all toolkit errors."""


# -- code wrapping -----------------------------------------------------------

class MalformedWrapper(AutoformError):
    """Theory header present but the closing marker is missing."""


# -- LLM backends ------------------------------------------------------------

class BackendError(AutoformError):
    pass


class BackendUnavailable(BackendError):
    """Network failure or HTTP >= 500 that survived the retry budget."""


class RateLimited(BackendError):
    """HTTP 429 that survived the retry budget."""


class ContextOverflow(BackendError):
    """Request rejected by the backend for excessive length."""


class ScriptExhausted(BackendError):
    """A scripted backend received more calls than it has replies."""


class EmptyGeneration(AutoformError):
    """Code extraction from an LLM reply yielded empty text."""


class JudgmentUnparseable(AutoformError):
    """A judge reply contained no recognizable verdict token."""


# -- knowledge base ----------------------------------------------------------

class ParseError(AutoformError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = "" if line is None else f" (line {line}" + (
            f", column {column})" if column is not None else ")")
        super().__init__(f"{message}{loc}")


class DuplicateId(AutoformError):
    pass


class MissingField(ParseError):
    pass


# -- provers -----------------------------------------------------------------

class ProverError(AutoformError):
    pass


class ProverTimeout(ProverError):
    """Check exceeded its timeout; distinct from a failed check."""


class ProverCrashed(ProverError):
    """The prover session died mid-check; the session is recycled."""


class SessionUnavailable(ProverError):
    """No session could be obtained from the pool."""


class LaunchFailed(ProverError):
    """Prover process/server could not be started or reached."""

    def __init__(self, message, startup_output=""):
        self.startup_output = startup_output
        super().__init__(message)


class ProtocolError(ProverError):
    """Prover reply was not parseable as the expected protocol shape."""


# -- pipelines / harness -----------------------------------------------------

class PipelineFailed(AutoformError):
    """No item in the run completed."""


class CorruptLog(AutoformError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"{message}" + ("" if line is None else f" (line {line})"))


class EmptyInput(AutoformError):
    pass


class MissingGroundTruth(AutoformError):
    pass
