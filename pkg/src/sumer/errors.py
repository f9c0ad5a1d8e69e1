class SumerError(Exception):
    """Base class for all library errors."""


class ValidationError(SumerError):
    """Bad input, bad spec, or a violated precondition. CLI exit code 2."""


class RuntimeFailure(SumerError):
    """Failure while executing an otherwise valid request. CLI exit code 1."""
