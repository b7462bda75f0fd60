"""Exception hierarchy."""


class TapuddError(Exception):
    """Base class for every error raised by the library."""


class InvalidInput(TapuddError, ValueError):
    """Input violates a documented precondition (shape, finiteness, range)."""


class EmptyCluster(TapuddError):
    """A cluster received no rows."""


class NumericalFailure(TapuddError):
    """A factorization or optimisation could not be repaired."""


class ParseError(TapuddError):
    """A feature/score file is malformed."""

    def __init__(self, message, line=None, offset=None):
        self.line = line
        self.offset = offset
        where = ""
        if line is not None:
            where = f" (line {line})"
        elif offset is not None:
            where = f" (offset {offset})"
        super().__init__(f"{message}{where}")


class VersionError(TapuddError):
    """A file was written by a newer format version."""


class IntegrityError(TapuddError):
    """A model archive failed its checksum or is truncated."""
