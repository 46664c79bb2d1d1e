"""Exception hierarchy. CLI exit codes hang off the base classes."""


class SqlRobustError(Exception):
    exit_code = 1


class InputError(SqlRobustError):
    """Unreadable or malformed input (files, rows, SQL text)."""

    exit_code = 2


class TransportError(SqlRobustError):
    """A remote predictor or proposer could not be reached."""

    exit_code = 3


class ProtocolError(TransportError):
    """The remote side answered, but not in the agreed wire format."""


class PredictTimeout(TransportError):
    def __init__(self, request_id, timeout):
        super().__init__(f"request {request_id} timed out after {timeout}s")
        self.request_id = request_id


class ValidationError(SqlRobustError):
    """A value violates a documented invariant."""

    exit_code = 4


class SchemaParseError(InputError):
    def __init__(self, path, detail):
        super().__init__(f"{path}: {detail}")
        self.path = path


class PlanValidationError(ValidationError):
    pass


class AlignmentError(ValidationError):
    pass


class SqlParseError(InputError):
    """Base for SQL errors; ``offset`` is a character index into the text."""

    def __init__(self, message, offset=None):
        where = f" at offset {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")
        self.offset = offset


class SqlSyntaxError(SqlParseError):
    pass


class SqlBindError(SqlParseError):
    def __init__(self, message, identifier, offset=None):
        super().__init__(message, offset)
        self.identifier = identifier


class SqlUnsupportedError(SqlParseError):
    pass
