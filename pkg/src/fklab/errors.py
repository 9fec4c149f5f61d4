"""Exception hierarchy shared by every module and mapped to CLI exit codes."""

from __future__ import annotations


class FKLError(Exception):
    """Base class for library errors."""

    exit_code = 1


class ParseError(FKLError, ValueError):
    """Malformed element or matrix text."""

    exit_code = 2

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class SchemaError(FKLError, ValueError):
    """An experiment spec or config failed validation."""

    exit_code = 2

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class GroupMismatchError(FKLError, ValueError):
    exit_code = 2


class ShapeError(FKLError, ValueError):
    exit_code = 2


class ResourceCeilingError(FKLError, RuntimeError):
    """A configured size or cost ceiling would be exceeded."""

    exit_code = 3

    def __init__(self, ceiling: str, requested, limit):
        self.ceiling = ceiling
        self.requested = requested
        self.limit = limit
        super().__init__(f"resource ceiling '{ceiling}' exceeded: requested {requested}, limit {limit}")


class OracleRefusal(FKLError, RuntimeError):
    """A reference oracle declined to produce a value (e.g. no certified spectral gap)."""

    exit_code = 4


class PreconditionError(FKLError, ValueError):
    """Operation called outside its documented domain."""

    exit_code = 2
