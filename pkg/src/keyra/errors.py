class KeyraError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(KeyraError):
    """Malformed schema file or invalid relation signature."""


class InstanceError(KeyraError):
    """Data that does not fit its schema (arity, typing, domain)."""


class QueryError(KeyraError):
    """Query text that does not parse or type-check against the schema."""


class RewritingError(KeyraError):
    """The requested rewriting does not exist for this query/operator."""


class CapExceededError(KeyraError):
    """An exhaustive enumeration would exceed the configured ceiling."""


class EmitError(KeyraError):
    """A formula shape the SQL emitter does not support."""
