"""Shared exception types with stable machine-readable codes."""

from __future__ import annotations


class RevtraitsError(Exception):
    """Base class; ``code`` is a stable identifier tests and callers match on."""

    code = "E_GENERIC"

    def __init__(self, message: str, *, code: str | None = None, **context):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.context = context


class ArgumentError(RevtraitsError):
    code = "E_ARGUMENT"


class IngestError(RevtraitsError):
    """Per-line ingestion failure; carries the 1-based line number."""

    code = "E_INGEST"

    def __init__(self, message: str, *, line_no: int, code: str | None = None, **context):
        super().__init__(message, code=code, **context)
        self.line_no = line_no


class MetadataConflictError(IngestError):
    """Same physician_id seen with contradictory metadata; ``fields`` lists them."""

    code = "E_CONFLICT"

    def __init__(self, message: str, *, line_no: int, fields: list[str]):
        super().__init__(message, line_no=line_no, fields=fields)
        self.fields = fields


class SchemaError(RevtraitsError):
    """Strict-parse failure. ``code`` is one of E_NO_ENVELOPE, E_BAD_TRAIT,
    E_SCHEMA, E_COUNT, E_DUP, E_ENUM, E_RANGE; ``fragment`` holds the
    offending text."""

    code = "E_SCHEMA"

    def __init__(self, message: str, *, code: str, fragment: str = ""):
        super().__init__(message, code=code)
        self.fragment = fragment


class TemplateError(RevtraitsError):
    code = "E_TEMPLATE"


class ConfigurationError(RevtraitsError):
    code = "E_CONFIG"


class TransportError(RevtraitsError):
    """Network-level failure; ``attempts`` counts calls made including retries."""

    code = "E_TRANSPORT"

    def __init__(self, message: str, *, attempts: int = 1, transient: bool = True):
        super().__init__(message)
        self.attempts = attempts
        self.transient = transient


class ExtractionFailedError(RevtraitsError):
    """All extraction attempts exhausted; keeps the last parse diagnostics."""

    code = "E_EXTRACTION"

    def __init__(self, message: str, *, attempts: int, last_error: SchemaError | None):
        super().__init__(message)
        self.attempts = attempts
        self.last_error = last_error


class MetricError(RevtraitsError):
    code = "E_EMPTY"


class StatsError(RevtraitsError):
    code = "E_DEGENERATE"


class StageError(RevtraitsError):
    """A pipeline command ran before its prerequisite stage; message carries a hint."""

    code = "E_STAGE"
