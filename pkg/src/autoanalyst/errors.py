"""Exception taxonomy for the whole package.

Every error a caller is expected to catch derives from AnalystError, so
`except AnalystError` at the CLI boundary cleanly separates content
failures (exit 1) from genuine bugs.
"""

from __future__ import annotations


class AnalystError(Exception):
    """Base class for all expected failures."""


class UsageError(AnalystError):
    """Bad invocation or configuration; maps to CLI exit code 2."""


# --- corpus / manifest ----------------------------------------------------

class ManifestParseError(AnalystError):
    pass


class MissingDatabase(AnalystError):
    pass


class NotADatabase(AnalystError):
    pass


class UnreadableFile(AnalystError):
    pass


# --- LLM gateway ----------------------------------------------------------

class AuthError(AnalystError):
    pass


class RateLimited(AnalystError):
    pass


class CassetteMiss(AnalystError):
    pass


class TransportError(AnalystError):
    pass


class EmptyResponse(AnalystError):
    pass


# --- prompt templating ----------------------------------------------------

class EmptySlot(AnalystError):
    pass


# --- plan parsing / validation --------------------------------------------

class NoJsonBlock(AnalystError):
    pass


class BadPlanShape(AnalystError):
    pass


class NonSelectSql(AnalystError):
    pass


class MultipleStatements(AnalystError):
    pass


class UnknownTable(AnalystError):
    def __init__(self, name: str):
        super().__init__(f"unknown table: {name}")
        self.name = name


class UnknownColumn(AnalystError):
    def __init__(self, table: str, name: str):
        super().__init__(f"unknown column: {table}.{name}")
        self.table = table
        self.name = name


class ChartShapeError(AnalystError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


# --- extraction / codec ---------------------------------------------------

class SqlRuntimeError(AnalystError):
    pass


class RowLimitExceeded(AnalystError):
    pass


class DbLocked(AnalystError):
    pass


class RaggedRow(AnalystError):
    pass


class EmptyFile(AnalystError):
    pass


# --- charts ---------------------------------------------------------------

class ColumnMissing(AnalystError):
    pass


class NonNumericY(AnalystError):
    pass


class EmptyData(AnalystError):
    pass


class PieDomainError(AnalystError):
    pass


# --- analysis -------------------------------------------------------------

class UnparseableAnalysis(AnalystError):
    pass


# --- knowledge retrieval --------------------------------------------------

class SearchAuthError(AnalystError):
    pass


class SearchTransportError(AnalystError):
    pass


# --- evaluation -----------------------------------------------------------

class RangeViolation(AnalystError):
    pass


class DuplicateAnnotation(AnalystError):
    pass


class EmptyCell(AnalystError):
    pass


class NonPositiveInput(AnalystError):
    pass


class DivisionByZero(AnalystError):
    pass


# --- pipeline / sandbox ---------------------------------------------------

class RunDirectoryExists(AnalystError):
    pass


class SandboxSpawnError(AnalystError):
    pass
