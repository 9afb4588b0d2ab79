"""Run a SQL plan against SQLite and move tables in and out of data.txt.

The codec is a deliberately plain TSV dialect: one header line, one line
per row, tab-separated, trailing newline. Integers are written bare,
reals use Python's shortest round-trip repr, null is an empty field.
Parsing types each cell back int -> real -> text, empty -> null.
"""

from __future__ import annotations

import math
import re
import sqlite3
from dataclasses import dataclass, field

from .errors import (
    ColumnMissing,
    DbLocked,
    EmptyFile,
    RaggedRow,
    RowLimitExceeded,
    SqlRuntimeError,
)

Cell = int | float | str | None

_INT_RE = re.compile(r"[+-]?[0-9]+")

# generous guard against pathological generated SQL; exceeding it is an
# error, never silent truncation
DEFAULT_ROW_LIMIT = 100_000


@dataclass
class ExtractedData:
    """A small in-memory table: column labels plus typed rows."""

    columns: list[str]
    rows: list[list[Cell]] = field(default_factory=list)

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise ColumnMissing(f"no column named {name!r}") from None

    def column_values(self, name: str) -> list[Cell]:
        i = self.column_index(name)
        return [row[i] for row in self.rows]


def _format_cell(value: Cell) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        # sqlite never hands these back, but be safe
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if "\t" in value or "\n" in value or "\r" in value:
        raise ValueError(f"text cell contains a separator character: {value!r}")
    return value


def _parse_cell(text: str) -> Cell:
    if text == "":
        return None
    if _INT_RE.fullmatch(text):
        return int(text)
    # float() is looser than we want: it strips whitespace and allows
    # underscores, both of which must stay text for round-trips
    if text != text.strip() or "_" in text:
        return text
    try:
        return float(text)
    except ValueError:
        return text


def serialize_data(data: ExtractedData) -> str:
    """Render a table to the data.txt wire format.

    Raises ValueError if a label or text cell embeds a tab or newline,
    since the format has no escaping.
    """
    for name in data.columns:
        if "\t" in name or "\n" in name or "\r" in name:
            raise ValueError(f"column label contains a separator: {name!r}")
    lines = ["\t".join(data.columns)]
    for row in data.rows:
        if len(row) != len(data.columns):
            raise ValueError("row width does not match header")
        lines.append("\t".join(_format_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def parse_data(text: str) -> ExtractedData:
    """Parse data.txt content back into a typed table.

    Raises EmptyFile when there is no header line and RaggedRow when a
    row's width disagrees with the header.
    """
    if text == "":
        raise EmptyFile("no header line")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise EmptyFile("no header line")
    columns = lines[0].split("\t")
    rows: list[list[Cell]] = []
    for n, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != len(columns):
            raise RaggedRow(
                f"line {n}: expected {len(columns)} fields, got {len(fields)}"
            )
        rows.append([_parse_cell(f) for f in fields])
    return ExtractedData(columns=columns, rows=rows)


def execute_sql(
    db_path: str, sql: str, row_limit: int = DEFAULT_ROW_LIMIT
) -> ExtractedData:
    """Run one SELECT against a SQLite file opened read-only.

    Args:
        db_path: path to the database file.
        sql: a single SELECT statement (validated upstream).
        row_limit: hard cap on returned rows; exceeding it raises
            RowLimitExceeded rather than silently truncating.
    """
    try:
        conn = sqlite3.connect(f"file:{db_path}?mode=ro", uri=True, timeout=5.0)
    except sqlite3.OperationalError as exc:
        raise SqlRuntimeError(f"cannot open database: {exc}") from exc
    try:
        try:
            cursor = conn.execute(sql)
            fetched = cursor.fetchmany(row_limit + 1)
        except sqlite3.OperationalError as exc:
            if "locked" in str(exc).lower():
                raise DbLocked(str(exc)) from exc
            raise SqlRuntimeError(str(exc)) from exc
        except sqlite3.DatabaseError as exc:
            raise SqlRuntimeError(str(exc)) from exc
        if len(fetched) > row_limit:
            raise RowLimitExceeded(f"query returned more than {row_limit} rows")
        if cursor.description is None:
            raise SqlRuntimeError("statement produced no result set")
        columns = [d[0] for d in cursor.description]
        rows = [[_from_sqlite(v) for v in row] for row in fetched]
        return ExtractedData(columns=columns, rows=rows)
    finally:
        conn.close()


def _from_sqlite(value: object) -> Cell:
    if isinstance(value, bytes):
        return value.decode("utf-8", "replace")
    return value  # type: ignore[return-value]


def execute_plan(validated, db_file: str, row_limit: int = DEFAULT_ROW_LIMIT):
    """Run a validated plan's SQL; thin wrapper kept for call-site clarity."""
    return execute_sql(db_file, validated.plan.sql, row_limit)


def apply_sort(data: ExtractedData, by: str, direction: str) -> ExtractedData:
    """Return a copy of the table sorted on one column.

    Null sorts before numbers, numbers before text, so mixed columns
    still order deterministically. `direction` is "asc" or "desc".
    """
    idx = data.column_index(by)

    def key(row: list[Cell]) -> tuple:
        v = row[idx]
        if v is None:
            return (0, 0.0, "")
        if isinstance(v, (int, float)):
            return (1, float(v), "")
        return (2, 0.0, v)

    ordered = sorted(data.rows, key=key, reverse=(direction == "desc"))
    return ExtractedData(columns=list(data.columns), rows=ordered)


# --- comparison against a gold extraction ----------------------------------


def _cells_match(a: Cell, b: Cell) -> bool:
    if a is None or b is None:
        return a is None and b is None
    a_num = isinstance(a, (int, float)) and not isinstance(a, bool)
    b_num = isinstance(b, (int, float)) and not isinstance(b, bool)
    if a_num and b_num:
        if isinstance(a, int) and isinstance(b, int):
            return a == b
        return math.isclose(float(a), float(b), rel_tol=1e-9, abs_tol=1e-12)
    if a_num != b_num:
        return False
    return a == b


def _rows_match(a: list[Cell], b: list[Cell]) -> bool:
    return len(a) == len(b) and all(_cells_match(x, y) for x, y in zip(a, b))


def _multiset_equal(xs: list[list[Cell]], ys: list[list[Cell]]) -> bool:
    if len(xs) != len(ys):
        return False
    return _all_fit(xs, ys)


def _all_fit(xs: list[list[Cell]], ys: list[list[Cell]]) -> bool:
    """Greedy injective matching of xs rows into ys rows."""
    remaining = list(ys)
    for row in xs:
        for i, other in enumerate(remaining):
            if _rows_match(row, other):
                del remaining[i]
                break
        else:
            return False
    return True


def _is_subsequence(xs: list[list[Cell]], ys: list[list[Cell]]) -> bool:
    it = iter(ys)
    return all(any(_rows_match(x, y) for y in it) for x in xs)


def compare_to_gold(
    candidate: ExtractedData, gold: ExtractedData, ordered: bool = True
) -> float:
    """Score an extraction against the reference one.

    1.0  identical labels and content (row order matters only when
         `ordered` is set; reals compare with tiny relative tolerance).
    0.5  content right but labels renamed, or labels right with at most
         two gold rows missing and every present row correct.
    0.0  anything else: extra rows, altered values, both defects at once.
    """
    if len(candidate.columns) != len(gold.columns):
        return 0.0
    labels_match = candidate.columns == gold.columns
    if ordered:
        content_exact = len(candidate.rows) == len(gold.rows) and all(
            _rows_match(a, b) for a, b in zip(candidate.rows, gold.rows)
        )
    else:
        content_exact = _multiset_equal(candidate.rows, gold.rows)
    if content_exact:
        return 1.0 if labels_match else 0.5
    if labels_match and candidate.rows:
        missing = len(gold.rows) - len(candidate.rows)
        if 1 <= missing <= 2:
            contained = (
                _is_subsequence(candidate.rows, gold.rows)
                if ordered
                else _all_fit(candidate.rows, gold.rows)
            )
            if contained:
                return 0.5
    return 0.0
