"""Parse model output into an executable plan and validate it.

Plan mode expects one fenced JSON block: {"sql": ..., "chart": {...}}.
Validation cross-checks every SQL identifier against the introspected
schema and the chart's column references against the SQL's output
columns. The SQL scanner is deliberately conservative: references it
cannot confidently resolve (subqueries, computed aliases) are skipped
rather than rejected, so valid model output is never blocked, while a
mutated identifier in a plain query is always caught.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .corpus import CHART_TYPES
from .errors import (
    BadPlanShape,
    ChartShapeError,
    EmptyResponse,
    MultipleStatements,
    NoJsonBlock,
    NonSelectSql,
    UnknownColumn,
    UnknownTable,
)
from .schema import DatabaseSchema

_SERIES_REQUIRED = ("stacked_bar", "grouping_line", "grouping_scatter")
_SERIES_FORBIDDEN = ("bar", "line", "scatter", "pie")


@dataclass
class ChartSpec:
    chart_type: str
    x: str
    y: list[str]
    series: str | None = None
    sort: tuple[str, str] | None = None  # (column, "asc"|"desc")


@dataclass
class AnalysisPlan:
    sql: str
    chart: ChartSpec


@dataclass
class GeneratedScript:
    code: str
    language_hint: str = "python"


@dataclass
class ValidatedPlan:
    plan: AnalysisPlan
    output_columns: list[str]
    column_types: dict[str, str] = field(default_factory=dict)


_FENCE_RE = re.compile(r"```[ \t]*(\w*)[ \t]*\n(.*?)```", re.DOTALL)


def _first_fenced_block(text: str) -> tuple[str, str] | None:
    m = _FENCE_RE.search(text)
    if m is None:
        return None
    return m.group(1).lower(), m.group(2)


def parse_plan(llm_text: str) -> AnalysisPlan:
    """Extract and type-check the first fenced JSON block of a response."""
    block = _first_fenced_block(llm_text)
    if block is None:
        raise NoJsonBlock("response contains no fenced block")
    try:
        raw = json.loads(block[1])
    except json.JSONDecodeError as exc:
        raise BadPlanShape(f"fenced block is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise BadPlanShape("plan must be a JSON object")
    sql = raw.get("sql")
    chart = raw.get("chart")
    if not isinstance(sql, str) or not sql.strip():
        raise BadPlanShape("missing or empty 'sql' field")
    if not isinstance(chart, dict):
        raise BadPlanShape("missing 'chart' object")
    head = _statement_head(sql)
    if head not in ("select", "with"):
        raise NonSelectSql(f"sql must be a SELECT, got {head!r}")
    ctype = chart.get("type")
    if ctype not in CHART_TYPES:
        raise BadPlanShape(f"unknown chart type {ctype!r}")
    x = chart.get("x")
    if not isinstance(x, str) or not x:
        raise BadPlanShape("chart.x must be a column name")
    y = chart.get("y")
    if (
        not isinstance(y, list)
        or not y
        or not all(isinstance(c, str) and c for c in y)
    ):
        raise BadPlanShape("chart.y must be a non-empty list of column names")
    series = chart.get("series")
    if series is not None and (not isinstance(series, str) or not series):
        raise BadPlanShape("chart.series must be a column name")
    sort = None
    if "sort" in chart and chart["sort"] is not None:
        s = chart["sort"]
        if (
            not isinstance(s, dict)
            or not isinstance(s.get("by"), str)
            or s.get("dir") not in ("asc", "desc")
        ):
            raise BadPlanShape("chart.sort must be {'by': column, 'dir': asc|desc}")
        sort = (s["by"], s["dir"])
    return AnalysisPlan(
        sql=sql.strip(),
        chart=ChartSpec(chart_type=ctype, x=x, y=list(y), series=series, sort=sort),
    )


def serialize_plan(plan: AnalysisPlan, fenced: bool = False) -> str:
    """Inverse of parse_plan; used for plan.json and round-trip tests."""
    chart: dict = {
        "type": plan.chart.chart_type,
        "x": plan.chart.x,
        "y": list(plan.chart.y),
    }
    if plan.chart.series is not None:
        chart["series"] = plan.chart.series
    if plan.chart.sort is not None:
        chart["sort"] = {"by": plan.chart.sort[0], "dir": plan.chart.sort[1]}
    text = json.dumps({"sql": plan.sql, "chart": chart}, indent=2)
    if fenced:
        return f"```json\n{text}\n```\n"
    return text


def parse_script(llm_text: str) -> GeneratedScript:
    """Take the first fenced code block, or the whole response if none."""
    if not llm_text.strip():
        raise EmptyResponse("model returned no text")
    block = _first_fenced_block(llm_text)
    if block is not None:
        hint, code = block
        if not code.strip():
            raise EmptyResponse("fenced block is empty")
        return GeneratedScript(code=code, language_hint=hint or "python")
    return GeneratedScript(code=llm_text, language_hint="python")


# --- SQL scanning -----------------------------------------------------------

_KEYWORDS = frozenset(
    """
    select from where group by having order limit offset join inner left
    right full outer cross natural on using as and or not in is null like
    glob regexp match between exists case when then else end distinct all
    union intersect except with recursive asc desc collate escape isnull
    notnull current_date current_time current_timestamp
    """.split()
)

# CAST targets and other type words; skipping them is always safe because
# the skip-set only matters for names that are not in schema scope anyway
_TYPE_WORDS = frozenset(
    """
    integer int bigint smallint tinyint text real float double numeric
    decimal varchar nvarchar char nchar clob blob boolean date datetime
    """.split()
)

# words that cannot begin a table reference after FROM or JOIN; smaller
# than _KEYWORDS because SQLite lets non-reserved keywords name tables
# (the classic benchmark schemas have a table called "match")
_NON_TABLE_WORDS = frozenset(
    """
    select where group order having join inner left right full outer cross
    natural on using as with limit offset union intersect except
    """.split()
)

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_$]*")


def _strip_noise(sql: str) -> str:
    """Blank out string literals and comments, preserving offsets."""
    out = list(sql)
    i, n = 0, len(sql)
    while i < n:
        ch = sql[i]
        if ch == "'":
            j = i + 1
            while j < n:
                if sql[j] == "'":
                    if j + 1 < n and sql[j + 1] == "'":
                        j += 2
                        continue
                    break
                j += 1
            for k in range(i + 1, min(j, n)):
                out[k] = " "
            i = j + 1
        elif sql.startswith("--", i):
            j = sql.find("\n", i)
            j = n if j < 0 else j
            for k in range(i, j):
                out[k] = " "
            i = j
        elif sql.startswith("/*", i):
            j = sql.find("*/", i)
            j = n - 2 if j < 0 else j
            for k in range(i, j + 2):
                out[k] = " "
            i = j + 2
        else:
            i += 1
    return "".join(out)


def _statement_head(sql: str) -> str:
    clean = _strip_noise(sql)
    m = _IDENT_RE.search(clean)
    return m.group(0).lower() if m else ""


@dataclass
class _Tok:
    kind: str  # "id", "qid", "num", "p"
    text: str
    pos: int


def _tokenize(sql: str) -> list[_Tok]:
    clean = _strip_noise(sql)
    toks: list[_Tok] = []
    i, n = 0, len(clean)
    while i < n:
        ch = clean[i]
        if ch.isspace():
            i += 1
        elif ch == '"' or ch == "`":
            close = ch
            j = clean.find(close, i + 1)
            j = n if j < 0 else j
            toks.append(_Tok("qid", clean[i + 1 : j], i))
            i = j + 1
        elif ch == "[":
            j = clean.find("]", i + 1)
            j = n if j < 0 else j
            toks.append(_Tok("qid", clean[i + 1 : j], i))
            i = j + 1
        elif ch.isdigit() or (
            ch == "." and i + 1 < n and clean[i + 1].isdigit()
        ):
            m = re.match(r"[0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?", clean[i:])
            toks.append(_Tok("num", m.group(0), i))
            i += m.end()
        else:
            m = _IDENT_RE.match(clean, i)
            if m:
                toks.append(_Tok("id", m.group(0), i))
                i = m.end()
            else:
                toks.append(_Tok("p", ch, i))
                i += 1
    return toks


def _is_kw(tok: _Tok, word: str) -> bool:
    return tok.kind == "id" and tok.text.lower() == word


def _is_name(tok: _Tok) -> bool:
    return tok.kind == "qid" or (
        tok.kind == "id" and tok.text.lower() not in _KEYWORDS
    )


def _is_table_name(tok: _Tok) -> bool:
    return tok.kind == "qid" or (
        tok.kind == "id" and tok.text.lower() not in _NON_TABLE_WORDS
    )


class _Scope:
    """Tables, aliases and defined names collected from one statement."""

    def __init__(self, schema: DatabaseSchema):
        self.schema = schema
        self.tables: dict[str, str] = {}  # alias (lowered) -> table name
        self.opaque: set[str] = set()  # subquery/CTE aliases, lowered
        self.defined: set[str] = set()  # select aliases etc, lowered
        self.consumed: set[int] = set()  # token indexes already handled
        self.has_opaque = False

    def columns_in_scope(self) -> set[str]:
        cols: set[str] = set()
        for table in set(self.tables.values()):
            info = self.schema.table(table)
            if info is not None:
                cols.update(c.lower() for c in info.column_names())
        return cols


def _collect_tables(toks: list[_Tok], scope: _Scope) -> None:
    i = 0
    n = len(toks)
    while i < n:
        t = toks[i]
        if t.kind == "id" and t.text.lower() in ("from", "join"):
            i = _consume_table_refs(toks, i + 1, scope, t.text.lower() == "from")
        elif _is_kw(t, "with"):
            i = _consume_ctes(toks, i + 1, scope)
        else:
            i += 1


def _consume_ctes(toks: list[_Tok], i: int, scope: _Scope) -> int:
    # WITH [RECURSIVE] name AS (...), name AS (...)
    n = len(toks)
    if i < n and _is_kw(toks[i], "recursive"):
        i += 1
    while i < n and _is_name(toks[i]):
        scope.opaque.add(toks[i].text.lower())
        scope.has_opaque = True
        scope.consumed.add(i)
        i += 1
        # optional column list, then AS ( ... ) handled by the main scan
        break
    return i


def _consume_table_refs(toks: list[_Tok], i: int, scope: _Scope, allow_comma: bool) -> int:
    n = len(toks)
    while True:
        if i >= n:
            return i
        if toks[i].kind == "p" and toks[i].text == "(":
            # subquery: its tables are found when the scan reaches them,
            # but grab the alias after the closing paren now so refs
            # qualified through it resolve as opaque
            scope.has_opaque = True
            depth = 0
            j = i
            while j < n:
                if toks[j].kind == "p" and toks[j].text == "(":
                    depth += 1
                elif toks[j].kind == "p" and toks[j].text == ")":
                    depth -= 1
                    if depth == 0:
                        break
                j += 1
            j += 1
            if j < n and _is_kw(toks[j], "as") and j + 1 < n and _is_name(toks[j + 1]):
                scope.opaque.add(toks[j + 1].text.lower())
                scope.consumed.add(j + 1)
            elif j < n and _is_name(toks[j]):
                scope.opaque.add(toks[j].text.lower())
                scope.consumed.add(j)
            return i + 1
        if not _is_table_name(toks[i]):
            return i
        name = toks[i].text
        scope.consumed.add(i)
        i += 1
        # schema-qualified "main.t" - keep the table part
        if i + 1 < n and toks[i].kind == "p" and toks[i].text == "." and _is_table_name(toks[i + 1]):
            scope.consumed.add(i + 1)
            name = toks[i + 1].text
            i += 2
        lowered = name.lower()
        if lowered in scope.opaque:
            resolved = None
        else:
            info = scope.schema.table(name)
            if info is None:
                raise UnknownTable(name)
            resolved = info.name
            scope.tables[lowered] = resolved
        alias = None
        if i < n and _is_kw(toks[i], "as") and i + 1 < n and _is_name(toks[i + 1]):
            alias = toks[i + 1].text
            scope.consumed.update((i, i + 1))
            i += 2
        elif i < n and _is_name(toks[i]):
            alias = toks[i].text
            scope.consumed.add(i)
            i += 1
        if alias is not None:
            if resolved is None:
                scope.opaque.add(alias.lower())
            else:
                scope.tables[alias.lower()] = resolved
        if allow_comma and i < n and toks[i].kind == "p" and toks[i].text == ",":
            i += 1
            continue
        return i


def _select_items(toks: list[_Tok], sql_clean_len: int, sql: str) -> list[tuple[int, int]]:
    """Spans (token index ranges) of the top-level SELECT list items."""
    depth = 0
    start = None
    items = []
    item_start = None
    for i, t in enumerate(toks):
        if t.kind == "p" and t.text == "(":
            depth += 1
        elif t.kind == "p" and t.text == ")":
            depth -= 1
        elif depth == 0 and start is None and _is_kw(t, "select"):
            start = i
            item_start = i + 1
        elif depth == 0 and start is not None:
            if _is_kw(t, "from") or (t.kind == "p" and t.text == ";"):
                if item_start < i:
                    items.append((item_start, i))
                return items
            if t.kind == "p" and t.text == ",":
                items.append((item_start, i))
                item_start = i + 1
    if start is not None and item_start is not None and item_start < len(toks):
        items.append((item_start, len(toks)))
    return items


def _output_columns(
    toks: list[_Tok], sql: str, scope: _Scope
) -> tuple[list[str], dict[str, str]]:
    items = _select_items(toks, len(sql), sql)
    names: list[str] = []
    types: dict[str, str] = {}

    def base_type(table: str, col: str) -> str:
        info = scope.schema.table(table)
        if info is None:
            return ""
        for c in info.columns:
            if c.name.lower() == col.lower():
                return c.type
        return ""

    for lo, hi in items:
        span = toks[lo:hi]
        if span and _is_kw(span[0], "distinct"):
            span = span[1:]
        if not span:
            continue
        if len(span) == 1 and span[0].kind == "p" and span[0].text == "*":
            for table in scope.tables.values():
                info = scope.schema.table(table)
                if info:
                    for c in info.columns:
                        names.append(c.name)
                        types[c.name] = c.type
            continue
        if (
            len(span) == 3
            and _is_name(span[0])
            and span[1].text == "."
            and span[2].text == "*"
        ):
            table = scope.tables.get(span[0].text.lower())
            if table:
                info = scope.schema.table(table)
                if info:
                    for c in info.columns:
                        names.append(c.name)
                        types[c.name] = c.type
            continue
        # explicit alias: ... AS name, or trailing bare name
        alias = None
        if len(span) >= 2 and _is_kw(span[-2], "as") and _is_name(span[-1]):
            alias = span[-1].text
        elif (
            len(span) >= 2
            and _is_name(span[-1])
            and not (span[-2].kind == "p" and span[-2].text == ".")
        ):
            alias = span[-1].text
        if alias is not None:
            names.append(alias)
            types[alias] = ""
            continue
        if len(span) == 1 and _is_name(span[0]):
            col = span[0].text
            names.append(col)
            for table in dict.fromkeys(scope.tables.values()):
                t = base_type(table, col)
                if t:
                    types[col] = t
                    break
            types.setdefault(col, "")
            continue
        if (
            len(span) == 3
            and _is_name(span[0])
            and span[1].text == "."
            and _is_name(span[2])
        ):
            col = span[2].text
            names.append(col)
            table = scope.tables.get(span[0].text.lower(), "")
            types[col] = base_type(table, col) if table else ""
            continue
        # expression without alias: its name is the expression text
        text = sql[span[0].pos : _span_end(toks, hi, sql)].strip().rstrip(",").strip()
        names.append(text)
        types[text] = ""
    return names, types


def _span_end(toks: list[_Tok], hi: int, sql: str) -> int:
    if hi < len(toks):
        return toks[hi].pos
    return len(sql)


def _check_references(toks: list[_Tok], scope: _Scope) -> None:
    in_scope = scope.columns_in_scope()
    known = in_scope | scope.defined | scope.opaque
    n = len(toks)
    i = 0
    while i < n:
        t = toks[i]
        if i in scope.consumed or not _is_name(t):
            i += 1
            continue
        nxt = toks[i + 1] if i + 1 < n else None
        prev = toks[i - 1] if i > 0 else None
        # function call
        if nxt is not None and nxt.kind == "p" and nxt.text == "(":
            i += 1
            continue
        # qualified reference: owner.column or owner.*
        if nxt is not None and nxt.kind == "p" and nxt.text == ".":
            owner = t.text.lower()
            colt = toks[i + 2] if i + 2 < n else None
            if owner in scope.opaque:
                i += 3
                continue
            table = scope.tables.get(owner)
            if table is None:
                raise UnknownTable(t.text)
            if colt is not None and _is_name(colt):
                info = scope.schema.table(table)
                cols = {c.lower() for c in info.column_names()} if info else set()
                if colt.text.lower() not in cols:
                    raise UnknownColumn(table, colt.text)
            i += 3
            continue
        if prev is not None and prev.kind == "p" and prev.text == ".":
            i += 1
            continue
        # alias definition or collation name: skip (and record the alias)
        if prev is not None and _is_kw(prev, "as"):
            scope.defined.add(t.text.lower())
            known.add(t.text.lower())
            i += 1
            continue
        if prev is not None and _is_kw(prev, "collate"):
            i += 1
            continue
        if t.kind == "id" and t.text.lower() in _TYPE_WORDS and t.text.lower() not in in_scope:
            i += 1
            continue
        # bare alias right after a closing paren (select list / subquery)
        if prev is not None and prev.kind == "p" and prev.text == ")":
            scope.defined.add(t.text.lower())
            known.add(t.text.lower())
            i += 1
            continue
        if t.text.lower() not in known:
            if scope.has_opaque:
                i += 1  # cannot resolve confidently; let the engine decide
                continue
            table = next(iter(dict.fromkeys(scope.tables.values())), "")
            raise UnknownColumn(table, t.text)
        i += 1


def _collect_select_aliases(toks: list[_Tok], scope: _Scope) -> None:
    """Register AS-aliases and bare trailing aliases before reference checks."""
    n = len(toks)
    for i, t in enumerate(toks):
        if _is_kw(t, "as") and i + 1 < n and _is_name(toks[i + 1]):
            scope.defined.add(toks[i + 1].text.lower())


def validate_plan(plan: AnalysisPlan, schema: DatabaseSchema) -> ValidatedPlan:
    """Check a plan's SQL and chart against the database schema.

    Raises UnknownTable / UnknownColumn for identifiers missing from the
    schema, MultipleStatements for stacked statements, ChartShapeError
    when the chart references columns the SQL does not output or breaks
    a chart-type rule.
    """
    toks = _tokenize(plan.sql)
    for t in toks:
        if t.kind == "p" and t.text == ";":
            rest = [x for x in toks if x.pos > t.pos]
            if rest:
                raise MultipleStatements("sql contains more than one statement")
    head = _statement_head(plan.sql)
    if head not in ("select", "with"):
        raise NonSelectSql(f"sql must be a SELECT, got {head!r}")

    scope = _Scope(schema)
    _collect_tables(toks, scope)
    _collect_select_aliases(toks, scope)
    output_columns, column_types = _output_columns(toks, plan.sql, scope)
    _check_references(toks, scope)

    chart = plan.chart
    if not chart.y:
        raise ChartShapeError("chart needs at least one y column")
    if chart.chart_type == "pie":
        if len(chart.y) != 1:
            raise ChartShapeError("pie charts take exactly one y column")
        if chart.series is not None:
            raise ChartShapeError("pie charts take no series column")
    if chart.chart_type in _SERIES_REQUIRED and chart.series is None:
        raise ChartShapeError(f"{chart.chart_type} requires a series column")
    if chart.chart_type in _SERIES_FORBIDDEN and chart.series is not None:
        raise ChartShapeError(f"{chart.chart_type} takes no series column")

    available = set(output_columns)
    refs = [("x", chart.x)] + [("y", c) for c in chart.y]
    if chart.series is not None:
        refs.append(("series", chart.series))
    if chart.sort is not None:
        refs.append(("sort.by", chart.sort[0]))
    for slot, col in refs:
        if col not in available:
            raise ChartShapeError(
                f"chart {slot} references {col!r}, not an output column of the sql"
            )
    return ValidatedPlan(
        plan=plan, output_columns=output_columns, column_types=column_types
    )
