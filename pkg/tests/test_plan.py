"""Plan parsing, script parsing, and SQL/chart validation."""

import sqlite3

import pytest

from autoanalyst.errors import (
    BadPlanShape,
    ChartShapeError,
    EmptyResponse,
    MultipleStatements,
    NoJsonBlock,
    NonSelectSql,
    UnknownColumn,
    UnknownTable,
)
from autoanalyst.plan import (
    AnalysisPlan,
    ChartSpec,
    parse_plan,
    parse_script,
    serialize_plan,
    validate_plan,
)
from autoanalyst.schema import introspect

PLAN_TEXT = """Sure, here is a plan.

```json
{"sql": "SELECT aircraft, COUNT(*) AS wins FROM wins GROUP BY aircraft",
 "chart": {"type": "bar", "x": "aircraft", "y": ["wins"],
           "sort": {"by": "wins", "dir": "desc"}}}
```

Let me know if you need anything else."""


def test_parse_plan_happy_path():
    plan = parse_plan(PLAN_TEXT)
    assert plan.sql == "SELECT aircraft, COUNT(*) AS wins FROM wins GROUP BY aircraft"
    assert plan.chart.chart_type == "bar"
    assert plan.chart.x == "aircraft"
    assert plan.chart.y == ["wins"]
    assert plan.chart.series is None
    assert plan.chart.sort == ("wins", "desc")


def test_parse_plan_takes_first_fenced_block():
    text = PLAN_TEXT + '\n```json\n{"sql": "SELECT 2", "chart": {}}\n```\n'
    assert parse_plan(text).chart.chart_type == "bar"


def test_parse_plan_unfenced_is_rejected():
    with pytest.raises(NoJsonBlock):
        parse_plan('{"sql": "SELECT 1", "chart": {"type": "bar"}}')


def test_parse_plan_bad_json():
    with pytest.raises(BadPlanShape):
        parse_plan("```json\n{not json}\n```")


@pytest.mark.parametrize(
    "payload",
    [
        '{"chart": {"type": "bar", "x": "a", "y": ["b"]}}',
        '{"sql": "", "chart": {"type": "bar", "x": "a", "y": ["b"]}}',
        '{"sql": "SELECT 1"}',
        '{"sql": "SELECT 1", "chart": {"type": "donut", "x": "a", "y": ["b"]}}',
        '{"sql": "SELECT 1", "chart": {"type": "bar", "y": ["b"]}}',
        '{"sql": "SELECT 1", "chart": {"type": "bar", "x": "a", "y": []}}',
        '{"sql": "SELECT 1", "chart": {"type": "bar", "x": "a", "y": "b"}}',
        '{"sql": "SELECT 1", "chart": {"type": "bar", "x": "a", "y": [2]}}',
        '{"sql": "SELECT 1", "chart": {"type": "bar", "x": "a", "y": ["b"], "series": 3}}',
        '{"sql": "SELECT 1", "chart": {"type": "bar", "x": "a", "y": ["b"], "sort": {"by": "a"}}}',
        '{"sql": "SELECT 1", "chart": {"type": "bar", "x": "a", "y": ["b"], "sort": {"by": "a", "dir": "up"}}}',
        '["not", "an", "object"]',
    ],
)
def test_parse_plan_shape_errors(payload):
    with pytest.raises(BadPlanShape):
        parse_plan(f"```json\n{payload}\n```")


@pytest.mark.parametrize(
    "sql",
    [
        "DELETE FROM wins",
        "UPDATE wins SET a = 1",
        "INSERT INTO wins VALUES (1)",
        "DROP TABLE wins",
        "PRAGMA table_info(wins)",
    ],
)
def test_parse_plan_non_select(sql):
    payload = (
        '{"sql": "%s", "chart": {"type": "bar", "x": "a", "y": ["b"]}}' % sql
    )
    with pytest.raises(NonSelectSql):
        parse_plan(f"```json\n{payload}\n```")


def test_parse_plan_with_cte_head_allowed():
    payload = (
        '{"sql": "WITH t AS (SELECT 1 AS a) SELECT a FROM t",'
        ' "chart": {"type": "bar", "x": "a", "y": ["a"]}}'
    )
    assert parse_plan(f"```json\n{payload}\n```").sql.startswith("WITH")


def test_serialize_parse_round_trip():
    plan = AnalysisPlan(
        sql="SELECT a, b FROM t",
        chart=ChartSpec(
            chart_type="stacked_bar",
            x="a",
            y=["b"],
            series="a",
            sort=("b", "asc"),
        ),
    )
    again = parse_plan(serialize_plan(plan, fenced=True))
    assert again == plan


def test_serialize_omits_absent_fields():
    plan = AnalysisPlan(
        sql="SELECT a, b FROM t",
        chart=ChartSpec(chart_type="line", x="a", y=["b"]),
    )
    text = serialize_plan(plan)
    assert '"series"' not in text
    assert '"sort"' not in text


# --- parse_script -------------------------------------------------------------


def test_parse_script_fenced():
    script = parse_script("Here you go:\n```python\nprint('hi')\n```\n")
    assert script.code == "print('hi')\n"
    assert script.language_hint == "python"


def test_parse_script_unfenced_takes_whole_text():
    script = parse_script("import sqlite3\nprint(1)\n")
    assert script.code == "import sqlite3\nprint(1)\n"


def test_parse_script_empty_rejected():
    with pytest.raises(EmptyResponse):
        parse_script("   \n  ")
    with pytest.raises(EmptyResponse):
        parse_script("```python\n\n```")


# --- validate_plan -------------------------------------------------------------


@pytest.fixture(scope="module")
def flight_schema(tmp_path_factory):
    path = tmp_path_factory.mktemp("vdb") / "flight.sqlite"
    conn = sqlite3.connect(path)
    with conn:
        conn.execute(
            "CREATE TABLE aircraft (Aircraft_ID INTEGER PRIMARY KEY, Aircraft TEXT)"
        )
        conn.execute(
            'CREATE TABLE "match" (Round INTEGER, Winning_Aircraft INTEGER)'
        )
    conn.close()
    return introspect(str(path))


def _plan(sql, **chart) -> AnalysisPlan:
    defaults = {"chart_type": "bar", "x": "aircraft", "y": ["wins"]}
    defaults.update(chart)
    return AnalysisPlan(sql=sql, chart=ChartSpec(**defaults))


JOIN_SQL = (
    "SELECT a.Aircraft AS aircraft, COUNT(m.Winning_Aircraft) AS wins"
    " FROM aircraft a JOIN match m ON a.Aircraft_ID = m.Winning_Aircraft"
    " GROUP BY a.Aircraft ORDER BY wins DESC"
)


def test_validate_join_query(flight_schema):
    validated = validate_plan(_plan(JOIN_SQL), flight_schema)
    assert validated.output_columns == ["aircraft", "wins"]


def test_validate_unknown_table(flight_schema):
    plan = _plan(JOIN_SQL.replace("JOIN match m", "JOIN matches m"))
    with pytest.raises(UnknownTable):
        validate_plan(plan, flight_schema)


def test_validate_unknown_alias_owner(flight_schema):
    plan = _plan(JOIN_SQL.replace("m.Winning_Aircraft", "x.Winning_Aircraft", 1))
    with pytest.raises(UnknownTable):
        validate_plan(plan, flight_schema)


def test_validate_unknown_qualified_column(flight_schema):
    plan = _plan(JOIN_SQL.replace("m.Winning_Aircraft", "m.Winning_Aircrafts", 1))
    with pytest.raises(UnknownColumn) as err:
        validate_plan(plan, flight_schema)
    assert err.value.table == "match"
    assert err.value.name == "Winning_Aircrafts"


def test_validate_unknown_bare_column(flight_schema):
    plan = _plan(
        "SELECT Aircraft AS aircraft, COUNT(*) AS wins FROM aircraft"
        " GROUP BY Aircrafts"
    )
    with pytest.raises(UnknownColumn):
        validate_plan(plan, flight_schema)


def test_validate_sql_identifiers_case_insensitive(flight_schema):
    plan = _plan(
        "SELECT AIRCRAFT AS aircraft, COUNT(*) AS wins FROM AIRCRAFT"
        " GROUP BY aircraft"
    )
    assert validate_plan(plan, flight_schema).output_columns == ["aircraft", "wins"]


def test_validate_chart_refs_case_sensitive(flight_schema):
    # "Wins" is not the output column "wins": chart matching is exact
    plan = _plan(JOIN_SQL, y=["Wins"])
    with pytest.raises(ChartShapeError):
        validate_plan(plan, flight_schema)


def test_validate_multiple_statements(flight_schema):
    plan = _plan("SELECT Aircraft FROM aircraft; DROP TABLE aircraft", x="Aircraft", y=["Aircraft"])
    with pytest.raises(MultipleStatements):
        validate_plan(plan, flight_schema)


def test_validate_trailing_semicolon_ok(flight_schema):
    plan = _plan(
        "SELECT Aircraft, Aircraft_ID FROM aircraft;",
        x="Aircraft",
        y=["Aircraft_ID"],
    )
    assert validate_plan(plan, flight_schema).output_columns == [
        "Aircraft",
        "Aircraft_ID",
    ]


def test_validate_non_select_rejected(flight_schema):
    plan = _plan("DELETE FROM aircraft")
    with pytest.raises(NonSelectSql):
        validate_plan(plan, flight_schema)


def test_validate_star_expansion(flight_schema):
    plan = _plan("SELECT * FROM aircraft", x="Aircraft", y=["Aircraft_ID"])
    validated = validate_plan(plan, flight_schema)
    assert validated.output_columns == ["Aircraft_ID", "Aircraft"]
    assert validated.column_types["Aircraft_ID"].upper() == "INTEGER"


def test_validate_table_star_expansion(flight_schema):
    plan = _plan(
        "SELECT a.* FROM aircraft a", x="Aircraft", y=["Aircraft_ID"]
    )
    assert validate_plan(plan, flight_schema).output_columns == [
        "Aircraft_ID",
        "Aircraft",
    ]


def test_validate_string_literals_not_identifiers(flight_schema):
    plan = _plan(
        "SELECT Aircraft, Aircraft_ID FROM aircraft"
        " WHERE Aircraft = 'not_a_column'",
        x="Aircraft",
        y=["Aircraft_ID"],
    )
    validate_plan(plan, flight_schema)  # must not raise


def test_validate_comments_ignored(flight_schema):
    plan = _plan(
        "SELECT Aircraft, COUNT(*) AS wins -- nope not_a_column\n"
        "FROM aircraft /* also_not_a_column */ GROUP BY Aircraft",
        x="Aircraft",
    )
    assert validate_plan(plan, flight_schema).output_columns == ["Aircraft", "wins"]


def test_validate_subquery_relaxes_unqualified(flight_schema):
    plan = _plan(
        "SELECT t.name AS aircraft, COUNT(*) AS wins FROM"
        " (SELECT Aircraft AS name FROM aircraft) t GROUP BY name",
        x="aircraft",
    )
    validated = validate_plan(plan, flight_schema)
    assert validated.output_columns == ["aircraft", "wins"]


def test_validate_subquery_still_checks_real_tables(flight_schema):
    plan = _plan(
        "SELECT t.name AS aircraft, COUNT(*) AS wins FROM"
        " (SELECT Aircraft AS name FROM aircrafts) t GROUP BY name",
        x="aircraft",
    )
    with pytest.raises(UnknownTable):
        validate_plan(plan, flight_schema)


def test_validate_cte_names_are_opaque(flight_schema):
    plan = _plan(
        "WITH counts AS (SELECT Winning_Aircraft AS w, COUNT(*) AS n"
        " FROM match GROUP BY Winning_Aircraft)"
        " SELECT a.Aircraft AS aircraft, n AS wins FROM counts"
        " JOIN aircraft a ON a.Aircraft_ID = counts.w",
    )
    validated = validate_plan(plan, flight_schema)
    assert validated.output_columns == ["aircraft", "wins"]


def test_validate_expression_output_column(flight_schema):
    plan = _plan(
        "SELECT Aircraft, Aircraft_ID * 2 FROM aircraft",
        x="Aircraft",
        y=["Aircraft_ID * 2"],
    )
    assert validate_plan(plan, flight_schema).output_columns == [
        "Aircraft",
        "Aircraft_ID * 2",
    ]


def test_validate_column_types_recorded(flight_schema):
    validated = validate_plan(
        _plan("SELECT Aircraft, Aircraft_ID FROM aircraft", x="Aircraft", y=["Aircraft_ID"]),
        flight_schema,
    )
    assert validated.column_types["Aircraft"].upper() == "TEXT"
    assert validated.column_types["Aircraft_ID"].upper() == "INTEGER"
    # computed outputs have no sqlite type
    assert validate_plan(_plan(JOIN_SQL), flight_schema).column_types["wins"] == ""


# --- chart shape rules ----------------------------------------------------------


def test_pie_takes_exactly_one_y(flight_schema):
    sql = "SELECT Aircraft, Aircraft_ID, Round FROM aircraft, match"
    good = _plan(sql, chart_type="pie", x="Aircraft", y=["Aircraft_ID"])
    validate_plan(good, flight_schema)
    two_y = _plan(sql, chart_type="pie", x="Aircraft", y=["Aircraft_ID", "Round"])
    with pytest.raises(ChartShapeError):
        validate_plan(two_y, flight_schema)


def test_pie_takes_no_series(flight_schema):
    plan = _plan(
        "SELECT Aircraft, Aircraft_ID FROM aircraft",
        chart_type="pie",
        x="Aircraft",
        y=["Aircraft_ID"],
        series="Aircraft",
    )
    with pytest.raises(ChartShapeError):
        validate_plan(plan, flight_schema)


@pytest.mark.parametrize("ctype", ["stacked_bar", "grouping_line", "grouping_scatter"])
def test_series_required(flight_schema, ctype):
    plan = _plan(
        "SELECT Aircraft, Aircraft_ID FROM aircraft",
        chart_type=ctype,
        x="Aircraft",
        y=["Aircraft_ID"],
    )
    with pytest.raises(ChartShapeError):
        validate_plan(plan, flight_schema)
    plan.chart.series = "Aircraft"
    validate_plan(plan, flight_schema)


@pytest.mark.parametrize("ctype", ["bar", "line", "scatter"])
def test_series_forbidden(flight_schema, ctype):
    plan = _plan(
        "SELECT Aircraft, Aircraft_ID FROM aircraft",
        chart_type=ctype,
        x="Aircraft",
        y=["Aircraft_ID"],
        series="Aircraft",
    )
    with pytest.raises(ChartShapeError):
        validate_plan(plan, flight_schema)


@pytest.mark.parametrize(
    "slot,chart",
    [
        ("x", {"x": "nope"}),
        ("y", {"y": ["nope"]}),
        ("sort.by", {"sort": ("nope", "asc")}),
    ],
)
def test_chart_refs_must_be_output_columns(flight_schema, slot, chart):
    plan = _plan(JOIN_SQL, **chart)
    with pytest.raises(ChartShapeError) as err:
        validate_plan(plan, flight_schema)
    assert slot in str(err.value)


def test_validated_plan_keeps_plan(flight_schema):
    plan = _plan(JOIN_SQL)
    assert validate_plan(plan, flight_schema).plan is plan
