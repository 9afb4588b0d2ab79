"""Shared test fixtures: four small databases and a 20-task corpus.

Every task's gold SQL carries a full ORDER BY so engine output is
deterministic, and the mock model answers with a plan whose SQL equals
the gold SQL, which makes the end-to-end comparison exact.
"""

from __future__ import annotations

import json
import os
import sqlite3

TEAM_ROWS = [
    # (team, season, points, division)
    ("Hawks", 2019, 60, "East"),
    ("Hawks", 2020, 62, "East"),
    ("Hawks", 2021, 64, "East"),
    ("Hawks", 2022, 66, "East"),
    ("Lions", 2019, 50, "East"),
    ("Lions", 2020, 53, "East"),
    ("Lions", 2021, 56, "East"),
    ("Lions", 2022, 59, "East"),
    ("Bears", 2019, 40, "West"),
    ("Bears", 2020, 44, "West"),
    ("Bears", 2021, 48, "West"),
    ("Bears", 2022, 52, "West"),
    ("Wolves", 2019, 30, "West"),
    ("Wolves", 2020, 35, "West"),
    ("Wolves", 2021, 45, "West"),
    ("Wolves", 2022, 55, "West"),
]

AIRCRAFT_ROWS = [
    (1, "Robinson R-22"),
    (2, "Mil Mi-26"),
    (3, "CH-53E Super Stallion"),
    (4, "KA-52 Alligator"),
    (5, "AH-64 Apache"),
]

MATCH_WINNERS = [1, 1, 2, 2, 3]

PEOPLE_ROWS = [
    # (player, height cm, weight kg, position)
    ("P1", 188.0, 82.0, "Guard"),
    ("P2", 190.0, 84.0, "Guard"),
    ("P3", 192.0, 85.0, "Forward"),
    ("P4", 193.0, 87.0, "Guard"),
    ("P5", 195.0, 88.0, "Forward"),
    ("P6", 196.0, 90.0, "Center"),
    ("P7", 198.0, 91.0, "Forward"),
    ("P8", 200.0, 93.0, "Center"),
    ("P9", 202.0, 94.0, "Center"),
]


def _build_sports(conn: sqlite3.Connection) -> None:
    conn.execute(
        "CREATE TABLE teams (team TEXT, season INTEGER, points INTEGER, division TEXT)"
    )
    conn.executemany("INSERT INTO teams VALUES (?,?,?,?)", TEAM_ROWS)


def _build_market(conn: sqlite3.Connection) -> None:
    conn.execute(
        "CREATE TABLE sales (brand TEXT, year INTEGER, region TEXT, units REAL)"
    )
    rows = []
    idx = 0
    for brand in ("Alpha", "Bravo", "Candor"):
        for year in range(2018, 2023):
            for region in ("EU", "US"):
                rows.append((brand, year, region, 10.0 + idx * 1.5))
                idx += 1
    conn.executemany("INSERT INTO sales VALUES (?,?,?,?)", rows)


def _build_flight(conn: sqlite3.Connection) -> None:
    conn.execute(
        "CREATE TABLE aircraft (Aircraft_ID INTEGER PRIMARY KEY, Aircraft TEXT)"
    )
    conn.execute(
        'CREATE TABLE "match" (Round INTEGER, Winning_Aircraft INTEGER'
        " REFERENCES aircraft(Aircraft_ID))"
    )
    conn.executemany("INSERT INTO aircraft VALUES (?,?)", AIRCRAFT_ROWS)
    conn.executemany(
        'INSERT INTO "match" VALUES (?,?)',
        [(i + 1, w) for i, w in enumerate(MATCH_WINNERS)],
    )


def _build_body(conn: sqlite3.Connection) -> None:
    conn.execute(
        "CREATE TABLE people (Player TEXT, Height REAL, Weight REAL, Position TEXT)"
    )
    conn.executemany("INSERT INTO people VALUES (?,?,?,?)", PEOPLE_ROWS)


DB_BUILDERS = {
    "sports.sqlite": _build_sports,
    "market.sqlite": _build_market,
    "flight.sqlite": _build_flight,
    "body.sqlite": _build_body,
}


def _chart(ctype: str, x: str, y: list[str], series: str | None = None, sort=None):
    chart: dict = {"type": ctype, "x": x, "y": y}
    if series is not None:
        chart["series"] = series
    if sort is not None:
        chart["sort"] = {"by": sort[0], "dir": sort[1]}
    return chart


TASKS = [
    {
        "id": "t01",
        "db": "flight.sqlite",
        "chart_type": "pie",
        "difficulty": "easy",
        "question": "Show the number of wins per aircraft in a pie chart.",
        "sql": (
            "SELECT a.Aircraft AS aircraft, COUNT(m.Winning_Aircraft) AS wins"
            " FROM aircraft a JOIN match m ON a.Aircraft_ID = m.Winning_Aircraft"
            " GROUP BY a.Aircraft ORDER BY a.Aircraft"
        ),
        "chart": _chart("pie", "aircraft", ["wins"]),
    },
    {
        "id": "t02",
        "db": "sports.sqlite",
        "chart_type": "pie",
        "difficulty": "medium",
        "question": "What share of total points does each division hold? Use a pie chart.",
        "sql": (
            "SELECT division, SUM(points) AS total_points FROM teams"
            " GROUP BY division ORDER BY division"
        ),
        "chart": _chart("pie", "division", ["total_points"]),
    },
    {
        "id": "t03",
        "db": "market.sqlite",
        "chart_type": "pie",
        "difficulty": "hard",
        "question": "Draw a pie chart of total units per region.",
        "sql": (
            "SELECT region, SUM(units) AS total_units FROM sales"
            " GROUP BY region ORDER BY region"
        ),
        "chart": _chart("pie", "region", ["total_units"]),
    },
    {
        "id": "t04",
        "db": "flight.sqlite",
        "chart_type": "bar",
        "difficulty": "easy",
        "question": "How many wins did each aircraft take? Visualize by bar chart.",
        "sql": (
            "SELECT a.Aircraft AS aircraft, COUNT(m.Winning_Aircraft) AS wins"
            " FROM aircraft a JOIN match m ON a.Aircraft_ID = m.Winning_Aircraft"
            " GROUP BY a.Aircraft ORDER BY wins DESC, a.Aircraft ASC"
        ),
        "chart": _chart("bar", "aircraft", ["wins"]),
    },
    {
        "id": "t05",
        "db": "sports.sqlite",
        "chart_type": "bar",
        "difficulty": "medium",
        "question": (
            "Total points per team as a bar chart, could you sort by the"
            " total number in ascending?"
        ),
        "sql": (
            "SELECT team, SUM(points) AS total_points FROM teams"
            " GROUP BY team ORDER BY total_points ASC"
        ),
        "chart": _chart(
            "bar", "team", ["total_points"], sort=("total_points", "asc")
        ),
    },
    {
        "id": "t06",
        "db": "market.sqlite",
        "chart_type": "bar",
        "difficulty": "extra_hard",
        "question": "Bar chart of average units per brand in the US region.",
        "sql": (
            "SELECT brand, AVG(units) AS avg_units FROM sales"
            " WHERE region = 'US' GROUP BY brand ORDER BY brand"
        ),
        "chart": _chart("bar", "brand", ["avg_units"]),
    },
    {
        "id": "t07",
        "db": "sports.sqlite",
        "chart_type": "line",
        "difficulty": "easy",
        "question": "Line chart of total points per season.",
        "sql": (
            "SELECT season, SUM(points) AS total_points FROM teams"
            " GROUP BY season ORDER BY season"
        ),
        "chart": _chart("line", "season", ["total_points"]),
    },
    {
        "id": "t08",
        "db": "market.sqlite",
        "chart_type": "line",
        "difficulty": "medium",
        "question": "How did total units change by year? Draw a line chart.",
        "sql": (
            "SELECT year, SUM(units) AS total_units FROM sales"
            " GROUP BY year ORDER BY year"
        ),
        "chart": _chart("line", "year", ["total_units"]),
    },
    {
        "id": "t09",
        "db": "sports.sqlite",
        "chart_type": "line",
        "difficulty": "hard",
        "question": "Line chart of average points per season for the East division.",
        "sql": (
            "SELECT season, AVG(points) AS avg_points FROM teams"
            " WHERE division = 'East' GROUP BY season ORDER BY season"
        ),
        "chart": _chart("line", "season", ["avg_points"]),
    },
    {
        "id": "t10",
        "db": "body.sqlite",
        "chart_type": "scatter",
        "difficulty": "easy",
        "question": (
            "Show me about the correlation between Height and Weight in a"
            " scatter chart."
        ),
        "sql": "SELECT Height, Weight FROM people ORDER BY Height",
        "chart": _chart("scatter", "Height", ["Weight"]),
    },
    {
        "id": "t11",
        "db": "sports.sqlite",
        "chart_type": "scatter",
        "difficulty": "medium",
        "question": "Scatter chart of points by season.",
        "sql": "SELECT season, points FROM teams ORDER BY season, points",
        "chart": _chart("scatter", "season", ["points"]),
    },
    {
        "id": "t12",
        "db": "market.sqlite",
        "chart_type": "scatter",
        "difficulty": "hard",
        "question": "Scatter of units by year, please.",
        "sql": "SELECT year, units FROM sales ORDER BY year, units",
        "chart": _chart("scatter", "year", ["units"]),
    },
    {
        "id": "t13",
        "db": "sports.sqlite",
        "chart_type": "stacked_bar",
        "difficulty": "easy",
        "question": "Stacked bar of total points per season by division.",
        "sql": (
            "SELECT season, division, SUM(points) AS total_points FROM teams"
            " GROUP BY season, division ORDER BY season, division"
        ),
        "chart": _chart("stacked_bar", "season", ["total_points"], series="division"),
    },
    {
        "id": "t14",
        "db": "market.sqlite",
        "chart_type": "stacked_bar",
        "difficulty": "medium",
        "question": "Stacked bar of units per year by region.",
        "sql": (
            "SELECT year, region, SUM(units) AS total_units FROM sales"
            " GROUP BY year, region ORDER BY year, region"
        ),
        "chart": _chart("stacked_bar", "year", ["total_units"], series="region"),
    },
    {
        "id": "t15",
        "db": "sports.sqlite",
        "chart_type": "stacked_bar",
        "difficulty": "extra_hard",
        "question": "Stacked bar chart of points per team by season.",
        "sql": "SELECT team, season, points FROM teams ORDER BY team, season",
        "chart": _chart("stacked_bar", "team", ["points"], series="season"),
    },
    {
        "id": "t16",
        "db": "market.sqlite",
        "chart_type": "grouping_line",
        "difficulty": "easy",
        "question": "Grouping line chart of units per year by brand.",
        "sql": (
            "SELECT year, brand, SUM(units) AS total_units FROM sales"
            " GROUP BY year, brand ORDER BY year, brand"
        ),
        "chart": _chart("grouping_line", "year", ["total_units"], series="brand"),
    },
    {
        "id": "t17",
        "db": "sports.sqlite",
        "chart_type": "grouping_line",
        "difficulty": "medium",
        "question": "Grouped line chart of points per season by team.",
        "sql": "SELECT season, team, points FROM teams ORDER BY season, team",
        "chart": _chart("grouping_line", "season", ["points"], series="team"),
    },
    {
        "id": "t18",
        "db": "market.sqlite",
        "chart_type": "grouping_line",
        "difficulty": "hard",
        "question": "Grouping line of average units per year by region.",
        "sql": (
            "SELECT year, region, AVG(units) AS avg_units FROM sales"
            " GROUP BY year, region ORDER BY year, region"
        ),
        "chart": _chart("grouping_line", "year", ["avg_units"], series="region"),
    },
    {
        "id": "t19",
        "db": "body.sqlite",
        "chart_type": "grouping_scatter",
        "difficulty": "medium",
        "question": "Grouped scatter of height versus weight by position.",
        "sql": "SELECT Height, Weight, Position FROM people ORDER BY Height",
        "chart": _chart(
            "grouping_scatter", "Height", ["Weight"], series="Position"
        ),
    },
    {
        "id": "t20",
        "db": "sports.sqlite",
        "chart_type": "grouping_scatter",
        "difficulty": "extra_hard",
        "question": "Grouping scatter of points by season split by division.",
        "sql": (
            "SELECT season, points, division FROM teams"
            " ORDER BY season, points"
        ),
        "chart": _chart(
            "grouping_scatter", "season", ["points"], series="division"
        ),
    },
]

ANALYSIS_RESPONSE = "\n".join(
    [
        "Here is the analysis:",
        "1. The leading category holds the largest share of the measured total.",
        "2. The smallest category trails the leader by a wide margin.",
        "3. Values grow steadily across the range rather than jumping.",
        "4. The middle of the distribution is tightly clustered.",
        "5. The overall spread suggests a stable underlying trend.",
    ]
)

CASE_STUDY_BULLETS = "\n".join(
    [
        "1. The Robinson R-22 and Mil Mi-26 are the most successful aircraft"
        " with two wins each.",
        "2. The CH-53E Super Stallion took a single win.",
        "3. Two aircraft in the fleet never won a match.",
        "4. Wins concentrate in light utility helicopters.",
        "5. The gap between the top and bottom of the table is two wins.",
    ]
)


def plan_response(task: dict) -> str:
    """The mock model's answer for a task: prose around a fenced plan."""
    body = json.dumps({"sql": task["sql"], "chart": task["chart"]}, indent=1)
    return f"Here is the plan you asked for.\n\n```json\n{body}\n```\n"


def make_mock_script() -> dict:
    """Mock gateway script: plans keyed by question, one analysis text."""
    return {
        "code": {t["question"]: plan_response(t) for t in TASKS},
        "analysis": ANALYSIS_RESPONSE,
    }


def build_fixture_tree(root: str) -> str:
    """Create the databases and manifest under root; returns manifest path."""
    os.makedirs(root, exist_ok=True)
    for name, builder in DB_BUILDERS.items():
        path = os.path.join(root, name)
        if os.path.exists(path):
            continue
        conn = sqlite3.connect(path)
        with conn:
            builder(conn)
        conn.close()
    manifest = {
        "root": ".",
        "tasks": [
            {
                "id": t["id"],
                "question": t["question"],
                "db_file": t["db"],
                "chart_type": t["chart_type"],
                "difficulty": t["difficulty"],
                "domain": t["db"].split(".")[0],
                "gold_sql": t["sql"],
            }
            for t in TASKS
        ],
    }
    manifest_path = os.path.join(root, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest_path
