"""Evaluation kit: rubric ingestion, aggregation, and the time/cost model.

Three figure metrics (scored once per task) and four analysis metrics
(scored once per bullet). Every metric has a closed discrete range;
ingestion rejects anything outside it rather than clamping. Costs use
a working-time salary model with half-up cent rounding.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from .errors import (
    DivisionByZero,
    DuplicateAnnotation,
    EmptyCell,
    ManifestParseError,
    NonPositiveInput,
    RangeViolation,
    UnreadableFile,
)
from .extraction import ExtractedData, compare_to_gold, parse_data

# metric -> the exact set of accepted values
METRIC_RANGES: dict[str, tuple[float, ...]] = {
    "fig_correctness": (0.0, 0.5, 1.0),
    "chart_type": (0.0, 1.0),
    "aesthetics": (0.0, 1.0, 2.0, 3.0),
    "ana_correctness": (0.0, 1.0),
    "alignment": (0.0, 1.0),
    "complexity": (0.0, 1.0, 2.0, 3.0),
    "fluency": (0.0, 1.0, 2.0, 3.0),
}

FIGURE_METRICS = ("fig_correctness", "chart_type", "aesthetics")
BULLET_METRICS = ("ana_correctness", "alignment", "complexity", "fluency")

# level definitions shown to annotators alongside the complexity metric
COMPLEXITY_LEVELS = {
    0: "restates what the chart is about in general terms",
    1: "reads off values directly visible in the data",
    2: "derives a value by comparing or computing over the data",
    3: "draws a conclusion that goes beyond the numbers themselves",
}

# working-time salary model
MONTHS_PER_YEAR = 12
WORKING_DAYS_PER_MONTH = 21
HOURS_PER_DAY = 8
SECONDS_PER_YEAR = MONTHS_PER_YEAR * WORKING_DAYS_PER_MONTH * HOURS_PER_DAY * 3600

# reference human-analyst measurements used by comparative reports:
# per-instance seconds split (figure work, analysis work) by seniority
ANALYST_SECONDS = {
    "senior": (472, 324),
    "junior": (645, 388),
    "intern": (648, 173),
}

# (source, seniority, annual salary USD); entry-level salaries pair with
# junior times in the comparison table
SALARY_ROWS = (
    ("levels.fyi", "senior", 90421),
    ("levels.fyi", "entry", 37661),
    ("glassdoor", "senior", 86300),
    ("glassdoor", "junior", 50000),
    ("glassdoor", "intern", 14400),
)

# per-instance cost anchors used for the ratio rows
ANNOTATION_COSTS = {"senior": 11.00, "junior": 7.00, "intern": 2.00}
MODEL_COST_REF = 0.05

_LEVEL_SECONDS = {"senior": 796, "junior": 1033, "entry": 1033, "intern": 821}


@dataclass
class Annotation:
    task_id: str
    annotator_id: str
    annotator_group: int
    subject: str  # "figure" or "bullet"
    bullet_index: int | None
    metric: str
    value: float


@dataclass
class MetricTable:
    rows: dict[str, dict]  # metric -> {"groups": {group: mean}, "average": float}
    sample_count: int


@dataclass
class AgreementReport:
    rows: dict[str, dict]  # metric -> {"exact_rate": x, "mad": y, "cells": n}


@dataclass
class PartialScorecard:
    task_id: str
    scores: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)


_CSV_HEADER = [
    "task_id",
    "annotator_id",
    "annotator_group",
    "subject",
    "bullet_index",
    "metric",
    "value",
]


def ingest_annotations(path: str) -> list[Annotation]:
    """Load and validate an annotation CSV.

    Structural problems (bad header, unknown metric, non-numeric cells)
    raise ManifestParseError naming the row; values outside a metric's
    range raise RangeViolation; repeated (task, annotator, subject,
    metric) rows raise DuplicateAnnotation.
    """
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    if not rows or rows[0] != _CSV_HEADER:
        raise ManifestParseError(
            f"{path}: header must be {','.join(_CSV_HEADER)}"
        )
    annotations: list[Annotation] = []
    seen: set[tuple] = set()
    for n, row in enumerate(rows[1:], start=2):
        where = f"{path}: row {n}"
        if len(row) != len(_CSV_HEADER):
            raise ManifestParseError(f"{where}: expected {len(_CSV_HEADER)} fields")
        task_id, annotator_id, group_s, subject, bullet_s, metric, value_s = row
        if metric not in METRIC_RANGES:
            raise ManifestParseError(f"{where}: unknown metric {metric!r}")
        if subject not in ("figure", "bullet"):
            raise ManifestParseError(f"{where}: subject must be figure or bullet")
        if subject == "bullet":
            if metric not in BULLET_METRICS:
                raise ManifestParseError(f"{where}: {metric} is a figure metric")
            try:
                bullet_index = int(bullet_s)
            except ValueError:
                raise ManifestParseError(f"{where}: bullet_index must be an integer") from None
        else:
            if metric not in FIGURE_METRICS:
                raise ManifestParseError(f"{where}: {metric} is a bullet metric")
            if bullet_s != "":
                raise ManifestParseError(f"{where}: bullet_index must be empty for figures")
            bullet_index = None
        try:
            group = int(group_s)
            value = float(value_s)
        except ValueError:
            raise ManifestParseError(f"{where}: group and value must be numeric") from None
        if value not in METRIC_RANGES[metric]:
            raise RangeViolation(f"{where}: {metric}={value_s} outside its range")
        key = (task_id, annotator_id, subject, bullet_index, metric)
        if key in seen:
            raise DuplicateAnnotation(f"{where}: repeats {key}")
        seen.add(key)
        annotations.append(
            Annotation(
                task_id=task_id,
                annotator_id=annotator_id,
                annotator_group=group,
                subject=subject,
                bullet_index=bullet_index,
                metric=metric,
                value=value,
            )
        )
    return annotations


def aggregate(annotations: list[Annotation]) -> MetricTable:
    """Per-group means per metric, plus their cross-group average.

    A metric's Average column is the plain mean of its group means, so
    a metric annotated by one group only averages to that group's mean.
    """
    if not annotations:
        raise EmptyCell("no annotations to aggregate")
    rows: dict[str, dict] = {}
    for metric in METRIC_RANGES:
        values: dict[int, list[float]] = {}
        for a in annotations:
            if a.metric == metric:
                values.setdefault(a.annotator_group, []).append(a.value)
        if not values:
            continue
        groups = {g: sum(vs) / len(vs) for g, vs in sorted(values.items())}
        rows[metric] = {
            "groups": groups,
            "average": sum(groups.values()) / len(groups),
        }
    return MetricTable(
        rows=rows, sample_count=len({a.task_id for a in annotations})
    )


def display_score(value: float) -> str:
    """Two decimals, half-up, as scores are printed in tables."""
    return str(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def agreement(annotations: list[Annotation]) -> AgreementReport:
    """Exact-match rate and mean absolute difference per metric.

    Only cells carrying exactly two annotators' values count.
    """
    cells: dict[tuple, list[float]] = {}
    for a in annotations:
        key = (a.task_id, a.subject, a.bullet_index, a.metric)
        cells.setdefault(key, []).append(a.value)
    rows: dict[str, dict] = {}
    for metric in METRIC_RANGES:
        pairs = [vs for k, vs in cells.items() if k[3] == metric and len(vs) == 2]
        if not pairs:
            continue
        exact = sum(1 for a, b in pairs if a == b) / len(pairs)
        mad = sum(abs(a - b) for a, b in pairs) / len(pairs)
        rows[metric] = {"exact_rate": exact, "mad": mad, "cells": len(pairs)}
    return AgreementReport(rows=rows)


def cost_per_instance(annual_salary: float, seconds_per_instance: float) -> float:
    """Salary prorated to the instance's working seconds, in cents."""
    if annual_salary <= 0 or seconds_per_instance <= 0:
        raise NonPositiveInput("salary and seconds must both be positive")
    cost = (
        Decimal(str(annual_salary))
        * Decimal(str(seconds_per_instance))
        / Decimal(SECONDS_PER_YEAR)
    )
    return float(cost.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def cost_ratio(a: float, b: float) -> float:
    """a as a percentage of b."""
    if b <= 0:
        raise DivisionByZero("ratio denominator must be positive")
    return 100.0 * a / b


def display_ratio(percent: float) -> str:
    """Two significant figures, the precision comparison tables use."""
    return f"{percent:.2g}"


def reference_cost_rows() -> list[tuple[str, str, float, int, float]]:
    """(source, level, salary, seconds, cost) for each salary anchor."""
    out = []
    for source, level, salary in SALARY_ROWS:
        seconds = _LEVEL_SECONDS[level]
        out.append((source, level, salary, seconds, cost_per_instance(salary, seconds)))
    return out


def auto_scores(run, task, gold: ExtractedData | None) -> PartialScorecard:
    """Machine-scoreable rubric cells for one finished run.

    chart_type compares the rendered type against the task's required
    type (unscored when no requirement is known); fig_correctness
    compares data.txt with the gold extraction. Everything else stays
    for humans.
    """
    card = PartialScorecard(task_id=task.id)
    required = task.required_chart_type
    if required is None:
        from .charts import infer_required_chart_type

        required = infer_required_chart_type(task.question)
    if required is not None and run.chart_type is not None:
        card.scores["chart_type"] = 1.0 if run.chart_type == required else 0.0
        card.provenance["chart_type"] = "auto"
    if gold is not None and "data.txt" in run.artifacts:
        try:
            with open(run.artifacts["data.txt"], encoding="utf-8") as fh:
                candidate = parse_data(fh.read())
        except Exception:
            candidate = None
        if candidate is not None:
            ordered = bool(task.gold_sql) and "order by" in task.gold_sql.lower()
            card.scores["fig_correctness"] = compare_to_gold(candidate, gold, ordered)
            card.provenance["fig_correctness"] = "auto"
    return card


def render_report(
    table: MetricTable | None,
    model_cost: float | None = None,
    model_seconds: tuple[float, float] | None = None,
) -> str:
    """Markdown report: rubric table, time table, cost table with ratios."""
    lines = ["# Evaluation report", ""]
    if table is not None and table.rows:
        groups = sorted({g for row in table.rows.values() for g in row["groups"]})
        header = "| Metric | " + " | ".join(f"Group {g}" for g in groups) + " | Average |"
        lines += ["## Rubric scores", "", header]
        lines.append("|" + "---|" * (len(groups) + 2))
        for metric in METRIC_RANGES:
            if metric not in table.rows:
                continue
            row = table.rows[metric]
            cells = [
                display_score(row["groups"][g]) if g in row["groups"] else ""
                for g in groups
            ]
            lines.append(
                f"| {metric} | "
                + " | ".join(cells)
                + f" | {display_score(row['average'])} |"
            )
        lines += ["", f"Tasks covered: {table.sample_count}", ""]

    lines += ["## Time per instance (seconds)", ""]
    lines.append("| Analyst | Figure | Analysis | Total |")
    lines.append("|---|---|---|---|")
    for level, (fig_s, ana_s) in ANALYST_SECONDS.items():
        lines.append(f"| {level} | {fig_s} | {ana_s} | {fig_s + ana_s} |")
    if model_seconds is not None:
        fig_s, ana_s = model_seconds
        lines.append(
            f"| this pipeline | {fig_s:.1f} | {ana_s:.1f} | {fig_s + ana_s:.1f} |"
        )
    lines.append("")

    lines += ["## Cost per instance (USD)", ""]
    lines.append("| Source | Level | Annual salary | Seconds | Cost |")
    lines.append("|---|---|---|---|---|")
    for source, level, salary, seconds, cost in reference_cost_rows():
        lines.append(f"| {source} | {level} | {salary} | {seconds} | {cost:.2f} |")
    for level, cost in ANNOTATION_COSTS.items():
        lines.append(f"| our annotation | {level} | | | {cost:.2f} |")
    measured = model_cost if model_cost is not None else MODEL_COST_REF
    lines.append(f"| this pipeline | model | | | {measured:.2f} |")
    lines.append("")
    lines += ["## Cost ratios (model vs annotation anchors)", ""]
    for level in ("intern", "junior", "senior"):
        ratio = cost_ratio(MODEL_COST_REF, ANNOTATION_COSTS[level])
        lines.append(f"- {display_ratio(ratio)}% of the {level} cost")
    lines.append("")
    return "\n".join(lines)


def merge_scores(
    card: PartialScorecard, annotations: list[Annotation]
) -> PartialScorecard:
    """Overlay human annotations on auto scores; humans win conflicts.

    Bullet metrics average over all of a task's bullet annotations;
    figure metrics average over the task's figure annotations.
    """
    per_metric: dict[str, list[float]] = {}
    for a in annotations:
        if a.task_id == card.task_id:
            per_metric.setdefault(a.metric, []).append(a.value)
    for metric, values in per_metric.items():
        card.scores[metric] = sum(values) / len(values)
        card.provenance[metric] = "human"
    return card
