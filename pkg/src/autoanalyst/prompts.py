"""Prompt builders for the three model calls.

All builders are pure string functions: same inputs, same bytes. Slots
must be non-empty; an empty slot raises EmptySlot naming the slot rather
than silently emitting a broken prompt.
"""

from __future__ import annotations

from .errors import EmptySlot
from .knowledge import KnowledgeSnippets

CODE_INSTRUCTION = (
    "Write Python code to select relevant data and draw the chart. "
    'Please save the plot to "figure.pdf" and save the label and value '
    'shown in the graph to "data.txt".'
)

ANALYSIS_INSTRUCTION = (
    "Generate analysis and insights about the data in 5 bullet points."
)

PLAN_SCHEMA_VERSION = "v1"

_PLAN_CONTRACT = """Respond with exactly one fenced JSON object (schema {version}) of this shape:

```json
{{"sql": "<one SELECT statement>",
  "chart": {{"type": "<bar|stacked_bar|line|grouping_line|scatter|grouping_scatter|pie>",
            "x": "<output column>",
            "y": ["<output column>", "..."],
            "series": "<output column; only for stacked_bar, grouping_line, grouping_scatter>",
            "sort": {{"by": "<output column>", "dir": "<asc|desc>"}}}}}}
```

The SQL must be a single SELECT against the schema above. Chart columns must
name output columns of the SQL. Omit "series" and "sort" when not needed."""


def _check(value: str, slot: str) -> str:
    if not value or not value.strip():
        raise EmptySlot(slot)
    return value


def build_code_prompt(question: str, db_file_name: str, schema_text: str) -> str:
    """The script-mode prompt: question, connect line, schema, instructions."""
    _check(question, "question")
    _check(db_file_name, "database file name")
    _check(schema_text, "database schema")
    return (
        f"Question: {question}\n"
        "\n"
        f"conn = sqlite3.connect({db_file_name})\n"
        "\n"
        f"{schema_text}\n"
        "\n"
        f"{CODE_INSTRUCTION}"
    )


def build_plan_prompt(
    question: str, schema_text: str, required_chart: str | None = None
) -> str:
    """The plan-mode prompt: asks for a JSON plan instead of raw code."""
    _check(question, "question")
    _check(schema_text, "database schema")
    text = (
        f"Question: {question}\n"
        "\n"
        f"{schema_text}\n"
        "\n"
        f"{_PLAN_CONTRACT.format(version=PLAN_SCHEMA_VERSION)}"
    )
    if required_chart is not None:
        text += f'\nThe chart type must be "{required_chart}".'
    return text


def build_analysis_prompt(
    question: str, data_txt: str, snippets: KnowledgeSnippets | None = None
) -> str:
    """The analysis prompt over extracted data, optionally with snippets."""
    _check(question, "question")
    _check(data_txt, "extracted data")
    text = (
        f"Question: {question}\n"
        "\n"
        f"{data_txt.rstrip()}\n"
        "\n"
        f"{ANALYSIS_INSTRUCTION}"
    )
    if snippets is not None:
        lines = "\n".join(f"- {s.text}" for s in snippets.snippets)
        text += "\n\nOnline information:\n" + lines
    return text
