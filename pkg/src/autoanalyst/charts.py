"""Deterministic matplotlib rendering for the seven chart types.

Renders are byte-stable for identical inputs: fixed figure size, a fixed
svg hash salt, and no timestamps in file metadata. Colors follow the
default cycle in series first-appearance order. Legends appear exactly
when the spec uses a series column; multi-y plain charts draw without
one (series charts read y[0] and ignore extra y columns).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import EmptyData, NonNumericY, PieDomainError
from .extraction import Cell, ExtractedData, apply_sort
from .plan import ChartSpec

FIG_SIZE = (8.0, 5.0)
DPI = 100
_HASH_SALT = "autoanalyst"
_ROTATE_BEYOND = 8  # x tick labels rotate past this many categories


@dataclass
class FigureArtifact:
    path: str
    format: str
    chart_type: str
    width: int
    height: int


def _label(value: Cell) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _numeric(values: list[Cell], column: str) -> list[float]:
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise NonNumericY(f"column {column!r} holds non-numeric value {v!r}")
        out.append(float(v))
    return out


def _all_numeric(values: list[Cell]) -> bool:
    return all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values)


def _first_appearance(values: list) -> list:
    return list(dict.fromkeys(values))


def render(spec: ChartSpec, data: ExtractedData, out: str) -> FigureArtifact:
    """Draw one figure for a chart spec over extracted data.

    Output format follows the file extension (.svg default, .pdf
    supported). Raises ColumnMissing / NonNumericY / EmptyData /
    PieDomainError before any file is written.
    """
    if not data.rows:
        raise EmptyData("no rows to draw")
    if spec.sort is not None:
        data = apply_sort(data, spec.sort[0], spec.sort[1])
    # force the column lookups early so errors beat file creation
    data.column_index(spec.x)
    for c in spec.y:
        data.column_index(c)
    if spec.series is not None:
        data.column_index(spec.series)

    fmt = "pdf" if out.lower().endswith(".pdf") else "svg"
    with matplotlib.rc_context({"svg.hashsalt": _HASH_SALT}):
        fig, ax = plt.subplots(figsize=FIG_SIZE, dpi=DPI)
        try:
            _draw(spec, data, ax)
            fig.tight_layout()
            metadata = {"Date": None} if fmt == "svg" else {"CreationDate": None}
            fig.savefig(out, format=fmt, metadata=metadata)
        finally:
            plt.close(fig)
    return FigureArtifact(
        path=out,
        format=fmt,
        chart_type=spec.chart_type,
        width=int(FIG_SIZE[0] * DPI),
        height=int(FIG_SIZE[1] * DPI),
    )


def _draw(spec: ChartSpec, data: ExtractedData, ax) -> None:
    kind = spec.chart_type
    if kind == "pie":
        _draw_pie(spec, data, ax)
    elif kind == "bar":
        _draw_bar(spec, data, ax)
    elif kind == "stacked_bar":
        _draw_stacked_bar(spec, data, ax)
    elif kind in ("line", "scatter"):
        _draw_xy(spec, data, ax, kind)
    elif kind in ("grouping_line", "grouping_scatter"):
        _draw_grouped_xy(spec, data, ax, kind)
    else:
        raise ValueError(f"unknown chart type {kind!r}")


def _category_positions(xs: list[Cell], ax) -> tuple[list[float], bool]:
    """Numeric x stays numeric; otherwise categories get integer slots."""
    if _all_numeric(xs):
        return [float(v) for v in xs], True
    cats = _first_appearance([_label(v) for v in xs])
    index = {c: i for i, c in enumerate(cats)}
    ax.set_xticks(range(len(cats)))
    rotation = 45 if len(cats) > _ROTATE_BEYOND else 0
    ax.set_xticklabels(cats, rotation=rotation, ha="right" if rotation else "center")
    return [float(index[_label(v)]) for v in xs], False


def _draw_pie(spec: ChartSpec, data: ExtractedData, ax) -> None:
    ycol = spec.y[0]
    values = _numeric(data.column_values(ycol), ycol)
    if any(v < 0 for v in values):
        raise PieDomainError("pie values must be non-negative")
    if sum(values) <= 0:
        raise PieDomainError("pie values sum to zero")
    labels = [_label(v) for v in data.column_values(spec.x)]
    # largest sector first keeps small slices from crowding the labels
    order = sorted(range(len(values)), key=lambda i: -values[i])
    ax.pie(
        [values[i] for i in order],
        labels=[labels[i] for i in order],
        autopct="%1.1f%%",
        startangle=90,
        counterclock=False,
    )
    ax.set_xlabel(spec.x)
    ax.set_ylabel(ycol)


def _draw_bar(spec: ChartSpec, data: ExtractedData, ax) -> None:
    xs = data.column_values(spec.x)
    labels = [_label(v) for v in xs]
    cats = _first_appearance(labels)
    width = 0.8 / len(spec.y)
    for j, ycol in enumerate(spec.y):
        values = _numeric(data.column_values(ycol), ycol)
        offset = (j - (len(spec.y) - 1) / 2) * width
        ax.bar(
            [cats.index(l) + offset for l in labels],
            values,
            width=width,
        )
    ax.set_xticks(range(len(cats)))
    rotation = 45 if len(cats) > _ROTATE_BEYOND else 0
    ax.set_xticklabels(cats, rotation=rotation, ha="right" if rotation else "center")
    ax.set_xlabel(spec.x)
    ax.set_ylabel(", ".join(spec.y))


def _draw_stacked_bar(spec: ChartSpec, data: ExtractedData, ax) -> None:
    assert spec.series is not None
    ycol = spec.y[0]
    xs = [_label(v) for v in data.column_values(spec.x)]
    groups = [_label(v) for v in data.column_values(spec.series)]
    values = _numeric(data.column_values(ycol), ycol)
    cats = _first_appearance(xs)
    series_names = _first_appearance(groups)
    totals = {c: 0.0 for c in cats}
    table = {(x, g): 0.0 for x in cats for g in series_names}
    for x, g, v in zip(xs, groups, values):
        table[(x, g)] += v
    for g in series_names:
        heights = [table[(c, g)] for c in cats]
        bottoms = [totals[c] for c in cats]
        ax.bar(range(len(cats)), heights, bottom=bottoms, label=g)
        for c, h in zip(cats, heights):
            totals[c] += h
    ax.set_xticks(range(len(cats)))
    rotation = 45 if len(cats) > _ROTATE_BEYOND else 0
    ax.set_xticklabels(cats, rotation=rotation, ha="right" if rotation else "center")
    ax.set_xlabel(spec.x)
    ax.set_ylabel(ycol)
    ax.legend(title=spec.series)


def _draw_xy(spec: ChartSpec, data: ExtractedData, ax, kind: str) -> None:
    xs, _ = _category_positions(data.column_values(spec.x), ax)
    for ycol in spec.y:
        values = _numeric(data.column_values(ycol), ycol)
        if kind == "line":
            ax.plot(xs, values, marker="o")
        else:
            ax.scatter(xs, values)
    ax.set_xlabel(spec.x)
    ax.set_ylabel(", ".join(spec.y))


def _draw_grouped_xy(spec: ChartSpec, data: ExtractedData, ax, kind: str) -> None:
    assert spec.series is not None
    ycol = spec.y[0]
    xs_raw = data.column_values(spec.x)
    positions, _ = _category_positions(xs_raw, ax)
    groups = [_label(v) for v in data.column_values(spec.series)]
    values = _numeric(data.column_values(ycol), ycol)
    for name in _first_appearance(groups):
        pts = [
            (p, v) for p, g, v in zip(positions, groups, values) if g == name
        ]
        px = [p for p, _ in pts]
        py = [v for _, v in pts]
        if kind == "grouping_line":
            ax.plot(px, py, marker="o", label=name)
        else:
            ax.scatter(px, py, label=name)
    ax.set_xlabel(spec.x)
    ax.set_ylabel(ycol)
    ax.legend(title=spec.series)


# --- chart type inference ---------------------------------------------------

_PATTERNS = (
    ("stacked_bar", re.compile(r"stack(?:ed)?[ -]bar")),
    ("grouping_line", re.compile(r"group(?:ing|ed)?[ -]line")),
    ("grouping_scatter", re.compile(r"group(?:ing|ed)?[ -]scatter")),
    ("pie", re.compile(r"\bpie\b")),
    ("bar", re.compile(r"\bbar\b")),
    ("line", re.compile(r"\bline\b")),
    ("scatter", re.compile(r"\bscatter\b")),
)


def infer_required_chart_type(question: str) -> str | None:
    """Keyword sniff for an explicitly requested chart type, if any."""
    q = question.lower()
    for chart_type, pattern in _PATTERNS:
        if pattern.search(q):
            return chart_type
    return None
