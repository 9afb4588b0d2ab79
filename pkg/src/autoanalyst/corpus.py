"""Task corpus: a JSON manifest naming questions and their databases.

Manifest shape:

    {"root": "dbs", "tasks": [{"id", "question", "db_file", "chart_type"?,
     "difficulty", "domain", "gold_sql"?, "gold_bullets"?}]}

db_file paths resolve against root, root against the manifest's directory.
Unknown fields are ignored with a warning so manifests can carry extra
bookkeeping without breaking older readers.
"""

from __future__ import annotations

import json
import logging
import os
import random
from dataclasses import dataclass, field

from .errors import ManifestParseError, MissingDatabase, UnreadableFile

log = logging.getLogger(__name__)

CHART_TYPES = (
    "bar",
    "stacked_bar",
    "line",
    "grouping_line",
    "scatter",
    "grouping_scatter",
    "pie",
)

DIFFICULTIES = ("easy", "medium", "hard", "extra_hard")

_TASK_FIELDS = {
    "id",
    "question",
    "db_file",
    "chart_type",
    "difficulty",
    "domain",
    "gold_sql",
    "gold_bullets",
}


@dataclass
class TaskSpec:
    id: str
    question: str
    db_path: str
    difficulty: str
    domain: str
    required_chart_type: str | None = None
    gold_sql: str | None = None
    gold_bullets: list[str] | None = None


@dataclass
class Corpus:
    root: str
    tasks: list[TaskSpec] = field(default_factory=list)

    def by_id(self, task_id: str) -> TaskSpec:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)


@dataclass
class TaskFilter:
    """Selection criteria for a batch run.

    `count` with a `seed` draws a reproducible sample; without it the
    filter just narrows the corpus in manifest order.
    """

    chart_types: list[str] | None = None
    difficulties: list[str] | None = None
    domains: list[str] | None = None
    ids: list[str] | None = None
    count: int | None = None
    seed: int = 0


def _require(obj: dict, key: str, kind: type, where: str):
    if key not in obj:
        raise ManifestParseError(f"{where}: missing required field {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise ManifestParseError(f"{where}: field {key!r} must be {kind.__name__}")
    return value


def load_corpus(manifest_path: str) -> Corpus:
    """Parse a manifest and verify every referenced database is readable."""
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ManifestParseError(f"{manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"{manifest_path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("tasks"), list):
        raise ManifestParseError(
            f"{manifest_path}: top level must be an object with a 'tasks' list"
        )
    for key in raw:
        if key not in ("root", "tasks"):
            log.warning("%s: ignoring unknown manifest field %r", manifest_path, key)
    base = os.path.dirname(os.path.abspath(manifest_path))
    root = os.path.normpath(os.path.join(base, str(raw.get("root", "."))))
    tasks: list[TaskSpec] = []
    seen: set[str] = set()
    for n, entry in enumerate(raw["tasks"]):
        where = f"tasks[{n}]"
        if not isinstance(entry, dict):
            raise ManifestParseError(f"{where}: must be an object")
        for key in entry:
            if key not in _TASK_FIELDS:
                log.warning("%s: ignoring unknown task field %r", where, key)
        task_id = _require(entry, "id", str, where)
        if task_id in seen:
            raise ManifestParseError(f"{where}: duplicate task id {task_id!r}")
        seen.add(task_id)
        difficulty = _require(entry, "difficulty", str, where)
        if difficulty not in DIFFICULTIES:
            raise ManifestParseError(f"{where}: unknown difficulty {difficulty!r}")
        chart_type = entry.get("chart_type")
        if chart_type is not None and chart_type not in CHART_TYPES:
            raise ManifestParseError(f"{where}: unknown chart_type {chart_type!r}")
        gold_sql = entry.get("gold_sql")
        if gold_sql is not None and not isinstance(gold_sql, str):
            raise ManifestParseError(f"{where}: gold_sql must be a string")
        gold_bullets = entry.get("gold_bullets")
        if gold_bullets is not None and (
            not isinstance(gold_bullets, list)
            or not all(isinstance(b, str) for b in gold_bullets)
        ):
            raise ManifestParseError(f"{where}: gold_bullets must be a string list")
        db_rel = _require(entry, "db_file", str, where)
        tasks.append(
            TaskSpec(
                id=task_id,
                question=_require(entry, "question", str, where),
                db_path=os.path.normpath(os.path.join(root, db_rel)),
                difficulty=difficulty,
                domain=_require(entry, "domain", str, where),
                required_chart_type=chart_type,
                gold_sql=gold_sql,
                gold_bullets=gold_bullets,
            )
        )
    for t in tasks:
        if not os.path.exists(t.db_path):
            raise MissingDatabase(t.db_path)
        if not os.access(t.db_path, os.R_OK):
            raise UnreadableFile(t.db_path)
    return Corpus(root=root, tasks=tasks)


def select_tasks(corpus: Corpus, spec: TaskFilter) -> list[TaskSpec]:
    """Apply a TaskFilter; sampling is seeded and keeps manifest order."""
    picked = corpus.tasks
    if spec.ids is not None:
        wanted = set(spec.ids)
        picked = [t for t in picked if t.id in wanted]
    if spec.chart_types is not None:
        allowed = set(spec.chart_types)
        picked = [t for t in picked if t.required_chart_type in allowed]
    if spec.difficulties is not None:
        allowed = set(spec.difficulties)
        picked = [t for t in picked if t.difficulty in allowed]
    if spec.domains is not None:
        allowed = set(spec.domains)
        picked = [t for t in picked if t.domain in allowed]
    if spec.count is not None and spec.count < len(picked):
        rng = random.Random(spec.seed)
        keep = set(rng.sample(range(len(picked)), spec.count))
        picked = [t for i, t in enumerate(picked) if i in keep]
    return list(picked)
