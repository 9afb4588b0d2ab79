"""Command-line surface: run, batch, eval, report, corpus-import.

Configuration precedence is flags > environment > TOML file (./da.toml,
overridable via DA_CONFIG). Exit codes: 0 success, 1 content failure,
2 usage or configuration error.
"""

from __future__ import annotations

import json
import os
import random
import sys

import click

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 path
    import tomli as tomllib

from . import evalkit, extraction, pipeline
from .charts import render
from .corpus import CHART_TYPES, DIFFICULTIES, TaskSpec, TaskFilter, load_corpus, select_tasks
from .errors import AnalystError, RunDirectoryExists, UsageError
from .gateway import DEFAULT_MODEL, Cassette, HttpTransport, LlmGateway
from .knowledge import CannedBackend, LiveBackend, Retriever, SnippetCache
from .plan import ChartSpec
from .sandboxclient import SandboxClient


def _load_config_file() -> dict:
    path = os.environ.get("DA_CONFIG", "da.toml")
    if not os.path.exists(path):
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"bad config file {path}: {exc}") from exc


def _resolve(flag, env_name: str | None, file_key: str, config: dict, default):
    """flags > env > file > default."""
    if flag is not None:
        return flag
    if env_name and os.environ.get(env_name):
        return os.environ[env_name]
    if file_key in config:
        return config[file_key]
    return default


def _build_gateway(backend: str, cassette_path: str | None, mock_script_path: str | None) -> LlmGateway:
    if backend == "replay":
        if not cassette_path or not os.path.exists(cassette_path):
            raise UsageError("replay mode needs --cassette pointing at a recorded file")
        return LlmGateway("replay", cassette=Cassette.load(cassette_path))
    if backend == "mock":
        if not mock_script_path:
            raise UsageError("mock mode needs --mock-script")
        with open(mock_script_path, encoding="utf-8") as fh:
            return LlmGateway("mock", mock_script=json.load(fh))
    transport = HttpTransport()
    if not transport.endpoint or not transport.api_key:
        raise UsageError(
            "live/record modes need DA_LLM_ENDPOINT and DA_LLM_API_KEY set"
        )
    return LlmGateway(backend, transport=transport)


def _build_retriever(online: bool, retriever_path: str | None, k: int, cache_path: str | None) -> Retriever | None:
    if not online:
        return None
    cache = SnippetCache(cache_path) if cache_path else None
    if retriever_path:
        return Retriever(CannedBackend(retriever_path), k=k, cache=cache)
    backend = LiveBackend()
    if not backend.endpoint or not backend.api_key:
        raise UsageError(
            "--online without --retriever needs DA_SEARCH_ENDPOINT and DA_SEARCH_API_KEY"
        )
    return Retriever(backend, k=k, cache=cache)


def _common_config(config: dict, mode, backend, model, temperature, out, online) -> pipeline.PipelineConfig:
    return pipeline.PipelineConfig(
        mode=_resolve(mode, None, "mode", config, "plan"),
        online=bool(_resolve(online or None, None, "online", config, False)),
        temperature=float(_resolve(temperature, None, "temperature", config, 0.0)),
        model_id=str(_resolve(model, "DA_LLM_MODEL", "model", config, DEFAULT_MODEL)),
        backend_mode=str(_resolve(backend, None, "backend", config, "mock")),
        out_dir=str(_resolve(out, None, "out", config, "runs")),
    )


@click.group()
def main():
    """Question + SQLite database -> chart + bullet analysis."""


_run_options = [
    click.option("--mode", type=click.Choice(["plan", "script"]), default=None),
    click.option("--backend", type=click.Choice(["live", "record", "replay", "mock"]), default=None),
    click.option("--cassette", type=click.Path(), default=None, help="cassette file for record/replay"),
    click.option("--mock-script", "mock_script", type=click.Path(exists=True), default=None, help="JSON tag->response script for the mock backend"),
    click.option("--model", default=None, help="model id sent to the backend"),
    click.option("--temperature", type=float, default=None),
    click.option("--online/--offline", "online", default=False, help="augment the analysis step with retrieved snippets"),
    click.option("--retriever", "retriever_path", type=click.Path(exists=True), default=None, help="canned search backend JSON file"),
    click.option("--retriever-k", "retriever_k", type=int, default=6),
    click.option("--snippet-cache", "cache_path", type=click.Path(), default=None),
    click.option("--out", type=click.Path(), default=None, help="run directory root"),
    click.option("--sandbox-cmd", "sandbox_cmd", default=None, help="command line that starts the script-mode runner"),
]


def _apply(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn

    return wrap


@main.command()
@click.option("--question", default=None, help="ad-hoc question (with --db)")
@click.option("--db", "db_path", type=click.Path(exists=True), default=None)
@click.option("--task", "task_id", default=None, help="task id from --corpus")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--run-id", default=None, help="run directory name (ad-hoc runs)")
@_apply(_run_options)
def run(question, db_path, task_id, corpus_path, run_id, mode, backend, cassette,
        mock_script, model, temperature, online, retriever_path, retriever_k,
        cache_path, out, sandbox_cmd):
    """Run one task through the full pipeline."""
    try:
        config_file = _load_config_file()
        cfg = _common_config(config_file, mode, backend, model, temperature, out, online)
        if task_id is not None:
            if corpus_path is None:
                raise UsageError("--task needs --corpus")
            task = load_corpus(corpus_path).by_id(task_id)
        elif question is not None and db_path is not None:
            task = TaskSpec(
                id=run_id or "adhoc",
                question=question,
                db_path=db_path,
                difficulty="medium",
                domain="adhoc",
            )
        else:
            raise UsageError("need either --task with --corpus, or --question with --db")
        gateway = _build_gateway(cfg.backend_mode, cassette, mock_script)
        retriever = _build_retriever(cfg.online, retriever_path, retriever_k, cache_path)
        sandbox = SandboxClient(sandbox_cmd.split()) if sandbox_cmd else None
        if cfg.mode == "script" and sandbox is None:
            raise UsageError("script mode needs --sandbox-cmd")
        record = pipeline.run_task(task, cfg, gateway, retriever, sandbox)
        if cfg.backend_mode == "record" and cassette:
            gateway.cassette.save(cassette)
    except KeyError as exc:
        _fail_usage(f"no such task: {exc}")
    except (UsageError, RunDirectoryExists) as exc:
        _fail_usage(str(exc))
    except AnalystError as exc:
        _fail_usage(str(exc))
    else:
        click.echo(f"status: {record.status}")
        for name, path in sorted(record.artifacts.items()):
            click.echo(f"  {name}: {path}")
        sys.exit(0 if record.status == "ok" else 1)


@main.command()
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--chart-type", "chart_types", multiple=True, type=click.Choice(CHART_TYPES))
@click.option("--difficulty", "difficulties", multiple=True, type=click.Choice(DIFFICULTIES))
@click.option("--task-id", "ids", multiple=True)
@click.option("--count", type=int, default=None, help="sample size (seeded)")
@click.option("--seed", type=int, default=0)
@click.option("--parallelism", type=int, default=1)
@_apply(_run_options)
def batch(corpus_path, chart_types, difficulties, ids, count, seed, parallelism,
          mode, backend, cassette, mock_script, model, temperature, online,
          retriever_path, retriever_k, cache_path, out, sandbox_cmd):
    """Run a filtered set of corpus tasks; writes batch_summary.json."""
    try:
        config_file = _load_config_file()
        cfg = _common_config(config_file, mode, backend, model, temperature, out, online)
        corpus = load_corpus(corpus_path)
        tasks = select_tasks(
            corpus,
            TaskFilter(
                chart_types=list(chart_types) or None,
                difficulties=list(difficulties) or None,
                ids=list(ids) or None,
                count=count,
                seed=seed,
            ),
        )
        gateway = _build_gateway(cfg.backend_mode, cassette, mock_script)
        retriever = _build_retriever(cfg.online, retriever_path, retriever_k, cache_path)
        sandbox = SandboxClient(sandbox_cmd.split()) if sandbox_cmd else None
        if cfg.mode == "script" and sandbox is None:
            raise UsageError("script mode needs --sandbox-cmd")
        records = pipeline.run_batch(
            tasks, cfg, gateway, retriever, sandbox, parallelism=parallelism
        )
        if cfg.backend_mode == "record" and cassette:
            gateway.cassette.save(cassette)
        summary = pipeline.summarize_batch(records)
        os.makedirs(cfg.out_dir, exist_ok=True)
        summary_path = os.path.join(cfg.out_dir, "batch_summary.json")
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=1)
    except (UsageError, AnalystError) as exc:
        _fail_usage(str(exc))
    else:
        click.echo(json.dumps(summary, indent=1))
        click.echo(f"summary: {summary_path}")
        all_ok = all(r.status == "ok" for r in records)
        sys.exit(0 if all_ok else 1)


@main.command()
@click.option("--run-dir", "run_dir", type=click.Path(exists=True), required=True)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--annotations", "annotations_path", type=click.Path(exists=True), default=None)
@click.option("--out", default=None, help="scorecards path (default <run-dir>/scorecards.json)")
def eval(run_dir, corpus_path, annotations_path, out):
    """Score finished runs: auto metrics plus optional human annotations."""
    try:
        corpus = load_corpus(corpus_path)
        annotations = (
            evalkit.ingest_annotations(annotations_path) if annotations_path else []
        )
        cards = []
        for task_dir in sorted(os.listdir(run_dir)):
            meta_path = os.path.join(run_dir, task_dir, "meta.json")
            if not os.path.isfile(meta_path):
                continue
            with open(meta_path, encoding="utf-8") as fh:
                record = pipeline.RunRecord(**json.load(fh))
            try:
                task = corpus.by_id(record.task_id)
            except KeyError:
                continue
            gold = None
            if record.status == "ok" and task.gold_sql:
                gold = extraction.execute_sql(task.db_path, task.gold_sql)
            card = evalkit.auto_scores(record, task, gold)
            card = evalkit.merge_scores(card, annotations)
            cards.append(
                {
                    "task_id": record.task_id,
                    "status": record.status,
                    "seconds": {
                        "step1": record.step1_s,
                        "step2": record.step2_s,
                        "step3": record.step3_s,
                    },
                    "cost_usd": record.cost_usd,
                    "scores": card.scores,
                    "provenance": card.provenance,
                }
            )
        out_path = out or os.path.join(run_dir, "scorecards.json")
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(cards, fh, indent=1)
    except AnalystError as exc:
        _fail_usage(str(exc))
    else:
        click.echo(f"scorecards: {out_path} ({len(cards)} tasks)")
        sys.exit(0)


@main.command()
@click.option("--scorecards", "scorecards_path", type=click.Path(exists=True), required=True)
@click.option("--annotations", "annotations_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def report(scorecards_path, annotations_path, out_dir):
    """Render the comparison report: markdown, delimited scores, figure."""
    try:
        with open(scorecards_path, encoding="utf-8") as fh:
            cards = json.load(fh)
        if annotations_path:
            table = evalkit.aggregate(evalkit.ingest_annotations(annotations_path))
        else:
            table = _table_from_cards(cards)
        costs = [c["cost_usd"] for c in cards if c.get("status") == "ok"]
        model_cost = sum(costs) / len(costs) if costs else None
        oks = [c for c in cards if c.get("status") == "ok"]
        model_seconds = None
        if oks:
            fig = sum(c["seconds"]["step1"] + c["seconds"]["step2"] for c in oks) / len(oks)
            ana = sum(c["seconds"]["step3"] for c in oks) / len(oks)
            model_seconds = (fig, ana)
        os.makedirs(out_dir, exist_ok=True)
        md = evalkit.render_report(table, model_cost, model_seconds)
        md_path = os.path.join(out_dir, "report.md")
        with open(md_path, "w", encoding="utf-8") as fh:
            fh.write(md)
        paths = [md_path]
        if table is not None and table.rows:
            paths += _write_score_sinks(table, out_dir)
    except AnalystError as exc:
        _fail_usage(str(exc))
    else:
        for p in paths:
            click.echo(p)
        sys.exit(0)


def _table_from_cards(cards) -> evalkit.MetricTable | None:
    rows: dict[str, dict] = {}
    for metric in evalkit.METRIC_RANGES:
        values = [
            c["scores"][metric]
            for c in cards
            if metric in c.get("scores", {})
        ]
        if values:
            mean = sum(values) / len(values)
            rows[metric] = {"groups": {1: mean}, "average": mean}
    if not rows:
        return None
    return evalkit.MetricTable(rows=rows, sample_count=len(cards))


def _write_score_sinks(table: evalkit.MetricTable, out_dir: str) -> list[str]:
    """The delimited score table and its bar-chart rendering."""
    metrics = [m for m in evalkit.METRIC_RANGES if m in table.rows]
    data = extraction.ExtractedData(
        columns=["metric", "average"],
        rows=[[m, table.rows[m]["average"]] for m in metrics],
    )
    txt_path = os.path.join(out_dir, "report_scores.txt")
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(extraction.serialize_data(data))
    svg_path = os.path.join(out_dir, "report_scores.svg")
    render(
        ChartSpec(chart_type="bar", x="metric", y=["average"]),
        data,
        svg_path,
    )
    return [txt_path, svg_path]


_NVBENCH_CHARTS = {
    "bar": "bar",
    "stacked bar": "stacked_bar",
    "line": "line",
    "grouping line": "grouping_line",
    "scatter": "scatter",
    "grouping scatter": "grouping_scatter",
    "pie": "pie",
}

_NVBENCH_HARDNESS = {
    "easy": "easy",
    "medium": "medium",
    "hard": "hard",
    "extra hard": "extra_hard",
}


@main.command("corpus-import")
@click.option("--source", type=click.Path(exists=True), required=True, help="benchmark JSON file")
@click.option("--databases", "databases_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--count", type=int, default=None)
@click.option("--seed", type=int, default=0)
def corpus_import(source, databases_dir, out_path, count, seed):
    """Convert a benchmark dump (id -> {nl_queries, db_id, ...}) to a manifest."""
    try:
        with open(source, encoding="utf-8") as fh:
            raw = json.load(fh)
        entries = []
        for key, entry in raw.items():
            if not isinstance(entry, dict):
                continue
            questions = entry.get("nl_queries") or []
            chart = str(
                entry.get("chart") or entry.get("vis_query", {}).get("chart", "")
            ).lower()
            hardness = str(entry.get("hardness", "")).lower()
            db_id = entry.get("db_id", "")
            db_file = os.path.join(db_id, f"{db_id}.sqlite")
            if (
                not questions
                or chart not in _NVBENCH_CHARTS
                or hardness not in _NVBENCH_HARDNESS
                or not os.path.exists(os.path.join(databases_dir, db_file))
            ):
                continue
            entries.append(
                {
                    "id": str(key).replace("/", "_"),
                    "question": str(questions[0]),
                    "db_file": db_file,
                    "chart_type": _NVBENCH_CHARTS[chart],
                    "difficulty": _NVBENCH_HARDNESS[hardness],
                    "domain": str(db_id),
                }
            )
        if count is not None and count < len(entries):
            rng = random.Random(seed)
            keep = set(rng.sample(range(len(entries)), count))
            entries = [e for i, e in enumerate(entries) if i in keep]
        manifest = {
            "root": os.path.relpath(
                databases_dir, os.path.dirname(os.path.abspath(out_path)) or "."
            ),
            "tasks": entries,
        }
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1)
    except AnalystError as exc:
        _fail_usage(str(exc))
    else:
        click.echo(f"{out_path}: {len(entries)} tasks")
        sys.exit(0)


def _fail_usage(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


if __name__ == "__main__":
    main()
