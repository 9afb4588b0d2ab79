"""End-to-end orchestration: one task through the three steps, or a batch.

Content failures never raise out of run_task; they land in the record's
status (step1_failed / step2_failed / step3_failed) with diagnostics,
and every artifact produced before the failure stays on disk. Only
misuse (an already-existing run directory) raises.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import charts, extraction, insight, plan as planmod, prompts, schema as schemamod
from .corpus import TaskSpec
from .errors import AnalystError, RunDirectoryExists
from .gateway import DEFAULT_MAX_TOKENS, DEFAULT_MODEL, LlmGateway, LlmRequest, estimate_cost
from .knowledge import KnowledgeSnippets, Retriever

STATUSES = ("ok", "step1_failed", "step2_failed", "step3_failed")


@dataclass
class PipelineConfig:
    mode: str = "plan"  # plan | script
    online: bool = False
    temperature: float = 0.0
    model_id: str = DEFAULT_MODEL
    backend_mode: str = "mock"
    out_dir: str = "runs"
    retriever_k: int = 6
    max_tokens: int = DEFAULT_MAX_TOKENS
    sandbox_timeout_s: int = 60
    sandbox_memory_mb: int = 512


@dataclass
class RunRecord:
    task_id: str
    status: str
    mode: str
    online: bool
    step1_s: float = 0.0
    step2_s: float = 0.0
    step3_s: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    cost_usd: float = 0.0
    chart_type: str | None = None
    artifacts: dict = field(default_factory=dict)
    error: str | None = None


class _TaskRun:
    """Scratch state while one task moves through the steps."""

    def __init__(self, task: TaskSpec, config: PipelineConfig):
        self.task = task
        self.config = config
        self.dir = os.path.join(config.out_dir, task.id)
        self.record = RunRecord(
            task_id=task.id, status="ok", mode=config.mode, online=config.online
        )
        self.responses = []

    def write(self, name: str, content: str | bytes) -> str:
        path = os.path.join(self.dir, name)
        if isinstance(content, bytes):
            with open(path, "wb") as fh:
                fh.write(content)
        else:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(content)
        self.record.artifacts[name] = path
        return path

    def fail(self, step: str, exc: Exception) -> RunRecord:
        self.record.status = f"{step}_failed"
        self.record.error = f"{type(exc).__name__}: {exc}"
        return self.finish()

    def finish(self) -> RunRecord:
        self.record.prompt_tokens = sum(r.prompt_tokens for r in self.responses)
        self.record.completion_tokens = sum(r.completion_tokens for r in self.responses)
        self.record.cost_usd = estimate_cost(self.responses)
        meta = dataclasses.asdict(self.record)
        self.write("meta.json", json.dumps(meta, indent=1) + "\n")
        return self.record


def run_task(
    task: TaskSpec,
    config: PipelineConfig,
    gateway: LlmGateway,
    retriever: Retriever | None = None,
    sandbox=None,
) -> RunRecord:
    """Run one task end to end, persisting the full run directory.

    Raises RunDirectoryExists when the task's directory is already
    there (runs are write-once); any other expected failure is encoded
    in the returned record's status.
    """
    run = _TaskRun(task, config)
    if os.path.exists(run.dir):
        raise RunDirectoryExists(run.dir)
    os.makedirs(run.dir)
    run.write("question.txt", task.question + "\n")

    # step 1: build the prompt, call the model, parse its answer
    started = time.perf_counter()
    the_plan = None
    script = None
    try:
        db_schema = schemamod.introspect(task.db_path)
        schema_text = schemamod.render_schema(db_schema)
        required = task.required_chart_type or charts.infer_required_chart_type(
            task.question
        )
        if config.mode == "plan":
            prompt = prompts.build_plan_prompt(task.question, schema_text, required)
        else:
            prompt = prompts.build_code_prompt(
                task.question, db_schema.db_file_name, schema_text
            )
        run.write("prompt_code.txt", prompt)
        response = gateway.complete(
            LlmRequest(
                prompt=prompt,
                request_tag="code",
                model_id=config.model_id,
                temperature=config.temperature,
                max_tokens=config.max_tokens,
            )
        )
        run.responses.append(response)
        run.write("llm_code_response.txt", response.text)
        if config.mode == "plan":
            the_plan = planmod.parse_plan(response.text)
            run.write("plan.json", planmod.serialize_plan(the_plan) + "\n")
            run.record.chart_type = the_plan.chart.chart_type
        else:
            script = planmod.parse_script(response.text)
            run.write("script.py", script.code)
    except AnalystError as exc:
        run.record.step1_s = time.perf_counter() - started
        return run.fail("step1", exc)
    run.record.step1_s = time.perf_counter() - started

    # step 2: execute the plan (or the script in the sandbox), render
    started = time.perf_counter()
    try:
        if config.mode == "plan":
            validated = planmod.validate_plan(the_plan, db_schema)
            data = extraction.execute_plan(validated, task.db_path)
            if the_plan.chart.sort is not None:
                by, direction = the_plan.chart.sort
                data = extraction.apply_sort(data, by, direction)
            run.write("data.txt", extraction.serialize_data(data))
            figure_path = os.path.join(run.dir, "figure.svg")
            charts.render(the_plan.chart, data, figure_path)
            run.record.artifacts["figure.svg"] = figure_path
        else:
            if sandbox is None:
                raise AnalystError("script mode needs a sandbox client")
            result = sandbox.run_script(
                script.code,
                db_file=task.db_path,
                db_alias=db_schema.db_file_name,
                timeout_s=config.sandbox_timeout_s,
                memory_mb=config.sandbox_memory_mb,
            )
            if result.status != "ok":
                raise AnalystError(
                    f"sandbox status {result.status}: {result.stderr[:300]}"
                )
            run.write("data.txt", result.data_txt or b"")
            run.write("figure.pdf", result.figure or b"")
            data = extraction.parse_data(
                (result.data_txt or b"").decode("utf-8")
            )
    except AnalystError as exc:
        run.record.step2_s = time.perf_counter() - started
        return run.fail("step2", exc)
    run.record.step2_s = time.perf_counter() - started

    # step 3: optional retrieval, then the bullet analysis
    started = time.perf_counter()
    try:
        snippets: KnowledgeSnippets | None = None
        if config.online:
            if retriever is None:
                raise AnalystError("online mode needs a retriever")
            snippets = retriever.fetch(task.question, data)
            run.write(
                "snippets.json",
                json.dumps(
                    {
                        "query": snippets.query,
                        "fetched_at": snippets.fetched_at,
                        "snippets": [dataclasses.asdict(s) for s in snippets.snippets],
                    },
                    indent=1,
                )
                + "\n",
            )
        bullets, response, analysis_prompt = insight.generate_analysis(
            task.question,
            data,
            snippets,
            gateway,
            model_id=config.model_id,
            temperature=config.temperature,
        )
        run.responses.append(response)
        run.write("prompt_analysis.txt", analysis_prompt)
        run.write("llm_analysis_response.txt", response.text)
        run.write("analysis.md", bullets.to_markdown())
    except AnalystError as exc:
        run.record.step3_s = time.perf_counter() - started
        return run.fail("step3", exc)
    run.record.step3_s = time.perf_counter() - started
    return run.finish()


def run_batch(
    tasks: list[TaskSpec],
    config: PipelineConfig,
    gateway: LlmGateway,
    retriever: Retriever | None = None,
    sandbox=None,
    parallelism: int = 1,
) -> list[RunRecord]:
    """Run many tasks, one RunRecord each; a failure never stops the rest."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    def one(task: TaskSpec) -> RunRecord:
        try:
            return run_task(task, config, gateway, retriever, sandbox)
        except Exception as exc:  # keep per-task isolation absolute
            return RunRecord(
                task_id=task.id,
                status="step1_failed",
                mode=config.mode,
                online=config.online,
                error=f"{type(exc).__name__}: {exc}",
            )

    if parallelism == 1:
        return [one(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, tasks))


def summarize_batch(records: list[RunRecord]) -> dict:
    """The batch_summary.json payload: counts, cost, mean step times."""
    counts = {s: 0 for s in STATUSES}
    for r in records:
        counts[r.status] = counts.get(r.status, 0) + 1
    n = len(records) or 1
    return {
        "tasks": len(records),
        "counts": counts,
        "total_cost_usd": round(sum(r.cost_usd for r in records), 6),
        "mean_step_seconds": {
            "step1": round(sum(r.step1_s for r in records) / n, 4),
            "step2": round(sum(r.step2_s for r in records) / n, 4),
            "step3": round(sum(r.step3_s for r in records) / n, 4),
        },
    }
