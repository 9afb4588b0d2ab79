"""Bullet-point analysis: generate via the gateway and parse the result."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import UnparseableAnalysis
from .extraction import ExtractedData, serialize_data
from .gateway import LlmGateway, LlmRequest, LlmResponse
from .knowledge import KnowledgeSnippets
from .prompts import build_analysis_prompt

TARGET_BULLETS = 5
MAX_BULLETS = 10

_MARKER_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+")


@dataclass
class AnalysisBullets:
    bullets: list[str]
    deviation_flag: bool  # count differs from the 5 asked for

    def to_markdown(self) -> str:
        return "\n".join(f"{i}. {b}" for i, b in enumerate(self.bullets, 1)) + "\n"


def parse_bullets(text: str) -> AnalysisBullets:
    """Pull an ordered bullet list out of model text.

    Accepts numbered ("1.", "2)"), dashed ("-", "*", bullet dot) or
    blank-line-separated items; markers are stripped, order kept.
    Anything past ten items is dropped (the flag records the deviation).
    """
    lines = text.split("\n")
    bullets: list[str] = []
    current: list[str] | None = None
    saw_marker = False
    for line in lines:
        if _MARKER_RE.match(line):
            saw_marker = True
            if current:
                bullets.append(" ".join(current))
            current = [_MARKER_RE.sub("", line).strip()]
        elif line.strip() and current is not None:
            current.append(line.strip())
    if current:
        bullets.append(" ".join(current))
    if not saw_marker:
        # fall back to paragraphs split on blank lines
        paragraphs = re.split(r"\n\s*\n", text)
        bullets = [" ".join(p.split()) for p in paragraphs if p.strip()]
    bullets = [b for b in bullets if b.strip()]
    if not bullets:
        raise UnparseableAnalysis("no bullet structure found")
    bullets = bullets[:MAX_BULLETS]
    return AnalysisBullets(
        bullets=bullets, deviation_flag=len(bullets) != TARGET_BULLETS
    )


def generate_analysis(
    question: str,
    data: ExtractedData,
    snippets: KnowledgeSnippets | None,
    gateway: LlmGateway,
    model_id: str | None = None,
    temperature: float = 0.0,
) -> tuple[AnalysisBullets, LlmResponse, str]:
    """Run the analysis step; returns (bullets, raw response, prompt)."""
    prompt = build_analysis_prompt(question, serialize_data(data), snippets)
    kwargs = {} if model_id is None else {"model_id": model_id}
    response = gateway.complete(
        LlmRequest(
            prompt=prompt, request_tag="analysis", temperature=temperature, **kwargs
        )
    )
    return parse_bullets(response.text), response, prompt
