"""Deterministic stand-in answers for offline runs.

Classification prompts get a keyword-based label; summary prompts get a short
extractive sentence built from the first review. Only meant to exercise the
pipeline without a live model.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import yaml

from .classify import CLASSIFY_TEMPLATE
from .llm import ChatRequest, MockProvider
from .summarize import SUMMARY_TEMPLATE

_CLASSIFY_HEAD = CLASSIFY_TEMPLATE.split("{lang}")[0]
_SUMMARY_HEAD = SUMMARY_TEMPLATE.split("{reviews}")[0]
_FENCED = re.compile(r"```\n(.*)\n```", re.S)

_PROBLEM = re.compile(
    r"crash|bug|error|erreur|doesn'?t work|does not work|not working|can'?t|cannot|unable|"
    r"fail|broken|freez|stuck|lost|disappear|wrong|issue|problem|useless|drain|"
    r"plante|plantage|ne fonctionne|fonctionne plus|marche pas|marche plus|impossible|échou|bloqu|"
    r"perdu|disparu|problème|panne|se fige|se vide|inutile|indispensable",
    re.I,
)
_FEATURE = re.compile(
    r"please add|\badd\b|would be (?:nice|great)|would like|would love|\bwish|should|feature|"
    r"could you|option to|support for|ajout|serait bien|j'aimerais|souhait|il faudrait|"
    r"fonctionnalité|pourriez|merci de mettre|please",
    re.I,
)


def heuristic_label(review: str) -> str:
    problem = bool(_PROBLEM.search(review))
    feature = bool(_FEATURE.search(review))
    if problem and feature:
        return "Feature request and problem report"
    if problem:
        return "Problem report"
    if feature:
        return "Feature request"
    return "Irrelevant"


def heuristic_summary(reviews: list[str]) -> str:
    first = reviews[0].strip().rstrip(".!?") if reviews else ""
    if len(first) > 100:
        first = first[:100].rsplit(" ", 1)[0]
    return f"Users say: {first}."


def offline_respond(req: ChatRequest) -> str:
    prompt = req.user
    body = _FENCED.search(prompt)
    inner = body.group(1) if body else prompt
    if prompt.startswith(_CLASSIFY_HEAD):
        return heuristic_label(inner)
    if prompt.startswith(_SUMMARY_HEAD):
        return heuristic_summary([line for line in inner.split("\n") if line.strip()])
    return "Irrelevant"


def load_script(path: str | Path) -> dict[str, str]:
    """Mock script file: a JSON/YAML mapping, or a list of [substring, response] pairs."""
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        return {str(k): str(v) for k, v in data.items()}
    if isinstance(data, list):
        return {str(k): str(v) for k, v in data}
    raise ValueError(f"{path}: mock script must be a mapping or a list of pairs")


def offline_provider(script: dict[str, str] | None = None) -> MockProvider:
    return MockProvider(script or {}, responder=offline_respond, id="mock-offline")


def dump_script(script: dict[str, str], path: str | Path) -> None:
    Path(path).write_text(json.dumps(script, ensure_ascii=False, indent=1), encoding="utf-8")
