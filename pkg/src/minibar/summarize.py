"""Cluster summaries, split into token-budgeted groups and summarized recursively."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

from .classify import defence
from .llm import ChatRequest, Gateway

logger = logging.getLogger(__name__)

SUMMARY_TEMPLATE = (
    "Please summarize all following app reviews into one English sentence:\n```\n{reviews}\n```"
)
MAX_DEPTH = 6
SEPARATOR_TOKENS = 1


class RecursionCapExceeded(RuntimeError):
    pass


def estimate_tokens(text: str) -> int:
    """Conservative token estimate: one token per 4 UTF-8 bytes, rounded up."""
    return math.ceil(len(text.encode("utf-8")) / 4)


ESTIMATORS: dict[str, Callable[[str], int]] = {"bytes/4": estimate_tokens}


@dataclass(frozen=True)
class TokenBudget:
    max_tokens_per_group: int = 4000
    estimator: str = "bytes/4"

    def __post_init__(self):
        if self.max_tokens_per_group < 2:
            raise ValueError("max_tokens_per_group must be >= 2")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown token estimator {self.estimator!r}")

    def count(self, text: str) -> int:
        return ESTIMATORS[self.estimator](text)


@dataclass(frozen=True)
class ClusterSummary:
    cluster: int
    summary: str
    depth: int
    n_llm_calls: int


def truncate_to_tokens(text: str, tokens: int, budget: TokenBudget) -> str:
    raw = text.encode("utf-8")[: 4 * tokens]
    cut = raw.decode("utf-8", errors="ignore")
    while cut and budget.count(cut) > tokens:
        cut = cut[:-1]
    return cut


def partition_reviews(texts: Sequence[str], budget: TokenBudget | None = None) -> list[list[str]]:
    """Greedy first-fit grouping in input order.

    Each text costs its token estimate plus one separator token. A text too
    large for an empty group is truncated and placed alone.
    """
    budget = budget or TokenBudget()
    limit = budget.max_tokens_per_group
    groups: list[list[str]] = []
    current: list[str] = []
    used = 0
    for text in texts:
        cost = budget.count(text) + SEPARATOR_TOKENS
        if cost > limit:
            logger.warning("review of %d tokens truncated to %d", cost - SEPARATOR_TOKENS,
                           limit - SEPARATOR_TOKENS)
            text = truncate_to_tokens(text, limit - SEPARATOR_TOKENS, budget)
            cost = budget.count(text) + SEPARATOR_TOKENS
        if current and used + cost > limit:
            groups.append(current)
            current, used = [], 0
        current.append(text)
        used += cost
    if current:
        groups.append(current)
    return groups


def build_summary_prompt(texts: Sequence[str]) -> str:
    if not texts:
        raise ValueError("cannot build a summary prompt for zero reviews")
    lines = [defence(t)[0] for t in texts]
    return SUMMARY_TEMPLATE.format(reviews="\n".join(lines))


TEMPLATE_OVERHEAD = estimate_tokens(SUMMARY_TEMPLATE.format(reviews=""))


def summarize_cluster(
    texts: Sequence[str],
    gateway: Gateway,
    budget: TokenBudget | None = None,
    *,
    cluster: int = 0,
    model: str = "gpt-3.5-turbo",
    temperature: float = 0.0,
    max_output_tokens: int = 256,
) -> ClusterSummary:
    """Summarize a cluster into one English sentence.

    If the texts do not fit one group, each group is summarized and the
    sub-summaries take the place of the texts, level by level, until a single
    group remains.
    """
    budget = budget or TokenBudget()
    if not texts:
        raise ValueError("cannot summarize an empty cluster")

    def call(group: list[str]) -> str:
        prompt = build_summary_prompt(group)
        assert budget.count(prompt) <= budget.max_tokens_per_group + TEMPLATE_OVERHEAD, \
            "summary prompt over budget"
        req = ChatRequest(prompt, model=model, temperature=temperature,
                          max_output_tokens=max_output_tokens)
        return gateway.complete(req).text.strip()

    current = list(texts)
    calls = 0
    depth = 0
    while True:
        groups = partition_reviews(current, budget)
        if len(groups) == 1:
            summary = call(groups[0])
            return ClusterSummary(cluster, summary, depth, calls + 1)
        if depth >= MAX_DEPTH:
            raise RecursionCapExceeded(
                f"cluster {cluster}: still {len(groups)} groups after {MAX_DEPTH} levels"
            )
        with ThreadPoolExecutor(max_workers=gateway.max_in_flight) as pool:
            current = list(pool.map(call, groups))
        calls += len(groups)
        depth += 1
