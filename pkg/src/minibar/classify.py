"""Zero-shot review classification through a chat-completion model."""

from __future__ import annotations

import enum
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .langdetect import language_name
from .llm import ChatRequest, Gateway, ProviderError
from .reviews import Review

logger = logging.getLogger(__name__)

CLASSIFY_TEMPLATE = (
    "Classify the following {lang} app review into problem report, feature request "
    "or irrelevant. Be concise.\n```\n{review}\n```"
)
STRICT_SUFFIX = "Answer with only the category name."
MAX_FAILED_FRACTION = 0.10
PROGRESS_EVERY = 100


class Label(str, enum.Enum):
    FEATURE_REQUEST = "feature_request"
    PROBLEM_REPORT = "problem_report"
    IRRELEVANT = "irrelevant"


LABEL_ORDER = (Label.FEATURE_REQUEST, Label.PROBLEM_REPORT, Label.IRRELEVANT)


class ParseFailure(ValueError):
    pass


class BatchFailure(ProviderError):
    """Too many reviews in a batch could not be classified."""


class LabelSet(frozenset):
    """Non-empty label set in which Irrelevant never co-occurs with another label."""

    def __new__(cls, labels: Iterable[Label | str]):
        items = frozenset(Label(x) for x in labels)
        if not items:
            raise ValueError("LabelSet must not be empty")
        if Label.IRRELEVANT in items and len(items) > 1:
            raise ValueError("irrelevant cannot be combined with other labels")
        return super().__new__(cls, items)

    def names(self) -> list[str]:
        return [lab.value for lab in LABEL_ORDER if lab in self]

    def __repr__(self):
        return f"LabelSet({self.names()})"


@dataclass(frozen=True)
class ClassifiedReview:
    review_id: str
    labels: LabelSet
    raw_response: str
    parse_fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.review_id,
            "labels": self.labels.names(),
            "parse_fallback": self.parse_fallback,
            "raw_response": self.raw_response,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> ClassifiedReview:
        return cls(rec["id"], LabelSet(rec["labels"]), rec.get("raw_response", ""),
                   bool(rec.get("parse_fallback", False)))


def defence(text: str) -> tuple[str, bool]:
    """Swap backticks for single quotes when the text would close the fence."""
    if "```" in text:
        return text.replace("`", "'"), True
    return text, False


def build_classification_prompt(review: Review | str, language_name: str) -> str:
    text = review.text if isinstance(review, Review) else review
    text, sanitized = defence(text)
    if sanitized:
        logger.debug("sanitized backtick fence in review text")
    return CLASSIFY_TEMPLATE.format(lang=language_name, review=text)


_SEP = r"[\s_\-]*"
_PATTERNS = {
    Label.FEATURE_REQUEST: re.compile(rf"feature{_SEP}requests?", re.I),
    Label.PROBLEM_REPORT: re.compile(rf"(?:problem|bug){_SEP}reports?", re.I),
    Label.IRRELEVANT: re.compile(r"irrelevant", re.I),
}
# "not a feature request", "neither ... nor problem report"
_NEGATION = re.compile(r"\b(?:not|no|neither|nor|isn't|n't)\s+(?:(?:a|an|really|the)\s+)?$", re.I)


def parse_label_response(response: str) -> LabelSet:
    """Extract the labels named in a model response.

    Mentions directly preceded by a negation are ignored. When a feature
    request or problem report is found, an ``irrelevant`` mention is dropped.
    """
    found = set()
    for label, pattern in _PATTERNS.items():
        for m in pattern.finditer(response):
            if not _NEGATION.search(response[max(0, m.start() - 24):m.start()]):
                found.add(label)
                break
    if not found:
        raise ParseFailure(f"no label found in response: {response[:120]!r}")
    if len(found) > 1:
        found.discard(Label.IRRELEVANT)
    return LabelSet(found)


def classify_review(review: Review, gateway: Gateway, *, model: str = "gpt-3.5-turbo",
                    temperature: float = 0.0, max_output_tokens: int = 64,
                    default_language: str = "en") -> ClassifiedReview:
    lang = language_name(review.language or default_language)
    prompt = build_classification_prompt(review, lang)
    req = ChatRequest(prompt, model=model, temperature=temperature,
                      max_output_tokens=max_output_tokens)
    first = gateway.complete(req).text
    try:
        return ClassifiedReview(review.id, parse_label_response(first), first)
    except ParseFailure:
        pass
    strict = ChatRequest(f"{prompt}\n{STRICT_SUFFIX}", model=model, temperature=temperature,
                         max_output_tokens=max_output_tokens)
    second = gateway.complete(strict).text
    try:
        return ClassifiedReview(review.id, parse_label_response(second), second)
    except ParseFailure:
        logger.warning("review %s: unparseable responses, falling back to irrelevant", review.id)
        return ClassifiedReview(review.id, LabelSet([Label.IRRELEVANT]), second, parse_fallback=True)


@dataclass(frozen=True)
class ClassificationError:
    review_id: str
    message: str


@dataclass
class ClassificationBatch:
    results: list[ClassifiedReview] = field(default_factory=list)
    errors: list[ClassificationError] = field(default_factory=list)


def classify_batch(reviews: Sequence[Review], gateway: Gateway, **kw) -> ClassificationBatch:
    """Classify reviews concurrently; results keep input order.

    Failed reviews are reported in ``errors``; more than 10% failures raises
    :class:`BatchFailure`.
    """
    reviews = list(reviews)
    batch = ClassificationBatch()
    if not reviews:
        return batch

    def work(r: Review):
        try:
            return classify_review(r, gateway, **kw)
        except ProviderError as exc:
            return ClassificationError(r.id, f"{type(exc).__name__}: {exc}")

    with ThreadPoolExecutor(max_workers=gateway.max_in_flight) as pool:
        for i, out in enumerate(pool.map(work, reviews), start=1):
            if isinstance(out, ClassificationError):
                batch.errors.append(out)
            else:
                batch.results.append(out)
            if i % PROGRESS_EVERY == 0:
                logger.info("classified %d/%d reviews", i, len(reviews))

    if len(batch.errors) / len(reviews) > MAX_FAILED_FRACTION:
        raise BatchFailure(
            f"{len(batch.errors)} of {len(reviews)} reviews failed classification; "
            f"first: {batch.errors[0].message}"
        )
    return batch
