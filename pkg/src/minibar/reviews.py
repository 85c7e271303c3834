"""Review records, corpus ingestion and text normalization."""

from __future__ import annotations

import csv
import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

MAX_BAD_ROW_FRACTION = 0.10
FIELDS = ("id", "app", "text", "rating", "thumbs_up", "posted_at", "language")

_WS = re.compile(r"\s+")


class EmptyText(ValueError):
    """Raised when a text is empty once normalized."""


class CorpusError(ValueError):
    """Unrecoverable problem with an input file."""


class RowError(ValueError):
    pass


def normalize_text(raw: str) -> str:
    """Trim, collapse whitespace runs and drop control characters.

    Casing and accents are kept untouched.
    """
    kept = "".join(
        ch for ch in raw if ch.isspace() or unicodedata.category(ch) != "Cc"
    )
    text = _WS.sub(" ", kept).strip()
    if not text:
        raise EmptyText("text is empty after normalization")
    return text


@dataclass(frozen=True)
class Review:
    id: str
    app: str
    text: str
    rating: int
    thumbs_up: int = 0
    posted_at: datetime | None = None
    language: str | None = None

    def __post_init__(self):
        if not self.id:
            raise RowError("id must be a non-empty string")
        if not self.text:
            raise RowError("text must be non-empty")
        if isinstance(self.rating, bool) or self.rating not in (1, 2, 3, 4, 5):
            raise RowError(f"rating must be an integer in [1, 5], got {self.rating!r}")
        if isinstance(self.thumbs_up, bool) or not isinstance(self.thumbs_up, int) or self.thumbs_up < 0:
            raise RowError(f"thumbs_up must be a non-negative integer, got {self.thumbs_up!r}")

    def with_language(self, language: str) -> Review:
        return Review(self.id, self.app, self.text, self.rating, self.thumbs_up,
                      self.posted_at, language)

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "app": self.app,
            "text": self.text,
            "rating": self.rating,
            "thumbs_up": self.thumbs_up,
        }
        if self.posted_at is not None:
            out["posted_at"] = self.posted_at.isoformat()
        if self.language is not None:
            out["language"] = self.language
        return out


@dataclass(frozen=True)
class ParseIssue:
    line: int
    id: str | None
    message: str


@dataclass
class Corpus:
    reviews: list[Review]
    source: str = ""
    errors: list[ParseIssue] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for r in self.reviews:
            if r.id in seen:
                raise CorpusError(f"duplicate id {r.id!r}")
            seen.add(r.id)

    def __iter__(self) -> Iterator[Review]:
        return iter(self.reviews)

    def __len__(self) -> int:
        return len(self.reviews)

    def by_id(self) -> dict[str, Review]:
        return {r.id: r for r in self.reviews}


def _parse_int(value, name: str) -> int:
    if isinstance(value, bool):
        raise RowError(f"{name} must be an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str) and re.fullmatch(r"\s*-?\d+\s*", value):
        return int(value)
    raise RowError(f"{name} must be an integer, got {value!r}")


def _parse_timestamp(value) -> datetime | None:
    if value is None or value == "":
        return None
    if not isinstance(value, str):
        raise RowError("posted_at must be an ISO-8601 string")
    s = value.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(s)
    except ValueError as exc:
        raise RowError(f"posted_at is not ISO-8601: {value!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def review_from_record(rec: dict) -> Review:
    if not isinstance(rec, dict):
        raise RowError("row is not an object")
    missing = [k for k in ("id", "app", "text", "rating") if rec.get(k) in (None, "")]
    if missing:
        raise RowError(f"missing field(s): {', '.join(missing)}")
    rid = rec["id"]
    if not isinstance(rid, str):
        rid = str(rid)
    try:
        text = normalize_text(str(rec["text"]))
    except EmptyText as exc:
        raise RowError(str(exc)) from exc
    thumbs = rec.get("thumbs_up")
    language = rec.get("language") or None
    if language is not None:
        language = str(language).strip().lower() or None
    return Review(
        id=rid,
        app=str(rec["app"]),
        text=text,
        rating=_parse_int(rec["rating"], "rating"),
        thumbs_up=0 if thumbs in (None, "") else _parse_int(thumbs, "thumbs_up"),
        posted_at=_parse_timestamp(rec.get("posted_at")),
        language=language,
    )


def _jsonl_rows(path: Path) -> Iterator[tuple[int, dict | Exception]]:
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, exc


def _csv_rows(path: Path) -> Iterator[tuple[int, dict | Exception]]:
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return
        missing = {"id", "app", "text", "rating"} - set(reader.fieldnames)
        if missing:
            raise CorpusError(f"csv header lacks column(s): {', '.join(sorted(missing))}")
        for row in reader:
            yield reader.line_num, row


def parse_corpus(path: str | Path, format: str | None = None) -> Corpus:
    """Read a jsonl or csv review export.

    Bad rows are skipped and reported in ``Corpus.errors``; more than 10% bad
    rows, or any duplicate id, raises :class:`CorpusError`.
    """
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"input file not found: {path}")
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format == "jsonl":
        rows = _jsonl_rows(path)
    elif format == "csv":
        rows = _csv_rows(path)
    else:
        raise CorpusError(f"unknown input format {format!r}")

    reviews: list[Review] = []
    errors: list[ParseIssue] = []
    seen: set[str] = set()
    total = 0
    for lineno, rec in rows:
        total += 1
        if isinstance(rec, Exception):
            errors.append(ParseIssue(lineno, None, f"invalid json: {rec}"))
            continue
        try:
            review = review_from_record(rec)
        except RowError as exc:
            rid = rec.get("id") if isinstance(rec, dict) else None
            errors.append(ParseIssue(lineno, None if rid is None else str(rid), str(exc)))
            continue
        if review.id in seen:
            raise CorpusError(f"duplicate id {review.id!r} at line {lineno}")
        seen.add(review.id)
        reviews.append(review)

    for issue in errors:
        logger.warning("%s:%d skipped row: %s", path, issue.line, issue.message)
    if total and len(errors) / total > MAX_BAD_ROW_FRACTION:
        raise CorpusError(
            f"{len(errors)} of {total} rows malformed in {path} "
            f"(limit {MAX_BAD_ROW_FRACTION:.0%})"
        )
    return Corpus(reviews, str(path), errors)


def write_jsonl(reviews: Iterable[Review], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in reviews:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def write_csv(reviews: Iterable[Review], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(FIELDS))
        writer.writeheader()
        for r in reviews:
            writer.writerow(r.to_dict())
