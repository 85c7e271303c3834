"""Character n-gram rank-profile language identification.

Each language is a ranked list of its most frequent 1- to 3-grams. A text is
assigned the language whose ranking is closest to the text's own ranking under
the out-of-place measure.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

PROFILE_SIZE = 300
MIN_SAMPLE_CHARS = 1000
MIN_TEXT_CHARS = 3
NGRAM_ORDERS = (1, 2, 3)

LANGUAGE_NAMES = {
    "en": "English",
    "fr": "French",
    "de": "German",
    "es": "Spanish",
    "it": "Italian",
    "pt": "Portuguese",
    "nl": "Dutch",
}

_WORD = re.compile(r"[^\W\d_]+")


class UnreliableDetection(ValueError):
    """Text too short to identify its language."""


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class LanguageProfile:
    language: str
    ngram_ranks: Mapping[str, int]

    def __post_init__(self):
        ranks = sorted(self.ngram_ranks.values())
        if len(ranks) > PROFILE_SIZE or ranks != list(range(1, len(ranks) + 1)):
            raise ProfileError(f"{self.language}: ranks must be 1..{len(ranks)} without gaps")

    def to_text(self) -> str:
        ordered = sorted(self.ngram_ranks.items(), key=lambda kv: kv[1])
        return "".join(f"{g}\t{r}\n" for g, r in ordered)

    @classmethod
    def from_text(cls, language: str, text: str) -> LanguageProfile:
        ranks = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            gram, sep, rank = line.rpartition("\t")
            if not sep or not gram:
                raise ProfileError(f"{language} profile line {lineno}: expected '<ngram>\\t<rank>'")
            ranks[gram] = int(rank)
        return cls(language, ranks)


def language_name(code: str) -> str:
    return LANGUAGE_NAMES.get(code, code)


def ngram_counts(text: str) -> Counter:
    counts: Counter = Counter()
    for word in _WORD.findall(text.lower()):
        padded = f"_{word}_"
        for n in NGRAM_ORDERS:
            for i in range(len(padded) - n + 1):
                gram = padded[i:i + n]
                if gram != "_":
                    counts[gram] += 1
    return counts


def _top_ranks(counts: Counter, size: int = PROFILE_SIZE) -> dict[str, int]:
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:size]
    return {g: i for i, (g, _) in enumerate(ordered, start=1)}


def build_profile(samples: Sequence[str], language: str) -> LanguageProfile:
    if not samples or sum(len(s) for s in samples) < MIN_SAMPLE_CHARS:
        raise ProfileError(
            f"need at least {MIN_SAMPLE_CHARS} characters of sample text for {language!r}"
        )
    counts: Counter = Counter()
    for s in samples:
        counts.update(ngram_counts(s))
    if not counts:
        raise ProfileError(f"sample text for {language!r} contains no letters")
    return LanguageProfile(language, _top_ranks(counts))


def out_of_place(text_ranks: Mapping[str, int], profile: LanguageProfile) -> int:
    miss = PROFILE_SIZE
    ranks = profile.ngram_ranks
    return sum(abs(r - ranks[g]) if g in ranks else miss for g, r in text_ranks.items())


def detect_language(text: str, profiles: Sequence[LanguageProfile]) -> str:
    if len(profiles) < 2:
        raise ProfileError("at least two language profiles are required")
    if len(text.strip()) < MIN_TEXT_CHARS:
        raise UnreliableDetection(f"text too short to detect language: {text!r}")
    text_ranks = _top_ranks(ngram_counts(text))
    if not text_ranks:
        raise UnreliableDetection(f"no letters in text: {text!r}")
    # min() keeps the first profile on ties, so the outcome is order-stable.
    best = min(profiles, key=lambda p: out_of_place(text_ranks, p))
    return best.language


def load_profile(path: str | Path, language: str | None = None) -> LanguageProfile:
    path = Path(path)
    return LanguageProfile.from_text(language or path.stem, path.read_text(encoding="utf-8"))


def bundled_profiles() -> list[LanguageProfile]:
    root = resources.files("minibar") / "data" / "lang"
    out = []
    for code in ("en", "fr"):
        out.append(LanguageProfile.from_text(code, (root / f"{code}.profile").read_text(encoding="utf-8")))
    return out


def bundled_training_text(code: str) -> str:
    return (resources.files("minibar") / "data" / "lang" / f"{code}.txt").read_text(encoding="utf-8")


class LanguageDetector:
    """Detector with a fallback language for texts that are too short."""

    def __init__(self, profiles: Iterable[LanguageProfile] | None = None, default: str = "en"):
        self.profiles = list(profiles) if profiles is not None else bundled_profiles()
        self.default = default
        self.known = {p.language for p in self.profiles}

    def detect(self, text: str) -> tuple[str, bool]:
        """Return ``(code, reliable)``; unreliable results use the default."""
        try:
            return detect_language(text, self.profiles), True
        except UnreliableDetection:
            return self.default, False


def main(argv: Sequence[str] | None = None) -> None:
    import argparse

    ap = argparse.ArgumentParser(description="Build a language profile from sample text files.")
    ap.add_argument("language")
    ap.add_argument("samples", nargs="+", type=Path)
    ap.add_argument("-o", "--output", type=Path, required=True)
    args = ap.parse_args(argv)
    texts = [p.read_text(encoding="utf-8") for p in args.samples]
    args.output.write_text(build_profile(texts, args.language).to_text(), encoding="utf-8")


if __name__ == "__main__":
    main()
