"""Static JSON and Markdown reports of ranked clusters."""

from __future__ import annotations

import json
from collections import Counter
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Sequence

from . import __version__

if TYPE_CHECKING:
    from .classify import ClassifiedReview
    from .cluster import ClusterAssignment
    from .rank import RankedCluster
    from .reviews import Corpus

SAMPLES_PER_CLUSTER = 5
CATEGORY_TITLES = {"feature_request": "Feature requests", "problem_report": "Problem reports"}


def build_report(ranked: Mapping[str, Sequence[RankedCluster]],
                 assignments: Mapping[str, ClusterAssignment],
                 corpus: Corpus,
                 classified: Sequence[ClassifiedReview]) -> dict:
    by_id = corpus.by_id()
    labels = Counter(lab for c in classified for lab in c.labels.names())
    doc = {
        "version": __version__,
        "counts": {
            "reviews": len(corpus),
            "classified": len(classified),
            "labels": dict(sorted(labels.items())),
        },
        "categories": {},
    }
    for cat, clusters in ranked.items():
        a = assignments[cat]
        members = a.members()
        rows = []
        for r in clusters:
            ids = members[r.stats.cluster]
            rows.append({
                "rank": r.rank,
                "cluster": r.stats.cluster,
                "score": r.score,
                "size": r.stats.n_reviews,
                "mean_rating": r.stats.mean_rating,
                "total_thumbs": r.stats.total_thumbs,
                "summary": r.summary.summary if r.summary else None,
                "summary_depth": r.summary.depth if r.summary else None,
                "samples": [by_id[i].text for i in ids[:SAMPLES_PER_CLUSTER]],
                "members": list(ids),
            })
        doc["categories"][cat] = {
            "reviews": len(a.ids),
            "noise": a.n_noise,
            "clusters": rows,
        }
    return doc


def render_markdown(doc: dict) -> str:
    lines = ["# App review mining report", ""]
    counts = doc["counts"]
    lines.append(f"Reviews: {counts['reviews']} (classified: {counts['classified']})")
    for lab, n in counts["labels"].items():
        lines.append(f"- {lab}: {n}")
    lines.append("")
    for cat, section in doc["categories"].items():
        lines.append(f"## {CATEGORY_TITLES.get(cat, cat)}")
        lines.append("")
        lines.append(f"{section['reviews']} reviews, {len(section['clusters'])} clusters, "
                     f"{section['noise']} unclustered")
        lines.append("")
        if not section["clusters"]:
            lines.append("no clusters found")
            lines.append("")
            continue
        for c in section["clusters"]:
            lines.append(f"### {c['rank']}. Cluster {c['cluster']} (score {c['score']:.3f})")
            lines.append("")
            lines.append(f"- size: {c['size']}")
            lines.append(f"- mean rating: {c['mean_rating']:.2f}")
            lines.append(f"- thumbs up: {c['total_thumbs']}")
            lines.append(f"- summary: {c['summary'] or '(none)'}")
            lines.append("")
            lines.append("Sample reviews:")
            lines.append("")
            for text in c["samples"]:
                lines.append(f"> {text}")
                lines.append(">")
            if c["samples"]:
                lines.pop()
            lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def write_reports(out_dir: Path, ranked, assignments, corpus, classified,
                  formats: Sequence[str] = ("json", "markdown")) -> list[Path]:
    doc = build_report(ranked, assignments, corpus, classified)
    written = []
    for fmt in formats:
        if fmt == "json":
            path = out_dir / "report.json"
            path.write_text(json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
                            encoding="utf-8")
        elif fmt in ("markdown", "md"):
            path = out_dir / "report.md"
            path.write_text(render_markdown(doc), encoding="utf-8")
        else:
            raise ValueError(f"unknown report format {fmt!r}")
        written.append(path)
    return written
