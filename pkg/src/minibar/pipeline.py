"""End-to-end orchestration: ingest, classify, cluster, summarize, rank, report.

Every stage writes its artifact to the output directory and the next stage
reads it back from there, so stages can be re-run individually.
"""

from __future__ import annotations

import json
import logging
import time
import warnings
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .classify import ClassifiedReview, Label, classify_batch
from .cluster import NOISE, ClusterAssignment, HdbscanParams, hdbscan
from .config import PipelineConfig
from .embed import Embedder, OfflineEmbedder, RemoteEmbedder, embed_reviews
from .langdetect import LanguageDetector
from .llm import Gateway, Provider, RemoteProvider
from .offline import load_script, offline_provider
from .rank import ClusterStats, RankedCluster, rank_clusters
from .reduce import ReducerParams, reduce
from .report import write_reports
from .reviews import Corpus, Review, parse_corpus, write_jsonl
from .summarize import ClusterSummary, summarize_cluster

logger = logging.getLogger(__name__)

CATEGORIES = (Label.FEATURE_REQUEST.value, Label.PROBLEM_REPORT.value)

CORPUS_FILE = "corpus.jsonl"
CLASSIFICATIONS_FILE = "classifications.jsonl"
ASSIGNMENTS_FILE = "assignments.jsonl"
SUMMARIES_FILE = "summaries.jsonl"
RANKED_FILE = "ranked.json"
RECORD_FILE = "run_record.json"


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineRunRecord:
    version: str = __version__
    config: dict = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    counts: dict[str, dict] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"version": self.version, "config": self.config, "timings": self.timings,
                "counts": self.counts, "warnings": self.warnings}


def _write_jsonl(rows: Sequence[dict], path: Path) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    with path.open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def cluster_reviews(reviews: Sequence[Review], embedder: Embedder, method: str = "umap",
                    reducer: ReducerParams | None = None,
                    params: HdbscanParams | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Embed, reduce and cluster one category. Returns (embeddings, reduced, labels)."""
    params = params or HdbscanParams()
    matrix = embed_reviews(reviews, embedder)
    X = matrix.vectors
    if len(reviews) < params.min_cluster_size or len(reviews) < 3:
        return X, X, np.full(len(reviews), NOISE, dtype=np.int64)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        Y = reduce(X, method, reducer)
        labels = hdbscan(Y, params)
    return X, Y, labels


class Pipeline:
    def __init__(self, config: PipelineConfig, *, chat_provider: Provider | None = None,
                 embedder: Embedder | None = None):
        self.config = config
        self.out = Path(config.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self._chat_provider = chat_provider
        self._embedder = embedder
        self._gateway: Gateway | None = None
        self.record = PipelineRunRecord(config=config.snapshot())

    # providers

    @property
    def gateway(self) -> Gateway:
        if self._gateway is None:
            provider = self._chat_provider or self._make_chat_provider()
            self._gateway = Gateway(provider, self.config.cache_dir,
                                    max_in_flight=self.config.chat.max_in_flight)
        return self._gateway

    def _make_chat_provider(self) -> Provider:
        chat = self.config.chat
        if chat.provider == "remote":
            return RemoteProvider(chat.url, timeout=chat.timeout)
        script = load_script(chat.mock_script) if chat.mock_script else None
        return offline_provider(script)

    @property
    def embedder(self) -> Embedder:
        if self._embedder is None:
            emb = self.config.embedding
            if emb.provider == "remote":
                if not emb.url:
                    raise ValueError("embedding.url is required for the remote embedding provider")
                self._embedder = RemoteEmbedder(emb.url, emb.model, cache_dir=self.config.cache_dir,
                                                batch_size=emb.batch_size,
                                                max_in_flight=self.config.chat.max_in_flight)
            else:
                self._embedder = OfflineEmbedder()
        return self._embedder

    def _chat_kw(self) -> dict:
        chat = self.config.chat
        return {"model": chat.model, "temperature": chat.temperature,
                "max_output_tokens": chat.max_output_tokens}

    def _stage(self, name: str, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        self.record.timings[name] = round(time.perf_counter() - t0, 4)
        return result

    # artifacts

    def load_corpus(self) -> Corpus:
        return parse_corpus(self.out / CORPUS_FILE, "jsonl")

    def load_classifications(self) -> list[ClassifiedReview]:
        return [ClassifiedReview.from_dict(r) for r in _read_jsonl(self.out / CLASSIFICATIONS_FILE)]

    def load_assignments(self) -> dict[str, ClusterAssignment]:
        rows = _read_jsonl(self.out / ASSIGNMENTS_FILE)
        return {c: ClusterAssignment.from_records(c, rows) for c in CATEGORIES}

    def load_summaries(self) -> dict[str, dict[int, ClusterSummary]]:
        out: dict[str, dict[int, ClusterSummary]] = {c: {} for c in CATEGORIES}
        for r in _read_jsonl(self.out / SUMMARIES_FILE):
            out[r["category"]][r["cluster"]] = ClusterSummary(
                r["cluster"], r["summary"], r["depth"], r["n_llm_calls"])
        return out

    # stages

    def ingest(self, path: str | None = None, format: str | None = None) -> Corpus:
        path = path or self.config.input_path
        if not path:
            raise StageError("ingest", ValueError("no input path configured"))

        def go():
            corpus = parse_corpus(path, format or self.config.input_format)
            detector = LanguageDetector(default=self.config.language_default)
            reviews, unreliable = [], 0
            for r in corpus:
                if r.language is None:
                    lang, ok = detector.detect(r.text)
                    unreliable += not ok
                    r = r.with_language(lang)
                reviews.append(r)
            langs = Counter(r.language for r in reviews)
            other = sum(v for k, v in langs.items() if k not in ("en", "fr"))
            if other:
                self.record.warnings.append(f"{other} review(s) in languages other than en/fr")
            write_jsonl(reviews, self.out / CORPUS_FILE)
            self.record.counts["ingest"] = {
                "reviews": len(reviews), "rejected_rows": len(corpus.errors),
                "languages": dict(sorted(langs.items())), "unreliable_language": unreliable,
                "other_language": other,
            }
            return Corpus(reviews, corpus.source, corpus.errors)

        return self._stage("ingest", go)

    def classify(self, corpus: Corpus | None = None) -> list[ClassifiedReview]:
        def go():
            c = corpus or self.load_corpus()
            gw = self.gateway
            before = (gw.stats.provider_calls, gw.stats.cache_hits)
            batch = classify_batch(c.reviews, gw, default_language=self.config.language_default,
                                   **self._chat_kw())
            _write_jsonl([r.to_dict() for r in batch.results], self.out / CLASSIFICATIONS_FILE)
            labels = Counter(lab for r in batch.results for lab in r.labels.names())
            self.record.counts["classify"] = {
                "reviews_in": len(c), "classified": len(batch.results),
                "failed": [e.review_id for e in batch.errors],
                "labels": dict(sorted(labels.items())),
                "both_feature_and_problem": sum(
                    1 for r in batch.results
                    if {Label.FEATURE_REQUEST, Label.PROBLEM_REPORT} <= r.labels),
                "parse_fallbacks": sum(r.parse_fallback for r in batch.results),
                "llm_calls": gw.stats.provider_calls - before[0],
                "cache_hits": gw.stats.cache_hits - before[1],
            }
            return batch.results

        return self._stage("classify", go)

    def cluster(self, corpus: Corpus | None = None,
                classified: Sequence[ClassifiedReview] | None = None) -> dict[str, ClusterAssignment]:
        def go():
            c = corpus or self.load_corpus()
            cls = classified if classified is not None else self.load_classifications()
            by_id = c.by_id()
            streams = {cat: [by_id[r.review_id] for r in cls if Label(cat) in r.labels]
                       for cat in CATEGORIES}

            def run_one(cat):
                reviews = streams[cat]
                if not reviews:
                    return cat, ClusterAssignment(cat, (), ())
                X, Y, labels = cluster_reviews(reviews, self.embedder, self.config.reducer_method,
                                               self.config.reducer, self.config.hdbscan)
                np.save(self.out / f"{cat}.embeddings.npy", X)
                np.save(self.out / f"{cat}.reduced.npy", Y)
                return cat, ClusterAssignment(cat, tuple(r.id for r in reviews),
                                              tuple(int(x) for x in labels))

            result = dict(run_one(cat) for cat in CATEGORIES)
            for cat, a in result.items():
                if list(a.ids) != [r.id for r in streams[cat]]:
                    raise RuntimeError(f"{cat}: embedding rows out of step with review ids")
            _write_jsonl([row for cat in CATEGORIES for row in result[cat].records()],
                         self.out / ASSIGNMENTS_FILE)
            self.record.counts["cluster"] = {
                cat: {"reviews": len(a.ids), "clusters": a.n_clusters, "noise": a.n_noise}
                for cat, a in result.items()
            }
            return result

        return self._stage("cluster", go)

    def summarize(self, corpus: Corpus | None = None,
                  assignments: dict[str, ClusterAssignment] | None = None
                  ) -> dict[str, dict[int, ClusterSummary]]:
        def go():
            c = corpus or self.load_corpus()
            asg = assignments or self.load_assignments()
            by_id = c.by_id()
            gw = self.gateway
            before = (gw.stats.provider_calls, gw.stats.cache_hits)
            jobs = [(cat, k, [by_id[i].text for i in ids])
                    for cat in CATEGORIES for k, ids in asg[cat].members().items()]

            def work(job):
                cat, k, texts = job
                return cat, summarize_cluster(texts, gw, self.config.budget, cluster=k,
                                              **self._chat_kw())

            out: dict[str, dict[int, ClusterSummary]] = {cat: {} for cat in CATEGORIES}
            with ThreadPoolExecutor(max_workers=gw.max_in_flight) as pool:
                for cat, s in pool.map(work, jobs):
                    out[cat][s.cluster] = s
            _write_jsonl([{"category": cat, "cluster": s.cluster, "summary": s.summary,
                           "depth": s.depth, "n_llm_calls": s.n_llm_calls}
                          for cat in CATEGORIES for s in out[cat].values()],
                         self.out / SUMMARIES_FILE)
            self.record.counts["summarize"] = {
                "clusters": len(jobs),
                "llm_calls": gw.stats.provider_calls - before[0],
                "cache_hits": gw.stats.cache_hits - before[1],
            }
            return out

        return self._stage("summarize", go)

    def rank(self, corpus: Corpus | None = None,
             assignments: dict[str, ClusterAssignment] | None = None,
             summaries: dict[str, dict[int, ClusterSummary]] | None = None
             ) -> dict[str, list[RankedCluster]]:
        def go():
            c = corpus or self.load_corpus()
            asg = assignments or self.load_assignments()
            summ = summaries or self.load_summaries()
            by_id = c.by_id()
            ranked = {}
            for cat in CATEGORIES:
                items = [(ClusterStats.of(k, [by_id[i] for i in ids]), summ[cat].get(k))
                         for k, ids in asg[cat].members().items()]
                ranked[cat] = rank_clusters(items, self.config.weights)
            _write_json({cat: [_ranked_dict(r) for r in ranked[cat]] for cat in CATEGORIES},
                        self.out / RANKED_FILE)
            self.record.counts["rank"] = {cat: len(v) for cat, v in ranked.items()}
            return ranked

        return self._stage("rank", go)

    def report(self, corpus: Corpus | None = None,
               classified: Sequence[ClassifiedReview] | None = None,
               assignments: dict[str, ClusterAssignment] | None = None,
               ranked: dict[str, list[RankedCluster]] | None = None,
               formats: Sequence[str] = ("json", "markdown")) -> list[Path]:
        def go():
            c = corpus or self.load_corpus()
            cls = classified if classified is not None else self.load_classifications()
            asg = assignments or self.load_assignments()
            rk = ranked or self.rank(c, asg)
            return write_reports(self.out, rk, asg, c, cls, formats)

        return self._stage("report", go)

    def run(self, path: str | None = None) -> PipelineRunRecord:
        corpus = self.ingest(path)
        classified = self.classify(corpus)
        assignments = self.cluster(corpus, classified)
        summaries = self.summarize(corpus, assignments)
        ranked = self.rank(corpus, assignments, summaries)
        self.report(corpus, classified, assignments, ranked)
        self.record.counts["conservation"] = check_conservation(corpus, classified, assignments)
        self.write_record()
        return self.record

    def write_record(self) -> None:
        if self._gateway is not None:
            self.record.counts["llm"] = {
                "requests": self._gateway.stats.requests,
                "provider_calls": self._gateway.stats.provider_calls,
                "cache_hits": self._gateway.stats.cache_hits,
                "retries": self._gateway.stats.retries,
            }
        _write_json(self.record.to_dict(), self.out / RECORD_FILE)


def _ranked_dict(r: RankedCluster) -> dict:
    return {
        "rank": r.rank,
        "cluster": r.stats.cluster,
        "score": r.score,
        "n_reviews": r.stats.n_reviews,
        "total_thumbs": r.stats.total_thumbs,
        "mean_rating": r.stats.mean_rating,
        "summary": r.summary.summary if r.summary else None,
    }


def check_conservation(corpus: Corpus, classified: Sequence[ClassifiedReview],
                       assignments: dict[str, ClusterAssignment]) -> dict:
    """Every review is irrelevant, unclassified, or in each category stream it was labeled with."""
    ids = [r.id for r in corpus]
    labels = {c.review_id: c.labels for c in classified}
    irrelevant = {i for i, l in labels.items() if Label.IRRELEVANT in l}
    unclassified = set(ids) - set(labels)
    for cat in CATEGORIES:
        expected = [i for i in ids if i in labels and Label(cat) in labels[i]]
        if list(assignments[cat].ids) != expected:
            raise AssertionError(f"{cat}: assignment ids differ from labeled reviews")
    in_streams = set().union(*(set(a.ids) for a in assignments.values()))
    if irrelevant & in_streams:
        raise AssertionError("irrelevant reviews reached clustering")
    covered = irrelevant | unclassified | in_streams
    if covered != set(ids):
        raise AssertionError("some reviews are unaccounted for")
    return {
        "reviews": len(ids),
        "irrelevant": len(irrelevant),
        "unclassified": len(unclassified),
        **{cat: len(assignments[cat].ids) for cat in CATEGORIES},
        "in_both": len(set(assignments[CATEGORIES[0]].ids) & set(assignments[CATEGORIES[1]].ids)),
    }
