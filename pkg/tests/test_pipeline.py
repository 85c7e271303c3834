import json

import pytest

from minibar.classify import Label
from minibar.config import config_from_mapping
from minibar.embed import OfflineEmbedder
from minibar.llm import MockProvider, mock_provider
from minibar.offline import heuristic_label, load_script, offline_provider
from minibar.pipeline import (ASSIGNMENTS_FILE, CLASSIFICATIONS_FILE, Pipeline, StageError,
                              check_conservation)
from minibar.report import render_markdown
from minibar.summarize import ClusterSummary
from minibar.rank import ClusterStats, RankedCluster

TABLE5_SUMMARY = ("Users are disappointed that the app requires an internet connection to "
                  "function and wish it could work offline like it used to.")


def make(tmp_path, provider=None, **cfg):
    config = config_from_mapping({"output_dir": str(tmp_path / "out"),
                                  "cache_dir": str(tmp_path / "cache"), **cfg})
    return Pipeline(config, chat_provider=provider or offline_provider(),
                    embedder=OfflineEmbedder())


def write_rows(path, rows):
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows))
    return path


def test_fixture_run_has_clusters_in_both_categories(tmp_path, fixtures):
    p = make(tmp_path)
    record = p.run(str(fixtures / "reviews60.jsonl"))
    report = json.loads((p.out / "report.json").read_text())
    for cat in ("feature_request", "problem_report"):
        clusters = report["categories"][cat]["clusters"]
        assert clusters, cat
        scores = [c["score"] for c in clusters]
        assert scores == sorted(scores, reverse=True)
        assert [c["rank"] for c in clusters] == list(range(1, len(clusters) + 1))
    cons = record.counts["conservation"]
    assert cons["reviews"] == 60
    assert cons["irrelevant"] + cons["feature_request"] + cons["problem_report"] \
        - cons["in_both"] == 60


def test_report_is_byte_identical_across_runs(tmp_path, fixtures):
    outs = []
    for name in ("a", "b"):
        p = make(tmp_path / name)
        p.run(str(fixtures / "reviews60.jsonl"))
        outs.append(((p.out / "report.json").read_bytes(), (p.out / "report.md").read_bytes()))
    assert outs[0] == outs[1]


def test_stage_isolation(tmp_path, fixtures):
    p = make(tmp_path)
    p.run(str(fixtures / "reviews60.jsonl"))
    before = {f: (p.out / f).read_bytes() for f in
              (CLASSIFICATIONS_FILE, ASSIGNMENTS_FILE, "report.json", "report.md")}
    for f in (CLASSIFICATIONS_FILE, ASSIGNMENTS_FILE):
        (p.out / f).unlink()
    provider = MockProvider({}, id="mock-offline")  # every call must now hit the cache
    q = make(tmp_path, provider=provider)
    q.classify()
    q.cluster()
    q.summarize()
    q.report()
    assert provider.calls == []
    assert {f: (q.out / f).read_bytes() for f in before} == before


def test_both_labels_fan_out(tmp_path):
    rows = [{"id": "x", "app": "a", "text": "crashes, please add offline mode", "rating": 1}]
    p = make(tmp_path, provider=mock_provider({}, default="Feature request and problem report"))
    corpus = p.ingest(str(write_rows(tmp_path / "in.jsonl", rows)))
    classified = p.classify(corpus)
    asg = p.cluster(corpus, classified)
    assert asg["feature_request"].ids == ("x",) and asg["problem_report"].ids == ("x",)
    assert check_conservation(corpus, classified, asg)["in_both"] == 1


def test_only_irrelevant_reviews(tmp_path):
    rows = [{"id": f"r{i}", "app": "a", "text": f"Great app {i}", "rating": 5} for i in range(8)]

    class NoEmbedding(OfflineEmbedder):
        def embed(self, texts):
            raise AssertionError("embedding must not run")

    config = config_from_mapping({"output_dir": str(tmp_path / "out"),
                                  "cache_dir": str(tmp_path / "cache")})
    p = Pipeline(config, chat_provider=mock_provider({}, default="Irrelevant"),
                 embedder=NoEmbedding())
    p.run(str(write_rows(tmp_path / "in.jsonl", rows)))
    md = (p.out / "report.md").read_text()
    assert md.count("no clusters found") == 2
    assert not list(p.out.glob("*.npy"))


def test_table5_summary_in_report(tmp_path, fixtures):
    rows = [json.loads(line) for line in
            (fixtures / "reviews60.jsonl").read_text(encoding="utf-8").splitlines()]
    starts = ("Dommage que la connexion 4g", "Please for god sake", "Is not work offline",
              "It used to work offline", "Useless without internet")
    subset = [r for r in rows if r["text"].startswith(starts)]
    provider = mock_provider(load_script(fixtures / "table5_script.yaml"))
    p = make(tmp_path, provider=provider)
    p.run(str(write_rows(tmp_path / "in.jsonl", subset)))
    md = (p.out / "report.md").read_text()
    assert f"- summary: {TABLE5_SUMMARY}" in md


def test_markdown_orders_sections_by_rank():
    doc = {"counts": {"reviews": 2, "classified": 2, "labels": {}},
           "categories": {"problem_report": {"reviews": 10, "noise": 0, "clusters": [
               {"rank": 1, "cluster": 1, "score": 12.0, "size": 5, "mean_rating": 1.0,
                "total_thumbs": 0, "summary": "first", "samples": []},
               {"rank": 2, "cluster": 0, "score": 2.5, "size": 5, "mean_rating": 2.0,
                "total_thumbs": 0, "summary": "second", "samples": ["x"]}]}}}
    md = render_markdown(doc)
    assert md.index("### 1. Cluster 1") < md.index("### 2. Cluster 0")
    assert md.index("first") < md.index("second")


def test_stage_failure_is_wrapped(tmp_path):
    p = make(tmp_path)
    with pytest.raises(StageError) as info:
        p.classify()
    assert info.value.stage == "classify"


def test_missing_input_path(tmp_path):
    with pytest.raises(StageError):
        make(tmp_path).ingest()


def test_run_record(tmp_path, fixtures):
    p = make(tmp_path)
    p.run(str(fixtures / "reviews60.jsonl"))
    record = json.loads((p.out / "run_record.json").read_text())
    assert set(record["timings"]) == {"ingest", "classify", "cluster", "summarize", "rank",
                                      "report"}
    assert record["counts"]["ingest"]["languages"] == {"en": 33, "fr": 27}
    assert record["config"]["reducer"]["n_neighbors"] == 100


@pytest.mark.parametrize("text,label", [
    ("The app crashes on login", "Problem report"),
    ("Please add a dark mode", "Feature request"),
    ("Great app", "Irrelevant"),
    ("Plantage au démarrage, merci d'ajouter un correctif", "Feature request and problem report"),
])
def test_offline_heuristic(text, label):
    assert heuristic_label(text) == label
