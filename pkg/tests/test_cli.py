import json

import pytest
from click.testing import CliRunner

from minibar.cli import cli, main


def invoke(*args):
    return CliRunner().invoke(cli, list(args))


@pytest.fixture
def dirs(tmp_path):
    return ["--out-dir", str(tmp_path / "out"), "--cache-dir", str(tmp_path / "cache")]


def test_run_offline(dirs, fixtures, tmp_path):
    result = invoke(*dirs, "--offline", "run", str(fixtures / "reviews60.jsonl"))
    assert result.exit_code == 0, result.output
    assert (tmp_path / "out" / "report.md").exists()


def test_stages_one_by_one(dirs, fixtures, tmp_path):
    assert invoke(*dirs, "--offline", "ingest", str(fixtures / "reviews60.jsonl")).exit_code == 0
    for stage in ("classify", "cluster", "summarize", "rank"):
        result = invoke(*dirs, "--offline", stage)
        assert result.exit_code == 0, (stage, result.output)
    result = invoke(*dirs, "--offline", "report", "--format", "json")
    assert result.exit_code == 0
    assert (tmp_path / "out" / "report.json").exists()
    assert not (tmp_path / "out" / "report.md").exists()


def test_config_error_exit_1(tmp_path, dirs):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("rank:\n  w_thh: 1\n")
    result = invoke("--config", str(cfg), *dirs, "classify")
    assert result.exit_code == 1 and "rank.w_thh" in result.output


def test_usage_error_exit_code():
    assert main(["--provider", "bogus", "run"]) == 1
    assert main(["no-such-command"]) == 1


def test_stage_failure_exit_2(dirs):
    result = invoke(*dirs, "--offline", "classify")
    assert result.exit_code == 2


def test_provider_failure_exit_3(dirs, fixtures, monkeypatch):
    monkeypatch.delenv("MINIBAR_API_KEY", raising=False)
    assert invoke(*dirs, "ingest", str(fixtures / "reviews60.jsonl")).exit_code == 0
    result = invoke(*dirs, "--provider", "remote", "classify")
    assert result.exit_code == 3 and "MINIBAR_API_KEY" in result.output


def _jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return str(path)


def test_evaluate_classification(tmp_path, dirs):
    rows = [{"id": "a", "labels": ["feature_request"]}, {"id": "b", "labels": ["irrelevant"]}]
    p = _jsonl(tmp_path / "p.jsonl", rows)
    out = tmp_path / "m.json"
    result = invoke(*dirs, "evaluate", p, p, "--mode", "classification", "-o", str(out))
    assert result.exit_code == 0
    assert json.loads(out.read_text())["weighted"]["f1"] == 1.0


def test_evaluate_clustering(tmp_path, dirs):
    truth = [{"id": f"r{i}", "cluster": i // 5} for i in range(10)]
    pred = [{"id": f"r{i}", "category": "problem_report", "cluster": 1 - i // 5}
            for i in range(10)]
    result = invoke(*dirs, "evaluate", _jsonl(tmp_path / "p.jsonl", pred),
                    _jsonl(tmp_path / "t.jsonl", truth), "--mode", "clustering",
                    "--category", "problem_report")
    assert result.exit_code == 0
    metrics = json.loads((tmp_path / "out" / "metrics.clustering.json").read_text())
    assert metrics["nmi"] == 1.0 and metrics["ari"] == 1.0


def test_evaluate_disjoint_ids(tmp_path, dirs):
    a = _jsonl(tmp_path / "a.jsonl", [{"id": "a", "labels": ["irrelevant"]}])
    b = _jsonl(tmp_path / "b.jsonl", [{"id": "b", "labels": ["irrelevant"]}])
    result = invoke(*dirs, "evaluate", a, b, "--mode", "classification")
    assert result.exit_code == 1 and "missing" in result.output
