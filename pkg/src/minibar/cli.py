"""Command line entry point: ``minibar [global options] <command>``.

Exit codes: 0 success, 1 usage or configuration error, 2 stage failure,
3 provider failure.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .classify import LabelSet
from .config import ConfigError, load_config
from .embed import OfflineEmbedder
from .evaluate import EvaluationError, PartitionPair, classification_report, clustering_report
from .llm import ProviderError
from .offline import offline_provider
from .pipeline import CATEGORIES, Pipeline, StageError

EXIT_OK, EXIT_USAGE, EXIT_STAGE, EXIT_PROVIDER = 0, 1, 2, 3


def _exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, ProviderError):
        return EXIT_PROVIDER
    if isinstance(cause, ConfigError):
        return EXIT_USAGE
    return EXIT_STAGE


def _fail(exc: BaseException) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(_exit_code(exc))


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="YAML or JSON configuration file.")
@click.option("--cache-dir", default=None, help="Directory for cached model responses.")
@click.option("--out-dir", default=None, help="Directory for artifacts and reports.")
@click.option("--seed", type=int, default=None, help="Seed for the reducer.")
@click.option("--provider", type=click.Choice(["mock", "remote"]), default=None,
              help="Chat provider.")
@click.option("--offline", is_flag=True, help="Use the mock chat provider and the offline embedder.")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
@click.pass_context
def cli(ctx, config_path, cache_dir, out_dir, seed, provider, offline, verbose):
    """Mine app reviews: classify, cluster, summarize and rank."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides: dict = {}
    if cache_dir is not None:
        overrides["cache_dir"] = cache_dir
    if out_dir is not None:
        overrides["output_dir"] = out_dir
    if seed is not None:
        overrides["seed"] = seed
        overrides["reducer.seed"] = seed
    if provider is not None:
        overrides["chat.provider"] = provider
    if offline:
        overrides["chat.provider"] = "mock"
        overrides["embedding.provider"] = "offline"
    ctx.obj = {"config_path": config_path, "overrides": overrides, "offline": offline}


def _pipeline(ctx) -> Pipeline:
    obj = ctx.obj
    try:
        config = load_config(obj["config_path"], obj["overrides"])
    except ConfigError as exc:
        _fail(exc)
    if obj["offline"]:
        return Pipeline(config, chat_provider=None if config.chat.mock_script else offline_provider(),
                        embedder=OfflineEmbedder())
    return Pipeline(config)


def _run_stage(fn):
    try:
        return fn()
    except (StageError, ProviderError, ConfigError) as exc:
        _fail(exc)


@cli.command()
@click.argument("path", required=False)
@click.option("--format", "fmt", type=click.Choice(["jsonl", "csv"]), default=None)
@click.pass_context
def ingest(ctx, path, fmt):
    """Parse the corpus and detect review languages."""
    p = _pipeline(ctx)
    corpus = _run_stage(lambda: p.ingest(path, fmt))
    click.echo(f"ingested {len(corpus)} reviews ({len(corpus.errors)} rejected rows)")


@cli.command()
@click.pass_context
def classify(ctx):
    """Label every ingested review."""
    p = _pipeline(ctx)
    results = _run_stage(p.classify)
    p.write_record()
    click.echo(f"classified {len(results)} reviews")


@cli.command()
@click.pass_context
def cluster(ctx):
    """Cluster feature requests and problem reports separately."""
    p = _pipeline(ctx)
    result = _run_stage(p.cluster)
    for cat in CATEGORIES:
        click.echo(f"{cat}: {result[cat].n_clusters} clusters, {result[cat].n_noise} noise")


@cli.command()
@click.pass_context
def summarize(ctx):
    """Summarize every cluster in one sentence."""
    p = _pipeline(ctx)
    result = _run_stage(p.summarize)
    p.write_record()
    click.echo(f"summarized {sum(len(v) for v in result.values())} clusters")


@cli.command()
@click.pass_context
def rank(ctx):
    """Rank clusters by score."""
    p = _pipeline(ctx)
    result = _run_stage(p.rank)
    for cat in CATEGORIES:
        click.echo(f"{cat}: {len(result[cat])} ranked clusters")


@cli.command()
@click.option("--format", "formats", type=click.Choice(["json", "markdown"]), multiple=True,
              help="Report format; repeat for several (default: both).")
@click.pass_context
def report(ctx, formats):
    """Write report.json and report.md from the stage artifacts."""
    p = _pipeline(ctx)
    paths = _run_stage(lambda: p.report(formats=formats or ("json", "markdown")))
    for path in paths:
        click.echo(str(path))


@cli.command()
@click.argument("path", required=False)
@click.pass_context
def run(ctx, path):
    """Run every stage end to end."""
    p = _pipeline(ctx)
    record = _run_stage(lambda: p.run(path))
    cons = record.counts["conservation"]
    click.echo(f"{cons['reviews']} reviews -> report in {p.out}")


def _read_rows(path: str) -> list[dict]:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        data = json.loads(text)
        return data if isinstance(data, list) else [{"id": k, **v} if isinstance(v, dict)
                                                    else {"id": k, "value": v}
                                                    for k, v in data.items()]
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def _row_id(row: dict) -> str:
    return str(row.get("id", row.get("review_id")))


@cli.command()
@click.argument("predictions", type=click.Path(exists=True, dir_okay=False))
@click.argument("truth", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["classification", "clustering"]), required=True)
@click.option("--category", default=None, help="Only use prediction rows of this category.")
@click.option("--min-size", type=int, default=5, show_default=True)
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None,
              help="Metric report path (default: <out-dir>/metrics.<mode>.json).")
@click.pass_context
def evaluate(ctx, predictions, truth, mode, category, min_size, output):
    """Score predictions against ground truth.

    Rows are JSON lines keyed by "id"; classification rows carry "labels",
    clustering rows carry "cluster" ("noise" or -1 for unclustered).
    """
    try:
        config = load_config(ctx.obj["config_path"], ctx.obj["overrides"])
        pred_rows = _read_rows(predictions)
        if category:
            pred_rows = [r for r in pred_rows if r.get("category") == category]
        truth_rows = _read_rows(truth)
        if mode == "classification":
            pred = {_row_id(r): LabelSet(r["labels"]) for r in pred_rows}
            gold = {_row_id(r): LabelSet(r["labels"]) for r in truth_rows}
            metrics = classification_report(gold, pred)
        else:
            pred = {_row_id(r): r["cluster"] for r in pred_rows}
            gold = {_row_id(r): r["cluster"] for r in truth_rows}
            metrics = clustering_report(PartitionPair.from_maps(gold, pred), min_size)
    except (ConfigError, EvaluationError, KeyError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    out = Path(output) if output else Path(config.output_dir) / f"metrics.{mode}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    click.echo(json.dumps(metrics.get("weighted", metrics), sort_keys=True))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="minibar", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
