"""Pipeline configuration: YAML/JSON file with nested or dotted keys."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .cluster import HdbscanParams
from .rank import RankingWeights
from .reduce import ReducerParams
from .summarize import TokenBudget


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "input": {"path": None, "format": None},
    "language_default": "en",
    "chat": {
        "provider": "mock",
        "url": "https://api.openai.com/v1/chat/completions",
        "model": "gpt-3.5-turbo",
        "temperature": 0.0,
        "max_output_tokens": 256,
        "max_in_flight": 4,
        "timeout": 60.0,
        "mock_script": None,
    },
    "embedding": {
        "provider": "offline",
        "url": None,
        "model": "hkunlp/instructor-base",
        "batch_size": 64,
    },
    "reducer": {
        "method": "umap",
        "out_dim": 20,
        "n_neighbors": 100,
        "min_dist": 0.0,
        "n_epochs": 200,
        "seed": None,
    },
    "hdbscan": {"min_cluster_size": 5, "min_samples": None},
    "summarize": {"max_tokens_per_group": 4000},
    "rank": {"w_rev": 1.0, "w_th": 0.1, "w_ra": 1.0},
    "cache_dir": ".minibar-cache",
    "output_dir": "minibar-out",
    "seed": 42,
}

_CHOICES = {
    "input.format": (None, "jsonl", "csv"),
    "chat.provider": ("mock", "remote"),
    "embedding.provider": ("offline", "remote"),
    "reducer.method": ("umap", "pca", "none"),
}
_OPTIONAL = {"input.path", "input.format", "chat.mock_script", "embedding.url",
             "reducer.seed", "hdbscan.min_samples"}


@dataclass(frozen=True)
class ChatConfig:
    provider: str = "mock"
    url: str = DEFAULTS["chat"]["url"]
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_output_tokens: int = 256
    max_in_flight: int = 4
    timeout: float = 60.0
    mock_script: str | None = None


@dataclass(frozen=True)
class EmbeddingConfig:
    provider: str = "offline"
    url: str | None = None
    model: str = "hkunlp/instructor-base"
    batch_size: int = 64


@dataclass(frozen=True)
class PipelineConfig:
    input_path: str | None = None
    input_format: str | None = None
    language_default: str = "en"
    chat: ChatConfig = field(default_factory=ChatConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    reducer_method: str = "umap"
    reducer: ReducerParams = field(default_factory=ReducerParams)
    hdbscan: HdbscanParams = field(default_factory=HdbscanParams)
    budget: TokenBudget = field(default_factory=TokenBudget)
    weights: RankingWeights = field(default_factory=RankingWeights)
    cache_dir: str = ".minibar-cache"
    output_dir: str = "minibar-out"
    seed: int = 42

    def snapshot(self) -> dict:
        return asdict(self)


def _flatten(tree: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for key, value in tree.items():
        if not isinstance(key, str):
            raise ConfigError(f"config key {key!r} is not a string")
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, path + "."))
        else:
            out[path] = value
    return out


_FLAT_DEFAULTS = _flatten(DEFAULTS)


def _coerce(path: str, value: Any, default: Any) -> Any:
    if value is None:
        if path in _OPTIONAL:
            return None
        raise ConfigError(f"{path}: value must not be null")
    if path in _CHOICES:
        if value not in _CHOICES[path]:
            raise ConfigError(f"{path}: {value!r} is not one of {[c for c in _CHOICES[path] if c]}")
        return value
    expected = type(default) if default is not None else None
    if path in ("reducer.seed", "hdbscan.min_samples", "seed"):
        expected = int
    if path in ("input.path", "chat.mock_script", "embedding.url"):
        expected = str
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if expected is str and not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    return value


def config_from_mapping(raw: dict | None) -> PipelineConfig:
    flat = copy.deepcopy(_FLAT_DEFAULTS)
    for path, value in _flatten(raw or {}).items():
        if path not in flat:
            raise ConfigError(f"unknown config key {path!r}")
        flat[path] = _coerce(path, value, _FLAT_DEFAULTS[path])

    def section(name: str) -> dict:
        return {k.split(".", 1)[1]: v for k, v in flat.items() if k.startswith(name + ".")}

    try:
        red = section("reducer")
        method = red.pop("method")
        if red["seed"] is None:
            red["seed"] = flat["seed"]
        return PipelineConfig(
            input_path=flat["input.path"],
            input_format=flat["input.format"],
            language_default=flat["language_default"],
            chat=ChatConfig(**section("chat")),
            embedding=EmbeddingConfig(**section("embedding")),
            reducer_method=method,
            reducer=ReducerParams(**red),
            hdbscan=HdbscanParams(**section("hdbscan")),
            budget=TokenBudget(**section("summarize")),
            weights=RankingWeights(**section("rank")),
            cache_dir=flat["cache_dir"],
            output_dir=flat["output_dir"],
            seed=flat["seed"],
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Read a config file; missing keys take the documented defaults.

    Unknown keys and ill-typed values raise :class:`ConfigError` naming the key.
    """
    raw: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML/JSON: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        raw = _flatten(loaded)
    if overrides:
        raw.update(_flatten(overrides))
    return config_from_mapping(raw)
