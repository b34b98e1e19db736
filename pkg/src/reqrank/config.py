"""Pipeline configuration: one structured file drives every command.

Paths inside the file resolve relative to the file's own directory, so a
config plus its data can move around as a unit. JSON and YAML are both
accepted; the extension decides the parser.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .corpus import SplitSpec
from .towers import Objective, TrainConfig

MODEL_KINDS = ("WLITE", "BM25", "RANDOM")

ENV_CONFIG = "REQRANK_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    tag: str
    kind: str
    default: bool = False
    seed: int = 0  # only the random baseline consumes this

    def __post_init__(self) -> None:
        if not self.tag:
            raise ConfigError("model tag must be nonempty")
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")


_DEFAULT_MODELS = (
    ModelSpec(tag="wlite", kind="WLITE", default=True),
    ModelSpec(tag="bm25", kind="BM25"),
    ModelSpec(tag="random", kind="RANDOM", seed=0),
)


@dataclass(frozen=True)
class PipelineConfig:
    workdir: Path
    # ingest inputs; either the three-file form or reviews plus items
    corpus_requests: Path | None = None
    corpus_items: Path | None = None
    corpus_interactions: Path | None = None
    corpus_reviews: Path | None = None
    corpus_dir: Path = Path("corpus")
    lexicon_path: Path | None = None  # None selects the packaged lexicon
    negative_ratio: float = 1.0
    negative_seed: int = 7
    split_spec: SplitSpec = SplitSpec(fractions=(0.8, 0.1, 0.1), seed=13)
    embedding_file: Path | None = None
    embed_dim: int = 256
    embed_seed: int = 42
    train: TrainConfig = field(default_factory=TrainConfig)
    checkpoint: Path = Path("artifacts/model.wlt")
    dense_index: Path = Path("artifacts/dense.emb")
    bm25_index: Path = Path("artifacts/bm25.idx")
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    reports_dir: Path = Path("reports")
    eval_split: str = "test"
    k_set: tuple[int, ...] = (1, 2, 3, 4)
    pool_size: int = 8
    pool_seed: int = 17
    feedback_path: Path = Path("feedback.jsonl")
    serve_host: str = "127.0.0.1"
    serve_port: int = 8000
    static_dir: Path | None = None
    models: tuple[ModelSpec, ...] = _DEFAULT_MODELS

    def __post_init__(self) -> None:
        tags = [m.tag for m in self.models]
        if len(set(tags)) != len(tags):
            raise ConfigError(f"duplicate model tags: {tags}")
        defaults = [m.tag for m in self.models if m.default]
        if len(defaults) != 1:
            raise ConfigError(f"exactly one model must be the default, got {defaults}")
        if self.eval_split not in ("train", "dev", "test"):
            raise ConfigError(f"eval_split must be train/dev/test, got {self.eval_split!r}")
        if self.pool_size < 2:
            raise ConfigError(f"pool_size must be >= 2, got {self.pool_size}")
        if not self.k_set or any(k < 1 for k in self.k_set):
            raise ConfigError(f"k_set must be positive integers, got {self.k_set}")

    @property
    def default_model(self) -> ModelSpec:
        return next(m for m in self.models if m.default)

    def model_for(self, tag: str) -> ModelSpec | None:
        for m in self.models:
            if m.tag == tag:
                return m
        return None

    def split_dir(self, split: str) -> Path:
        return self.corpus_dir / split


_TOP_KEYS = {
    "corpus",
    "lexicon",
    "negatives",
    "split",
    "embedding",
    "train",
    "artifacts",
    "eval",
    "feedback",
    "serve",
    "models",
}


def _resolve(workdir: Path, value) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else workdir / p


def _train_config(raw: dict) -> TrainConfig:
    from .towers import TowersError

    kwargs = dict(raw)
    if "objective" in kwargs:
        name = str(kwargs["objective"]).upper()
        try:
            kwargs["objective"] = Objective[name]
        except KeyError:
            raise ConfigError(f"unknown objective {name!r}") from None
    if "hidden" in kwargs:
        kwargs["hidden"] = tuple(int(h) for h in kwargs["hidden"])
    try:
        return TrainConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad train section: {exc}") from None
    except TowersError as exc:
        raise ConfigError(f"bad train section: {exc}") from None


def config_from_dict(raw: dict, workdir: Path) -> PipelineConfig:
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    workdir = Path(workdir).resolve()

    corpus = raw.get("corpus", {}) or {}
    split = raw.get("split", {}) or {}
    negatives = raw.get("negatives", {}) or {}
    embedding = raw.get("embedding", {}) or {}
    artifacts = raw.get("artifacts", {}) or {}
    eval_sec = raw.get("eval", {}) or {}
    serve = raw.get("serve", {}) or {}

    fractions = split.get("fractions", (0.8, 0.1, 0.1))
    if len(fractions) != 3:
        raise ConfigError(f"split fractions must have three entries, got {fractions}")
    split_spec = SplitSpec(fractions=tuple(float(f) for f in fractions), seed=int(split.get("seed", 13)))

    models_raw = raw.get("models")
    if models_raw is None:
        models = _DEFAULT_MODELS
    else:
        models = tuple(
            ModelSpec(
                tag=str(m["tag"]),
                kind=str(m.get("kind", "WLITE")).upper(),
                default=bool(m.get("default", False)),
                seed=int(m.get("seed", 0)),
            )
            for m in models_raw
        )

    kwargs = dict(
        workdir=workdir,
        corpus_requests=_resolve(workdir, corpus.get("requests")),
        corpus_items=_resolve(workdir, corpus.get("items")),
        corpus_interactions=_resolve(workdir, corpus.get("interactions")),
        corpus_reviews=_resolve(workdir, corpus.get("reviews")),
        corpus_dir=_resolve(workdir, corpus.get("out_dir", "corpus")),
        lexicon_path=_resolve(workdir, raw.get("lexicon")),
        negative_ratio=float(negatives.get("ratio", 1.0)),
        negative_seed=int(negatives.get("seed", 7)),
        split_spec=split_spec,
        embedding_file=_resolve(workdir, embedding.get("file")),
        embed_dim=int(embedding.get("dim", 256)),
        embed_seed=int(embedding.get("seed", 42)),
        train=_train_config(raw.get("train", {}) or {}),
        checkpoint=_resolve(workdir, artifacts.get("checkpoint", "artifacts/model.wlt")),
        dense_index=_resolve(workdir, artifacts.get("dense_index", "artifacts/dense.emb")),
        bm25_index=_resolve(workdir, artifacts.get("bm25_index", "artifacts/bm25.idx")),
        bm25_k1=float(artifacts.get("bm25_k1", 1.2)),
        bm25_b=float(artifacts.get("bm25_b", 0.75)),
        reports_dir=_resolve(workdir, eval_sec.get("reports_dir", "reports")),
        eval_split=str(eval_sec.get("split", "test")),
        k_set=tuple(int(k) for k in eval_sec.get("k_set", (1, 2, 3, 4))),
        pool_size=int(eval_sec.get("pool_size", 8)),
        pool_seed=int(eval_sec.get("pool_seed", 17)),
        feedback_path=_resolve(workdir, (raw.get("feedback", {}) or {}).get("path", "feedback.jsonl")),
        serve_host=str(serve.get("host", "127.0.0.1")),
        serve_port=int(serve.get("port", 8000)),
        static_dir=_resolve(workdir, serve.get("static_dir")),
        models=models,
    )
    return PipelineConfig(**kwargs)


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".yaml", ".yml"):
        raw = yaml.safe_load(text) or {}
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config root must be a mapping")
    return config_from_dict(raw, path.parent)


def find_config(cli_value: str | None) -> PipelineConfig:
    """CLI flag first, then the environment, then built-in defaults."""
    if cli_value is not None:
        return load_config(cli_value)
    env = os.environ.get(ENV_CONFIG)
    if env:
        return load_config(env)
    return config_from_dict({}, Path.cwd())
