"""Pipeline steps behind the CLI verbs, kept importable for tests.

Every step writes artifacts with stable bytes: sorted JSON keys, no
timestamps, deterministic ordering. Running a step twice with the same
inputs must produce identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import default_lexicon_path
from .config import ModelSpec, PipelineConfig
from .corpus import (
    Corpus,
    adapt_reviews,
    load_corpus,
    load_corpus_dir,
    load_lexicon,
    sample_negatives,
    save_corpus,
    tag_corpus,
    tokenize,
)
from .corpus import split as split_corpus
from .embed import EmbeddingProvider, EmbeddingStore, load_embeddings, store_for_corpus
from .evaluation import EvalReport, evaluate_run, render_report_table
from .rank import (
    Bm25Index,
    RankedList,
    bm25_build,
    bm25_score,
    build_dense_index,
    load_bm25,
    load_dense_index,
    random_rank,
    rank_entries,
    save_bm25,
    save_dense_index,
)
from .towers import ModelParams, forward, load_checkpoint, save_checkpoint, train

SPLIT_NAMES = ("train", "dev", "test")


class PipelineError(RuntimeError):
    pass


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# ingest


def run_ingest(config: PipelineConfig) -> dict:
    """Load raw data, tag, sample negatives, split, and write corpus dirs."""
    if config.corpus_reviews is not None:
        if config.corpus_items is None:
            raise PipelineError("review ingestion needs an items file as well")
        corpus, _ = adapt_reviews(config.corpus_reviews, config.corpus_items)
    else:
        missing = [
            name
            for name, path in (
                ("requests", config.corpus_requests),
                ("items", config.corpus_items),
                ("interactions", config.corpus_interactions),
            )
            if path is None
        ]
        if missing:
            raise PipelineError(f"config corpus section is missing {', '.join(missing)}")
        corpus = load_corpus(config.corpus_requests, config.corpus_items, config.corpus_interactions)

    lexicon = load_lexicon(config.lexicon_path or default_lexicon_path())
    corpus = tag_corpus(corpus, lexicon)
    corpus, counts = sample_negatives(corpus, ratio=config.negative_ratio, seed=config.negative_seed)
    parts = split_corpus(corpus, config.split_spec)

    save_corpus(corpus, config.split_dir("full"))
    for name, part in zip(SPLIT_NAMES, parts):
        save_corpus(part, config.split_dir(name))

    manifest = {
        "items": len(corpus.items),
        "requests": len(corpus.requests),
        "pairs": len(corpus.pairs),
        "negatives_added": counts.negatives_added,
        "starved_requests": counts.starved_requests,
        "splits": {
            name: {"requests": len(part.requests), "pairs": len(part.pairs)}
            for name, part in zip(SPLIT_NAMES, parts)
        },
    }
    _write_json(config.corpus_dir / "manifest.json", manifest)
    return manifest


# ---------------------------------------------------------------------------
# embeddings and training


def load_split(config: PipelineConfig, name: str) -> Corpus:
    path = config.split_dir(name)
    if not (path / "requests.jsonl").exists():
        raise PipelineError(f"corpus split {name!r} not found under {config.corpus_dir}; run ingest first")
    return load_corpus_dir(path)


def resolve_store(config: PipelineConfig, corpus: Corpus) -> EmbeddingStore:
    if config.embedding_file is not None:
        if not config.embedding_file.exists():
            raise PipelineError(f"embedding file not found: {config.embedding_file}")
        return load_embeddings(config.embedding_file)
    return store_for_corpus(corpus, d=config.embed_dim, seed=config.embed_seed)


def run_train(config: PipelineConfig, seed: int | None = None, out: Path | None = None) -> dict:
    corpus = load_split(config, "train")
    # the full-split store covers dev request ids too, so dev metrics work
    store = resolve_store(config, load_split(config, "full"))
    train_cfg = config.train if seed is None else replace(config.train, seed=seed)
    try:
        dev = load_split(config, "dev")
    except PipelineError:
        dev = None
    if dev is not None and not dev.requests:
        dev = None
    params, log = train(train_cfg, corpus, store, dev_corpus=dev)
    ckpt = out or config.checkpoint
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, ckpt)
    _write_json(ckpt.with_suffix(".log.json"), log.to_dict())
    return log.to_dict()


def run_index(config: PipelineConfig) -> dict:
    corpus = load_split(config, "full")
    store = resolve_store(config, corpus)
    if not config.checkpoint.exists():
        raise PipelineError(f"checkpoint not found: {config.checkpoint}; run train first")
    params = load_checkpoint(config.checkpoint)
    index = build_dense_index(corpus.items, params.item_tower, store)
    config.dense_index.parent.mkdir(parents=True, exist_ok=True)
    save_dense_index(index, config.dense_index)

    tokens = {item_id: item.tokens for item_id, item in corpus.items.items()}
    bm25 = bm25_build(tokens, k1=config.bm25_k1, b=config.bm25_b)
    config.bm25_index.parent.mkdir(parents=True, exist_ok=True)
    save_bm25(bm25, config.bm25_index)
    return {"dense_rows": len(index.ids), "bm25_docs": len(bm25.tf)}


# ---------------------------------------------------------------------------
# scorers shared by eval, query, and the service


class Scorer:
    """Rank a candidate pool for one request; subclasses fill in scores."""

    def rank(self, request_id: str, text: str, candidates: tuple[str, ...], k: int) -> RankedList:
        raise NotImplementedError

    @property
    def used_fallback(self) -> bool:
        return False


@dataclass
class DenseScorer(Scorer):
    params: ModelParams
    provider: EmbeddingProvider
    rows: dict[str, np.ndarray]  # item id to projected float32 vector
    _fallback: bool = False

    def rank(self, request_id: str, text: str, candidates: tuple[str, ...], k: int) -> RankedList:
        vec, fallback = self.provider.vector(request_id, tokenize(text))
        self._fallback = fallback
        u = forward(self.params.request_tower, vec).astype(np.float64)
        missing = [cid for cid in candidates if cid not in self.rows]
        if missing:
            raise PipelineError(f"items missing from dense index: {missing[:3]}")
        scored = [(cid, float(self.rows[cid].astype(np.float64) @ u)) for cid in candidates]
        entries = rank_entries(scored)
        flags = ("k_capped",) if k > len(entries) else ()
        return RankedList(request_id=request_id, entries=entries[:k], flags=flags)

    @property
    def used_fallback(self) -> bool:
        return self._fallback


@dataclass
class Bm25Scorer(Scorer):
    index: Bm25Index

    def rank(self, request_id: str, text: str, candidates: tuple[str, ...], k: int) -> RankedList:
        query = tokenize(text)
        scored = [(cid, bm25_score(self.index, query, cid)) for cid in candidates]
        entries = rank_entries(scored)
        flags = ("k_capped",) if k > len(entries) else ()
        return RankedList(request_id=request_id, entries=entries[:k], flags=flags)


@dataclass
class RandomScorer(Scorer):
    seed: int

    def rank(self, request_id: str, text: str, candidates: tuple[str, ...], k: int) -> RankedList:
        return random_rank(candidates, k=k, seed=self.seed, request_id=request_id)


def build_scorer(spec: ModelSpec, config: PipelineConfig, corpus: Corpus) -> Scorer:
    if spec.kind == "WLITE":
        if not config.checkpoint.exists():
            raise PipelineError(f"checkpoint not found: {config.checkpoint}; run train first")
        params = load_checkpoint(config.checkpoint)
        store = resolve_store(config, corpus)
        # in hash mode the provider hashes novel text directly, which is the
        # canonical path, so only a configured embedding file makes misses a
        # flagged fallback
        provider_store = store if config.embedding_file is not None else None
        provider = EmbeddingProvider(provider_store, d=store.dim, seed=config.embed_seed)
        if config.dense_index.exists():
            index = load_dense_index(config.dense_index)
        else:
            index = build_dense_index(corpus.items, params.item_tower, store)
        rows = {iid: index.rows[i] for i, iid in enumerate(index.ids)}
        return DenseScorer(params=params, provider=provider, rows=rows)
    if spec.kind == "BM25":
        if config.bm25_index.exists():
            bm25 = load_bm25(config.bm25_index)
        else:
            tokens = {item_id: item.tokens for item_id, item in corpus.items.items()}
            bm25 = bm25_build(tokens, k1=config.bm25_k1, b=config.bm25_b)
        return Bm25Scorer(index=bm25)
    return RandomScorer(seed=spec.seed)


# ---------------------------------------------------------------------------
# eval


def build_pools(corpus: Corpus, pool_size: int, seed: int) -> dict[str, tuple[str, ...]]:
    """Per-request candidate pool: the positives plus sampled distractors."""
    all_ids = sorted(corpus.items)
    pools: dict[str, tuple[str, ...]] = {}
    for rid in sorted(corpus.requests):
        positives = sorted(corpus.positives_of(rid))
        taken = set(positives)
        others = [iid for iid in all_ids if iid not in taken]
        need = max(0, min(pool_size, len(all_ids)) - len(positives))
        digest = hashlib.blake2b(f"{seed}:{rid}".encode(), digest_size=8).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))
        picked = sorted(rng.choice(len(others), size=need, replace=False)) if need else []
        pools[rid] = tuple(sorted(positives + [others[i] for i in picked]))
    return pools


def evaluate_models(
    scorers: dict[str, Scorer],
    corpus: Corpus,
    pools: dict[str, tuple[str, ...]],
    k_set: tuple[int, ...],
) -> dict[str, EvalReport]:
    judgments = {rid: corpus.positives_of(rid) for rid in corpus.requests}
    reports: dict[str, EvalReport] = {}
    for tag in sorted(scorers):
        scorer = scorers[tag]
        rankings = {
            rid: scorer.rank(rid, corpus.requests[rid].raw, pools[rid], k=len(pools[rid]))
            for rid in sorted(corpus.requests)
        }
        reports[tag] = evaluate_run(rankings, judgments, k_set=k_set)
    return reports


def run_eval(config: PipelineConfig, split: str | None = None, pool_size: int | None = None) -> str:
    name = split or config.eval_split
    if name not in SPLIT_NAMES + ("full",):
        raise PipelineError(f"unknown split {name!r}")
    corpus = load_split(config, name)
    if not corpus.requests:
        raise PipelineError(f"split {name!r} has no requests to evaluate")
    pools = build_pools(corpus, pool_size or config.pool_size, config.pool_seed)
    scorers = {spec.tag: build_scorer(spec, config, corpus) for spec in config.models}
    reports = evaluate_models(scorers, corpus, pools, config.k_set)

    payload = {tag: report.to_dict() for tag, report in reports.items()}
    _write_json(config.reports_dir / f"report_{name}.json", payload)
    table = render_report_table(reports)
    config.reports_dir.mkdir(parents=True, exist_ok=True)
    (config.reports_dir / f"report_{name}.txt").write_text(table + "\n", encoding="utf-8")
    return table


# ---------------------------------------------------------------------------
# one-shot query


def run_query(
    config: PipelineConfig, text: str, k: int, model_tag: str | None
) -> list[tuple[str, str, float]]:
    corpus = load_split(config, "full")
    spec = config.default_model if model_tag is None else config.model_for(model_tag)
    if spec is None:
        raise PipelineError(f"unknown model tag {model_tag!r}")
    scorer = build_scorer(spec, config, corpus)
    catalog = tuple(sorted(corpus.items))
    ranked = scorer.rank("adhoc", text, catalog, k=k)
    return [(iid, corpus.items[iid].raw, score) for iid, score in ranked.entries]
