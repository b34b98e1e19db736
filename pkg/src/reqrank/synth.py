"""Separable synthetic corpora for smoke tests and benchmarks.

Requests and item descriptions are built from per-category keyword pools
plus per-item marker tokens, so a request is rankable both by lexical
overlap and by a learned projection. In obfuscated mode the keyword and
marker vocabularies are side-prefixed synonym sets, so the only shared
tokens are uninformative fillers: the pairing stays learnable from
training pairs, but token overlap carries no ranking signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Interaction, ItemDescription, LabeledPair, TextRequest

_FILLER = tuple(f"fill{j}" for j in range(16))


@dataclass(frozen=True)
class SynthSpec:
    n_categories: int = 8
    items_per_category: int = 8
    requests_per_category: int = 50
    obfuscate: bool = False
    bijective: bool = False  # pair request j with item j, one request per item
    seed: int = 7


def _category_keywords(c: int, side: str, obfuscate: bool) -> list[str]:
    if not obfuscate:
        return [f"kw{c}n{j}" for j in range(4)]
    return [f"{side}{c}n{j}" for j in range(4)]


def _item_markers(c: int, i: int, side: str, obfuscate: bool) -> list[str]:
    if not obfuscate:
        return [f"mark{c}x{i}a", f"mark{c}x{i}b"]
    return [f"{side}{c}x{i}a", f"{side}{c}x{i}b"]


def _make_items(spec: SynthSpec, rng: np.random.Generator) -> dict[str, ItemDescription]:
    items: dict[str, ItemDescription] = {}
    for c in range(spec.n_categories):
        kws = _category_keywords(c, "desc", spec.obfuscate)
        for i in range(spec.items_per_category):
            iid = f"item{c}x{i}"
            tokens = (
                list(rng.choice(kws, size=2, replace=False))
                + _item_markers(c, i, "desc", spec.obfuscate)
                + list(rng.choice(_FILLER, size=2, replace=False))
            )
            items[iid] = ItemDescription(iid, " ".join(tokens), tuple(tokens))
    return items


def _make_requests(spec: SynthSpec, rng: np.random.Generator, per_category: int,
                   prefix: str) -> tuple[dict[str, TextRequest], tuple[LabeledPair, ...]]:
    requests: dict[str, TextRequest] = {}
    pairs: list[LabeledPair] = []
    n = 0
    for c in range(spec.n_categories):
        kws = _category_keywords(c, "ask", spec.obfuscate)
        for j in range(per_category):
            i = j % spec.items_per_category if spec.bijective else int(rng.integers(spec.items_per_category))
            tokens = (
                list(rng.choice(kws, size=2, replace=False))
                + _item_markers(c, i, "ask", spec.obfuscate)
                + list(rng.choice(_FILLER, size=3, replace=False))
            )
            rid = f"{prefix}{n:05d}"
            n += 1
            requests[rid] = TextRequest(rid, " ".join(tokens), tuple(tokens))
            pairs.append(LabeledPair(rid, f"item{c}x{i}", +1, Interaction.TRY))
    return requests, tuple(pairs)


def make_corpus(spec: SynthSpec, request_prefix: str = "q") -> Corpus:
    """Generate an item catalog plus one positively-paired request per draw."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    items = _make_items(spec, rng)
    requests, pairs = _make_requests(spec, rng, spec.requests_per_category, request_prefix)
    return Corpus(requests=requests, items=items, pairs=pairs)


def make_train_eval(spec: SynthSpec, eval_per_category: int = 15) -> tuple[Corpus, Corpus]:
    """Two request sets drawn over one shared item catalog."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    items = _make_items(spec, rng)
    train_reqs, train_pairs = _make_requests(spec, rng, spec.requests_per_category, "tr")
    eval_reqs, eval_pairs = _make_requests(spec, rng, eval_per_category, "ev")
    train = Corpus(requests=train_reqs, items=items, pairs=train_pairs)
    held = Corpus(requests=eval_reqs, items=items, pairs=eval_pairs)
    return train, held


def eval_pools(corpus: Corpus, pool_size: int, seed: int) -> dict[str, list[str]]:
    """Per-request candidate pool: the positives plus sampled other items."""
    rng = np.random.Generator(np.random.PCG64(seed))
    all_items = sorted(corpus.items)
    pools: dict[str, list[str]] = {}
    for rid in sorted(corpus.requests):
        positives = sorted(corpus.positives_of(rid))
        others = [iid for iid in all_items if iid not in positives]
        fill = max(0, min(pool_size - len(positives), len(others)))
        picks = rng.choice(len(others), size=fill, replace=False)
        pools[rid] = positives + [others[int(i)] for i in sorted(picks)]
    return pools
