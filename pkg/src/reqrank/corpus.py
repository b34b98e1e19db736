"""Corpus data model: requests, items, labeled pairs, splits.

Ingestion reads line-delimited JSON records. Negative sampling and
splitting are deterministic given a seed; split assignment is keyed by
request id so no request straddles two splits.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)

POSITIVE_INTERACTIONS = ("TRY", "KEEP", "NOTTRY")


class Interaction(str, Enum):
    TRY = "TRY"
    KEEP = "KEEP"
    NOTTRY = "NOTTRY"
    NEG = "NEG"


class CorpusError(ValueError):
    """Malformed input, dangling reference, or conflicting record."""


def tokenize(raw: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation. Pure and deterministic."""
    return _WORD_RE.findall(raw.lower())


@dataclass(frozen=True)
class TextRequest:
    id: str
    raw: str
    tokens: tuple[str, ...]
    categories: frozenset[str] = frozenset()


@dataclass(frozen=True)
class ItemDescription:
    id: str
    raw: str
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class LabeledPair:
    request_id: str
    item_id: str
    y: int
    interaction: Interaction

    def __post_init__(self) -> None:
        want = -1 if self.interaction is Interaction.NEG else +1
        if self.y != want:
            raise CorpusError(
                f"pair ({self.request_id},{self.item_id}): interaction "
                f"{self.interaction.value} requires y={want}, got {self.y}"
            )


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self) -> None:
        if any(f < 0 for f in self.fractions):
            raise CorpusError(f"split fractions must be nonnegative: {self.fractions}")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise CorpusError(f"split fractions must sum to 1: {self.fractions}")


@dataclass(frozen=True)
class Corpus:
    """Immutable bundle of requests, items, and labeled pairs."""

    requests: dict[str, TextRequest]
    items: dict[str, ItemDescription]
    pairs: tuple[LabeledPair, ...]

    def positives_of(self, request_id: str) -> set[str]:
        return {p.item_id for p in self.pairs if p.request_id == request_id and p.y == +1}


def _read_jsonl(path: str | Path, required: tuple[str, ...]):
    """Yield (line_number, record) for each non-blank line; validate keys."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise CorpusError(f"{path}:{lineno}: record must be an object")
            for key in required:
                if key not in rec:
                    raise CorpusError(f"{path}:{lineno}: missing field {key!r}")
            yield lineno, rec


def _load_texts(path: str | Path, kind: str) -> dict[str, tuple[str, tuple[str, ...]]]:
    out: dict[str, tuple[str, tuple[str, ...]]] = {}
    for lineno, rec in _read_jsonl(path, ("id", "text")):
        rid, text = str(rec["id"]), str(rec["text"])
        tokens = tuple(tokenize(text))
        if not tokens:
            raise CorpusError(f"{path}:{lineno}: {kind} {rid!r} has no tokens")
        if rid in out:
            if out[rid][0] != text:
                raise CorpusError(f"{path}:{lineno}: duplicate {kind} id {rid!r} with differing text")
            continue  # exact duplicate, dedupe
        out[rid] = (text, tokens)
    return out


def load_corpus(requests_path, items_path, interactions_path) -> Corpus:
    """Load a corpus from requests/items/interactions files.

    Requests and items are deduplicated by id (identical text only);
    interactions must reference known ids. Interactions may carry NEG
    rows when re-loading corpora written by this package.
    """
    reqs = _load_texts(requests_path, "request")
    items = _load_texts(items_path, "item")
    # saved corpora may carry precomputed categories on the request rows
    cats_by_id: dict[str, frozenset[str]] = {}
    for _, rec in _read_jsonl(requests_path, ("id", "text")):
        if "categories" in rec:
            cats_by_id[str(rec["id"])] = frozenset(str(c) for c in rec["categories"])
    requests = {
        rid: TextRequest(rid, text, tokens, categories=cats_by_id.get(rid, frozenset()))
        for rid, (text, tokens) in reqs.items()
    }
    item_objs = {iid: ItemDescription(iid, text, tokens) for iid, (text, tokens) in items.items()}

    pairs: list[LabeledPair] = []
    sign_of: dict[tuple[str, str], int] = {}
    for lineno, rec in _read_jsonl(interactions_path, ("request_id", "item_id", "interaction")):
        rid, iid = str(rec["request_id"]), str(rec["item_id"])
        if rid not in requests:
            raise CorpusError(f"{interactions_path}:{lineno}: unknown request id {rid!r}")
        if iid not in item_objs:
            raise CorpusError(f"{interactions_path}:{lineno}: unknown item id {iid!r}")
        try:
            inter = Interaction(str(rec["interaction"]))
        except ValueError:
            raise CorpusError(
                f"{interactions_path}:{lineno}: bad interaction {rec['interaction']!r}"
            ) from None
        y = -1 if inter is Interaction.NEG else +1
        prev = sign_of.get((rid, iid))
        if prev is not None and prev != y:
            raise CorpusError(
                f"{interactions_path}:{lineno}: pair ({rid},{iid}) appears with conflicting labels"
            )
        sign_of[(rid, iid)] = y
        pairs.append(LabeledPair(rid, iid, y, inter))
    return Corpus(requests=requests, items=item_objs, pairs=tuple(pairs))


def load_lexicon(path: str | Path) -> dict[str, frozenset[str]]:
    """Load a category -> keyword-set map; keywords must be lowercase single tokens."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    lexicon: dict[str, frozenset[str]] = {}
    for cat, kws in raw.items():
        for kw in kws:
            if tokenize(kw) != [kw]:
                raise CorpusError(f"lexicon {cat}: keyword {kw!r} is not a lowercase single token")
        lexicon[str(cat)] = frozenset(str(k) for k in kws)
    return lexicon


def tag_categories(request: TextRequest, lexicon: dict[str, frozenset[str]]) -> TextRequest:
    """Tag the categories whose keywords occur in the request tokens. Idempotent."""
    have = set(request.tokens)
    cats = frozenset(cat for cat, kws in lexicon.items() if have & kws)
    return replace(request, categories=cats)


def tag_corpus(corpus: Corpus, lexicon: dict[str, frozenset[str]]) -> Corpus:
    tagged = {rid: tag_categories(r, lexicon) for rid, r in corpus.requests.items()}
    return replace(corpus, requests=tagged)


@dataclass(frozen=True)
class AdaptCounts:
    reviews_kept: int = 0
    reviews_dropped: int = 0
    items_dropped: int = 0


def adapt_reviews(reviews_path, items_path) -> tuple[Corpus, AdaptCounts]:
    """Turn customer reviews into requests paired with the reviewed item.

    Each usable review becomes a TextRequest with a deterministic id and a
    single positive pair to its item. Reviews of unknown or descriptionless
    items are dropped and counted, not fatal.
    """
    usable_items: dict[str, ItemDescription] = {}
    items_dropped = 0
    for lineno, rec in _read_jsonl(items_path, ("id",)):
        iid = str(rec["id"])
        text = str(rec.get("text", ""))
        tokens = tuple(tokenize(text))
        if not tokens:
            items_dropped += 1
            continue
        if iid in usable_items and usable_items[iid].raw != text:
            raise CorpusError(f"{items_path}:{lineno}: duplicate item id {iid!r} with differing text")
        usable_items[iid] = ItemDescription(iid, text, tokens)

    requests: dict[str, TextRequest] = {}
    pairs: list[LabeledPair] = []
    dropped = 0
    n = 0
    for _, rec in _read_jsonl(reviews_path, ("item_id", "review")):
        iid = str(rec["item_id"])
        text = str(rec["review"])
        tokens = tuple(tokenize(text))
        if iid not in usable_items or not tokens:
            dropped += 1
            continue
        rid = f"rev{n:06d}"
        n += 1
        requests[rid] = TextRequest(rid, text, tokens)
        pairs.append(LabeledPair(rid, iid, +1, Interaction.TRY))
    counts = AdaptCounts(reviews_kept=n, reviews_dropped=dropped, items_dropped=items_dropped)
    return Corpus(requests=requests, items=usable_items, pairs=tuple(pairs)), counts


def _derive_rng(seed: int, key: str) -> np.random.Generator:
    """Stable per-key stream so results do not depend on iteration order."""
    digest = hashlib.blake2b(f"{seed}:{key}".encode("utf-8"), digest_size=8).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))


@dataclass(frozen=True)
class SampleCounts:
    negatives_added: int = 0
    starved_requests: int = 0  # no eligible negative items at all
    short_requests: int = 0    # fewer eligible items than requested


def sample_negatives(corpus: Corpus, ratio: float = 1.0, seed: int = 0) -> tuple[Corpus, SampleCounts]:
    """Add ceil(ratio * #positives) NEG pairs per request, without replacement.

    Draws come from items not already positive for the request, uniformly,
    from a per-request stream derived from the seed.
    """
    if ratio <= 0:
        raise CorpusError(f"negative ratio must be > 0, got {ratio}")
    if len(corpus.items) < 2:
        raise CorpusError("negative sampling needs at least 2 items")
    item_ids = sorted(corpus.items)
    pos_by_req: dict[str, set[str]] = {rid: set() for rid in corpus.requests}
    for p in corpus.pairs:
        if p.y == +1:
            pos_by_req[p.request_id].add(p.item_id)

    new_pairs = list(corpus.pairs)
    added = starved = short = 0
    for rid in sorted(corpus.requests):
        positives = pos_by_req[rid]
        if not positives:
            continue
        want = math.ceil(ratio * len(positives))
        eligible = [iid for iid in item_ids if iid not in positives]
        if not eligible:
            starved += 1
            continue
        if len(eligible) < want:
            short += 1
            want = len(eligible)
        rng = _derive_rng(seed, rid)
        picks = rng.choice(len(eligible), size=want, replace=False)
        for idx in sorted(int(i) for i in picks):
            new_pairs.append(LabeledPair(rid, eligible[idx], -1, Interaction.NEG))
            added += 1
    counts = SampleCounts(negatives_added=added, starved_requests=starved, short_requests=short)
    return replace(corpus, pairs=tuple(new_pairs)), counts


def _split_of(rid: str, spec: SplitSpec) -> int:
    digest = hashlib.blake2b(f"{spec.seed}:{rid}".encode("utf-8"), digest_size=8).digest()
    u = int.from_bytes(digest, "big") / 2.0**64
    edge = 0.0
    for i, frac in enumerate(spec.fractions[:-1]):
        edge += frac
        if u < edge:
            return i
    return len(spec.fractions) - 1


def split(corpus: Corpus, spec: SplitSpec) -> tuple[Corpus, Corpus, Corpus]:
    """Partition pairs into train/dev/test by hashing the request id.

    All pairs of one request land in one split; every split keeps the full
    item catalog so retrieval candidates stay available.
    """
    n_splits = sum(1 for f in spec.fractions if f > 0)
    if len(corpus.requests) < n_splits:
        raise CorpusError(
            f"cannot split {len(corpus.requests)} requests into {n_splits} nonempty parts"
        )
    buckets: tuple[dict[str, TextRequest], ...] = ({}, {}, {})
    for rid, req in corpus.requests.items():
        buckets[_split_of(rid, spec)][rid] = req
    out = []
    for i in range(3):
        keep = buckets[i]
        pairs = tuple(p for p in corpus.pairs if p.request_id in keep)
        out.append(Corpus(requests=dict(keep), items=dict(corpus.items), pairs=pairs))
    return out[0], out[1], out[2]


def save_corpus(corpus: Corpus, out_dir: str | Path) -> None:
    """Write requests/items/pairs as line-delimited JSON. Deterministic bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "requests.jsonl", "w", encoding="utf-8") as fh:
        for rid in sorted(corpus.requests):
            r = corpus.requests[rid]
            rec = {"id": r.id, "text": r.raw, "categories": sorted(r.categories)}
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
    with open(out / "items.jsonl", "w", encoding="utf-8") as fh:
        for iid in sorted(corpus.items):
            it = corpus.items[iid]
            fh.write(json.dumps({"id": it.id, "text": it.raw}, sort_keys=True, ensure_ascii=False) + "\n")
    with open(out / "pairs.jsonl", "w", encoding="utf-8") as fh:
        for p in corpus.pairs:
            rec = {"request_id": p.request_id, "item_id": p.item_id, "interaction": p.interaction.value}
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def load_corpus_dir(corpus_dir: str | Path) -> Corpus:
    d = Path(corpus_dir)
    return load_corpus(d / "requests.jsonl", d / "items.jsonl", d / "pairs.jsonl")
