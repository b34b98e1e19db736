"""Retrieval scorers: dense top-k, Okapi BM25, and a random baseline.

Every producer emits a RankedList with the same ordering rule: scores
non-increasing, ties broken by ascending item id. Indices are immutable
once built and safe for concurrent reads.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embed import EmbeddingStore, PROVENANCE_FILE, load_embeddings, save_embeddings
from .towers import TowerParams, forward_batch


class RankError(ValueError):
    pass


@dataclass(frozen=True)
class RankedList:
    request_id: str
    entries: tuple[tuple[str, float], ...]
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        ids = [iid for iid, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise RankError(f"ranked list for {self.request_id!r} repeats an item id")
        for (ia, sa), (ib, sb) in zip(self.entries, self.entries[1:]):
            if sb > sa or (sb == sa and ib < ia):
                raise RankError(f"ranked list for {self.request_id!r} breaks the ordering rule")

    def item_ids(self) -> list[str]:
        return [iid for iid, _ in self.entries]


def rank_entries(scored) -> tuple[tuple[str, float], ...]:
    """Order (item_id, score) pairs: descending score, ascending id on ties."""
    return tuple(sorted(scored, key=lambda e: (-e[1], e[0])))


# ---------------------------------------------------------------------------
# dense retrieval


@dataclass(frozen=True)
class DenseIndex:
    dim: int
    ids: tuple[str, ...]
    rows: np.ndarray  # (len(ids), dim), float32

    def __post_init__(self) -> None:
        if self.rows.shape != (len(self.ids), self.dim):
            raise RankError(f"index rows {self.rows.shape} do not match {len(self.ids)} ids x {self.dim}")
        if not np.all(np.isfinite(self.rows)):
            raise RankError("dense index contains non-finite rows")

    def __len__(self) -> int:
        return len(self.ids)


def build_dense_index(items, item_tower: TowerParams, store: EmbeddingStore) -> DenseIndex:
    """Project every item's base embedding through the item tower."""
    ids = tuple(sorted(items))
    if not ids:
        raise RankError("cannot index an empty item set")
    base = np.stack([store.lookup(iid) for iid in ids])
    rows = forward_batch(item_tower, base).astype(np.float32)
    return DenseIndex(dim=rows.shape[1], ids=ids, rows=rows)


def dense_topk(index: DenseIndex, request_vec: np.ndarray, k: int,
               request_id: str = "") -> RankedList:
    """Top-k by dot product; equal to full-sort truncation by construction."""
    if k < 1:
        raise RankError(f"k must be >= 1, got {k}")
    q = np.asarray(request_vec, dtype=np.float64)
    if q.shape != (index.dim,):
        raise RankError(f"query shape {q.shape} does not match index dim {index.dim}")
    scores = index.rows.astype(np.float64) @ q
    scored = list(zip(index.ids, (float(s) for s in scores)))
    entries = rank_entries(scored)
    flags = ()
    if k > len(entries):
        flags = ("k_capped",)
    return RankedList(request_id=request_id, entries=entries[:k], flags=flags)


def save_dense_index(index: DenseIndex, path: str | Path) -> None:
    store = EmbeddingStore(
        dim=index.dim,
        entries={iid: index.rows[i] for i, iid in enumerate(index.ids)},
        provenance=PROVENANCE_FILE,
    )
    save_embeddings(store, path)


def load_dense_index(path: str | Path) -> DenseIndex:
    store = load_embeddings(path)
    ids = tuple(sorted(store.entries))
    rows = np.stack([store.entries[iid] for iid in ids]) if ids else np.zeros((0, store.dim), np.float32)
    return DenseIndex(dim=store.dim, ids=ids, rows=rows)


# ---------------------------------------------------------------------------
# Okapi BM25

BM25_MAGIC = b"BM25"
BM25_VERSION = 1


@dataclass(frozen=True)
class Bm25Index:
    doc_count: int
    avg_doc_len: float
    df: dict[str, int]
    tf: dict[str, dict[str, int]]  # item id -> term -> count
    doc_len: dict[str, int]
    k1: float = 1.2
    b: float = 0.75


def bm25_build(items: dict[str, tuple[str, ...]], k1: float = 1.2, b: float = 0.75) -> Bm25Index:
    """Collect document statistics from tokenized item descriptions.

    items maps item id to its token sequence.
    """
    if not items:
        raise RankError("BM25 index needs at least one document")
    if k1 < 0 or not 0 <= b <= 1:
        raise RankError(f"bad BM25 parameters k1={k1}, b={b}")
    tf = {iid: dict(Counter(tokens)) for iid, tokens in items.items()}
    df: Counter[str] = Counter()
    for counts in tf.values():
        df.update(counts.keys())
    doc_len = {iid: len(tokens) for iid, tokens in items.items()}
    avg = sum(doc_len.values()) / len(doc_len)
    return Bm25Index(doc_count=len(items), avg_doc_len=avg, df=dict(df), tf=tf,
                     doc_len=doc_len, k1=k1, b=b)


def bm25_idf(index: Bm25Index, term: str) -> float:
    """ln(1 + (N - df + 0.5) / (df + 0.5)); nonnegative for any df <= N."""
    df = index.df.get(term, 0)
    return math.log(1.0 + (index.doc_count - df + 0.5) / (df + 0.5))


def bm25_score(index: Bm25Index, query_tokens, item_id: str) -> float:
    tf = index.tf[item_id]
    dl = index.doc_len[item_id]
    norm = index.k1 * (1.0 - index.b + index.b * dl / index.avg_doc_len)
    s = 0.0
    for term in query_tokens:
        f = tf.get(term, 0)
        if f == 0:
            continue
        s += bm25_idf(index, term) * f * (index.k1 + 1.0) / (f + norm)
    return s


def bm25_topk(index: Bm25Index, query_tokens, k: int, request_id: str = "") -> RankedList:
    if k < 1:
        raise RankError(f"k must be >= 1, got {k}")
    scored = [(iid, bm25_score(index, query_tokens, iid)) for iid in index.tf]
    entries = rank_entries(scored)
    flags = ("k_capped",) if k > len(entries) else ()
    return RankedList(request_id=request_id, entries=entries[:k], flags=flags)


def save_bm25(index: Bm25Index, path: str | Path) -> None:
    payload = json.dumps(
        {
            "doc_count": index.doc_count,
            "avg_doc_len": index.avg_doc_len,
            "df": index.df,
            "tf": index.tf,
            "doc_len": index.doc_len,
            "k1": index.k1,
            "b": index.b,
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(BM25_MAGIC)
        fh.write(struct.pack("<IQ", BM25_VERSION, len(payload)))
        fh.write(payload)


def load_bm25(path: str | Path) -> Bm25Index:
    blob = Path(path).read_bytes()
    if blob[:4] != BM25_MAGIC:
        raise RankError(f"{path}: bad magic {blob[:4]!r}")
    version, length = struct.unpack_from("<IQ", blob, 4)
    if version != BM25_VERSION:
        raise RankError(f"{path}: unsupported version {version}")
    if len(blob) != 16 + length:
        raise RankError(f"{path}: payload size mismatch")
    raw = json.loads(blob[16:].decode("utf-8"))
    return Bm25Index(
        doc_count=raw["doc_count"],
        avg_doc_len=raw["avg_doc_len"],
        df={str(k): int(v) for k, v in raw["df"].items()},
        tf={str(d): {str(t): int(c) for t, c in counts.items()} for d, counts in raw["tf"].items()},
        doc_len={str(k): int(v) for k, v in raw["doc_len"].items()},
        k1=raw["k1"],
        b=raw["b"],
    )


# ---------------------------------------------------------------------------
# random baseline


def random_rank(item_ids, k: int, seed: int, request_id: str = "") -> RankedList:
    """Uniformly random permutation truncated to k, fixed by (seed, request_id)."""
    if k < 1:
        raise RankError(f"k must be >= 1, got {k}")
    ids = sorted(item_ids)
    digest = hashlib.blake2b(f"{seed}:{request_id}".encode("utf-8"), digest_size=8).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))
    scores = rng.random(len(ids))
    entries = rank_entries(list(zip(ids, (float(s) for s in scores))))
    flags = ("k_capped",) if k > len(entries) else ()
    return RankedList(request_id=request_id, entries=entries[:k], flags=flags)
