"""Frozen base embeddings: file-backed stores and a hashing fallback.

The backbone that produced precomputed vectors is out of scope here; a
store is just an id -> vector map with a fixed dimension. The fallback
embedder is signed feature hashing over token bags, so any text can be
embedded without a vocabulary. All vectors are L2-normalized on the way
in, giving the towers unit-scale inputs.

File format "EMB1", bit-exact:
    magic b"EMB1" | u32 LE version=1 | u32 LE dim | u64 LE count |
    count * [u16 LE id_len | id UTF-8 | dim * f32 LE]
No padding anywhere.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"
VERSION = 1

PROVENANCE_FILE = "FILE"
PROVENANCE_HASH = "HASH"


class EmbeddingError(ValueError):
    """Bad file payload or a failed store invariant."""


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale to unit L2 norm; the zero vector stays zero."""
    v = np.asarray(v, dtype=np.float32)
    norm = float(np.linalg.norm(v.astype(np.float64)))
    if norm == 0.0:
        return v.copy()
    return (v.astype(np.float64) / norm).astype(np.float32)


def hash_embed(tokens, d: int = 256, seed: int = 42) -> np.ndarray:
    """Signed feature hashing of a token bag, L2-normalized.

    Each token maps to an index in [0, d) and a sign in {-1, +1}; counts
    accumulate and the result is normalized. Order-free by construction.
    """
    if d < 8:
        raise EmbeddingError(f"hash embedding dimension must be >= 8, got {d}")
    v = np.zeros(d, dtype=np.float64)
    for tok in tokens:
        digest = hashlib.blake2b(f"{seed}:{tok}".encode("utf-8"), digest_size=9).digest()
        idx = int.from_bytes(digest[:8], "big") % d
        sign = 1.0 if digest[8] & 1 else -1.0
        v[idx] += sign
    return l2_normalize(v.astype(np.float32))


@dataclass(frozen=True)
class EmbeddingStore:
    """Immutable id -> vector map of one fixed dimension."""

    dim: int
    entries: dict[str, np.ndarray]
    provenance: str = PROVENANCE_HASH

    def __post_init__(self) -> None:
        for key, vec in self.entries.items():
            if vec.shape != (self.dim,):
                raise EmbeddingError(f"vector for {key!r} has shape {vec.shape}, want ({self.dim},)")
            if not np.all(np.isfinite(vec)):
                raise EmbeddingError(f"vector for {key!r} contains non-finite values")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def lookup(self, key: str) -> np.ndarray:
        try:
            return self.entries[key]
        except KeyError:
            raise EmbeddingError(f"no embedding for id {key!r}") from None


def save_embeddings(store: EmbeddingStore, path: str | Path) -> None:
    """Write the store in the EMB1 format. Ids are written in sorted order."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", VERSION, store.dim, len(store.entries)))
        for key in sorted(store.entries):
            id_bytes = key.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise EmbeddingError(f"id too long for format: {key[:32]!r}...")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(store.entries[key].astype("<f4").tobytes())


def load_embeddings(path: str | Path) -> EmbeddingStore:
    """Load an EMB1 file; rejects bad magic, truncation, duplicates, non-finite values."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise EmbeddingError(f"{path}: bad magic {blob[:4]!r}, want {MAGIC!r}")
    if len(blob) < 20:
        raise EmbeddingError(f"{path}: truncated header")
    version, dim, count = struct.unpack_from("<IIQ", blob, 4)
    if version != VERSION:
        raise EmbeddingError(f"{path}: unsupported version {version}")
    pos = 20
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        if pos + 2 > len(blob):
            raise EmbeddingError(f"{path}: truncated record header at byte {pos}")
        (id_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        end = pos + id_len + 4 * dim
        if end > len(blob):
            raise EmbeddingError(f"{path}: truncated record payload at byte {pos}")
        key = blob[pos : pos + id_len].decode("utf-8")
        pos += id_len
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=pos).copy()
        pos += 4 * dim
        if key in entries:
            raise EmbeddingError(f"{path}: duplicate id {key!r}")
        if not np.all(np.isfinite(vec)):
            raise EmbeddingError(f"{path}: non-finite value in vector for id {key!r}")
        entries[key] = vec
    if pos != len(blob):
        raise EmbeddingError(f"{path}: {len(blob) - pos} trailing bytes after last record")
    return EmbeddingStore(dim=dim, entries=entries, provenance=PROVENANCE_FILE)


def build_store(texts: dict[str, tuple[str, ...]], d: int = 256, seed: int = 42) -> EmbeddingStore:
    """Hash-embed a batch of tokenized texts into a store."""
    entries = {key: hash_embed(tokens, d=d, seed=seed) for key, tokens in texts.items()}
    return EmbeddingStore(dim=d, entries=entries, provenance=PROVENANCE_HASH)


def store_for_corpus(corpus, d: int = 256, seed: int = 42) -> EmbeddingStore:
    """Embed every request and item of a corpus into one store.

    Request and item ids share the key space; a collision with differing
    tokens is an error rather than a silent overwrite.
    """
    texts: dict[str, tuple[str, ...]] = {}
    for rid, req in corpus.requests.items():
        texts[rid] = req.tokens
    for iid, item in corpus.items.items():
        if iid in texts and texts[iid] != item.tokens:
            raise EmbeddingError(f"id {iid!r} used by both a request and an item with different text")
        texts[iid] = item.tokens
    return build_store(texts, d=d, seed=seed)


class EmbeddingProvider:
    """Total text -> vector function backed by a store with hash fallback.

    Lookups hit the store when the id is known; unknown texts fall back to
    hash embedding of their tokens and are flagged so callers can surface it.
    """

    def __init__(self, store: EmbeddingStore | None, d: int = 256, seed: int = 42):
        if store is not None and store.dim != d:
            d = store.dim
        self.store = store
        self.dim = d
        self.seed = seed

    def vector(self, key: str | None, tokens) -> tuple[np.ndarray, bool]:
        """Return (vector, used_fallback)."""
        if self.store is not None and key is not None and key in self.store:
            return self.store.lookup(key), False
        return hash_embed(tokens, d=self.dim, seed=self.seed), self.store is not None
