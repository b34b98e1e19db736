"""Shared builders and independent oracles for the test suite.

The oracle functions here deliberately avoid the library's own vectorized
code paths: they use plain Python loops and scalar math so that agreement
with the implementation is evidence, not tautology.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from reqrank.corpus import (
    Corpus,
    Interaction,
    ItemDescription,
    LabeledPair,
    TextRequest,
    tokenize,
)


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def req(rid: str, text: str) -> TextRequest:
    return TextRequest(rid, text, tuple(tokenize(text)))


def item(iid: str, text: str) -> ItemDescription:
    return ItemDescription(iid, text, tuple(tokenize(text)))


def pos(rid: str, iid: str, interaction: Interaction = Interaction.TRY) -> LabeledPair:
    return LabeledPair(rid, iid, +1, interaction)


def neg(rid: str, iid: str) -> LabeledPair:
    return LabeledPair(rid, iid, -1, Interaction.NEG)


def corpus_of(requests, items, pairs) -> Corpus:
    return Corpus(
        requests={r.id: r for r in requests},
        items={i.id: i for i in items},
        pairs=tuple(pairs),
    )


# ---------------------------------------------------------------------------
# metric oracles: scalar set arithmetic over explicit ranked id lists


def oracle_precision(ranked_ids, relevant, k):
    hits = 0
    for iid in ranked_ids[:k]:
        if iid in relevant:
            hits += 1
    return hits / k


def oracle_recall(ranked_ids, relevant, k):
    hits = 0
    for iid in ranked_ids[:k]:
        if iid in relevant:
            hits += 1
    return hits / len(relevant)


def oracle_ndcg(ranked_ids, relevant):
    dcg = 0.0
    for i, iid in enumerate(ranked_ids, start=1):
        if iid in relevant:
            dcg += 1.0 / math.log2(i + 1)
    ideal = min(len(relevant), len(ranked_ids))
    idcg = 0.0
    for i in range(1, ideal + 1):
        idcg += 1.0 / math.log2(i + 1)
    return dcg / idcg if idcg > 0 else 0.0


# ---------------------------------------------------------------------------
# tower forward oracle: scalar triple loop, float64 throughout


def oracle_forward(tower, x):
    h = [float(t) for t in x]
    for w, b, act in zip(tower.weights, tower.biases, tower.activations):
        nxt = []
        for col in range(w.shape[1]):
            acc = float(b[col])
            for row in range(len(h)):
                acc += h[row] * float(w[row, col])
            nxt.append(acc)
        if act == "relu":
            nxt = [v if v > 0.0 else 0.0 for v in nxt]
        h = nxt
    return np.array(h, dtype=np.float64)


# ---------------------------------------------------------------------------
# random small training instances for gradient checking


def random_fd_instance(rng, objective):
    """Small random (params, batch, config): dims <= 16, batch <= 8, float64.

    Temperatures stay in [0.7, 2.0] so finite differences are not swamped
    by curvature; inputs are redrawn if a ReLU chain zeroes out a row,
    which the cosine objective cannot take.
    """
    from reqrank import towers as T

    in_dim = int(rng.integers(2, 9))
    hidden = tuple(int(rng.integers(2, 9)) for _ in range(int(rng.integers(1, 3))))
    out_dim = int(rng.integers(2, 9))
    n = int(rng.integers(2, 9))
    config = T.TrainConfig(
        alpha=float(rng.uniform(0.2, 2.0)),
        beta=float(rng.uniform(0.2, 2.0)),
        temperature=float(rng.uniform(0.7, 2.0)),
        seed=int(rng.integers(2**31)),
        objective=objective,
        hidden=hidden,
        out_dim=out_dim,
    )
    params = T.init_model(config, in_dim, dtype=np.float64)
    for attempt in range(20):
        for _ in range(50):
            x_req = rng.normal(size=(n, in_dim))
            x_item = rng.normal(size=(n, in_dim))
            y = rng.choice(np.array([-1, 1]), size=n)
            if not (y == 1).any():
                y[int(rng.integers(n))] = 1
            w = rng.uniform(0.5, 2.0, size=n)
            u = T.forward_batch(params.request_tower, x_req)
            v = T.forward_batch(params.item_tower, x_item)
            if np.linalg.norm(u, axis=1).min() > 1e-3 and np.linalg.norm(v, axis=1).min() > 1e-3:
                return params, T.PairBatch(x_req, x_item, y, w), config
        # a dead ReLU unit can zero rows for every input; redraw the towers
        config = dataclasses.replace(config, seed=int(rng.integers(2**31)))
        params = T.init_model(config, in_dim, dtype=np.float64)
    raise AssertionError("could not draw a nondegenerate instance")


# ---------------------------------------------------------------------------
# central finite differences over every parameter coordinate


def fd_gradient_check(params, batch, config, h=1e-4, floor=1e-3):
    """Max relative error between analytic gradients and central differences.

    Works on float64 towers. The relative-error denominator is floored so
    near-zero coordinates compare on absolute terms instead of blowing up.
    """
    from reqrank import towers as T

    _, grads = T.grad(params, batch, config)
    flat_params = T._flat_arrays(params)
    flat_grads = T._flat_grads(grads)
    worst = 0.0
    for arr, g in zip(flat_params, flat_grads):
        flat = arr.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = T.objective_value(params, batch, config).total
            flat[i] = keep - h
            dn = T.objective_value(params, batch, config).total
            flat[i] = keep
            fd = (up - dn) / (2.0 * h)
            rel = abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), floor)
            worst = max(worst, rel)
    return worst


# ---------------------------------------------------------------------------
# full pipeline workspace for CLI and server tests


def build_pipeline_workspace(root, *, n_categories=4, items_per_category=6,
                             requests_per_category=12, synth_seed=3, epochs=6,
                             embed_dim=64, pool_size=6, config_extra=None):
    """Write raw corpus files plus a config.json under root; return the config path."""
    from pathlib import Path

    from reqrank import synth

    root = Path(root)
    spec = synth.SynthSpec(
        n_categories=n_categories,
        items_per_category=items_per_category,
        requests_per_category=requests_per_category,
        seed=synth_seed,
    )
    corpus = synth.make_corpus(spec)
    write_jsonl(
        root / "requests.jsonl",
        [{"id": rid, "text": corpus.requests[rid].raw} for rid in sorted(corpus.requests)],
    )
    write_jsonl(
        root / "items.jsonl",
        [{"id": iid, "text": corpus.items[iid].raw} for iid in sorted(corpus.items)],
    )
    write_jsonl(
        root / "interactions.jsonl",
        [
            {"request_id": p.request_id, "item_id": p.item_id, "interaction": p.interaction.value}
            for p in corpus.pairs
            if p.y == +1
        ],
    )
    cfg = {
        "corpus": {
            "requests": "requests.jsonl",
            "items": "items.jsonl",
            "interactions": "interactions.jsonl",
            "out_dir": "corpus",
        },
        "embedding": {"dim": embed_dim},
        "train": {"epochs": epochs, "batch_size": 32, "lr": 1e-3, "seed": 0,
                  "hidden": [32], "out_dim": 16},
        "eval": {"pool_size": pool_size},
    }
    if config_extra:
        cfg.update(config_extra)
    path = root / "config.json"
    path.write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    return path
