"""Retrieval metrics and feedback aggregation.

Precision@k, Recall@k, and NDCG over binary relevance, macro-averaged
across requests (micro behind a flag), plus the likert mapping used to
summarize human ratings. All functions are pure; aggregation sums in a
fixed request order so reports are bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .rank import RankedList


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class RelevanceJudgment:
    request_id: str
    relevant_items: frozenset[str]

    def __post_init__(self) -> None:
        if not self.relevant_items:
            raise EvalError(f"judgment for {self.request_id!r} has no relevant items")


def precision_at_k(ranked: RankedList, judgment: RelevanceJudgment, k: int) -> float:
    """Hits in the top k over k; a short list leaves the denominator at k."""
    if k < 1:
        raise EvalError(f"k must be >= 1, got {k}")
    top = ranked.item_ids()[:k]
    return len(set(top) & judgment.relevant_items) / k


def recall_at_k(ranked: RankedList, judgment: RelevanceJudgment, k: int) -> float:
    if k < 1:
        raise EvalError(f"k must be >= 1, got {k}")
    top = ranked.item_ids()[:k]
    return len(set(top) & judgment.relevant_items) / len(judgment.relevant_items)


def ndcg(ranked: RankedList, judgment: RelevanceJudgment) -> float:
    """Binary-gain NDCG over the full returned list.

    DCG discounts each hit at rank i by log2(i + 1). The ideal ordering
    puts every relevant item first, truncated at the returned length.
    """
    ids = ranked.item_ids()
    dcg = 0.0
    for i, iid in enumerate(ids, start=1):
        if iid in judgment.relevant_items:
            dcg += 1.0 / math.log2(i + 1)
    ideal_hits = min(len(judgment.relevant_items), len(ids))
    idcg = sum(1.0 / math.log2(i + 1) for i in range(1, ideal_hits + 1))
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


@dataclass
class EvalReport:
    n_requests: int
    k_set: tuple[int, ...]
    precision: dict[int, float]
    recall: dict[int, float]
    ndcg: float
    per_request: dict[str, dict] = field(default_factory=dict)
    skipped_empty: int = 0
    short_pool_count: int = 0  # (request, k) slots where the pool was smaller than k
    average: str = "macro"

    def to_dict(self) -> dict:
        return {
            "n_requests": self.n_requests,
            "k_set": list(self.k_set),
            "precision": {str(k): v for k, v in self.precision.items()},
            "recall": {str(k): v for k, v in self.recall.items()},
            "ndcg": self.ndcg,
            "skipped_empty": self.skipped_empty,
            "short_pool_count": self.short_pool_count,
            "average": self.average,
        }


def evaluate_run(rankings: dict[str, RankedList], judgments: dict[str, frozenset[str] | set[str]],
                 k_set: tuple[int, ...] = (1, 2, 3, 4), average: str = "macro") -> EvalReport:
    """Aggregate per-request metrics over a run.

    Every ranking must have a judgment; requests whose judgment is empty
    are excluded from the averages and counted.
    """
    if average not in ("macro", "micro"):
        raise EvalError(f"average must be macro or micro, got {average!r}")
    per_request: dict[str, dict] = {}
    skipped = 0
    short = 0
    used: list[str] = []
    for rid in sorted(rankings):
        if rid not in judgments:
            raise EvalError(f"no judgment for request {rid!r}")
        relevant = frozenset(judgments[rid])
        ranked = rankings[rid]
        if not relevant:
            skipped += 1
            continue
        judgment = RelevanceJudgment(rid, relevant)
        row = {
            "precision": {k: precision_at_k(ranked, judgment, k) for k in k_set},
            "recall": {k: recall_at_k(ranked, judgment, k) for k in k_set},
            "ndcg": ndcg(ranked, judgment),
            "n_relevant": len(relevant),
            "n_returned": len(ranked.entries),
        }
        short += sum(1 for k in k_set if len(ranked.entries) < k)
        per_request[rid] = row
        used.append(rid)

    n = len(used)
    if n == 0:
        precision = {k: 0.0 for k in k_set}
        recall = {k: 0.0 for k in k_set}
        overall_ndcg = 0.0
    elif average == "macro":
        precision = {k: sum(per_request[r]["precision"][k] for r in used) / n for k in k_set}
        recall = {k: sum(per_request[r]["recall"][k] for r in used) / n for k in k_set}
        overall_ndcg = sum(per_request[r]["ndcg"] for r in used) / n
    else:
        # micro: pool hit counts before dividing
        precision = {}
        recall = {}
        total_relevant = sum(per_request[r]["n_relevant"] for r in used)
        for k in k_set:
            hits = sum(per_request[r]["precision"][k] * k for r in used)
            precision[k] = hits / (n * k)
            recall[k] = sum(
                per_request[r]["recall"][k] * per_request[r]["n_relevant"] for r in used
            ) / total_relevant
        overall_ndcg = sum(per_request[r]["ndcg"] for r in used) / n
    return EvalReport(
        n_requests=n,
        k_set=tuple(k_set),
        precision=precision,
        recall=recall,
        ndcg=overall_ndcg,
        per_request=per_request,
        skipped_empty=skipped,
        short_pool_count=short,
        average=average,
    )


def load_judgments(path: str | Path) -> dict[str, frozenset[str]]:
    """Read line-delimited {"request_id": str, "relevant": [str]} records."""
    out: dict[str, frozenset[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EvalError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            out[str(rec["request_id"])] = frozenset(str(i) for i in rec["relevant"])
    return out


def render_report_table(reports: dict[str, EvalReport]) -> str:
    """Human-readable table, one row per model tag."""
    k_set = next(iter(reports.values())).k_set if reports else (1, 2, 3, 4)
    headers = ["model"] + [f"PREC@{k}" for k in k_set] + [f"REC@{k}" for k in k_set] + ["NDCG"]
    rows = []
    for tag in sorted(reports):
        rep = reports[tag]
        row = [tag]
        row += [f"{rep.precision[k]:.4f}" for k in k_set]
        row += [f"{rep.recall[k]:.4f}" for k in k_set]
        row.append(f"{rep.ndcg:.4f}")
        rows.append(row)
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# likert aggregation

_LIKERT_MAP = {1: -1, 2: -1, 3: 0, 4: +1, 5: +1}


def map_likert(rating: int) -> int:
    """1..2 are negative, 3 neutral, 4..5 positive."""
    try:
        return _LIKERT_MAP[int(rating)]
    except (KeyError, ValueError, TypeError):
        raise EvalError(f"likert rating must be an integer in [1, 5], got {rating!r}") from None


def aggregate_likert(ratings) -> tuple[float, float]:
    """Mean and sample standard deviation of the mapped ratings.

    A single rating has no sample spread; its sd is reported as 0.0.
    """
    mapped = [map_likert(r) for r in ratings]
    if not mapped:
        raise EvalError("cannot aggregate an empty ratings batch")
    n = len(mapped)
    mean = sum(mapped) / n
    if n == 1:
        return mean, 0.0
    var = sum((m - mean) ** 2 for m in mapped) / (n - 1)
    return mean, math.sqrt(var)
