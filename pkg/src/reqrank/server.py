"""HTTP query and feedback service.

The app ranks the whole catalog for incoming request texts, records
likert feedback to an append-only JSONL file, and summarizes it per
model. The model roster is loaded once into an immutable snapshot; a
reload builds a fresh snapshot and swaps it in with a single reference
assignment, so in-flight requests keep the roster they started with.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from .config import PipelineConfig
from .corpus import Corpus
from .evaluation import aggregate_likert
from .pipeline import Scorer, build_scorer, load_split


@dataclass(frozen=True)
class RosterSnapshot:
    """Immutable view of the loaded models and catalog, swapped as a unit."""

    scorers: dict[str, Scorer]
    kinds: dict[str, str]
    default_tag: str
    catalog_ids: tuple[str, ...]
    catalog_text: dict[str, str]


def load_snapshot(config: PipelineConfig) -> RosterSnapshot:
    corpus: Corpus = load_split(config, "full")
    scorers = {spec.tag: build_scorer(spec, config, corpus) for spec in config.models}
    return RosterSnapshot(
        scorers=scorers,
        kinds={spec.tag: spec.kind for spec in config.models},
        default_tag=config.default_model.tag,
        catalog_ids=tuple(sorted(corpus.items)),
        catalog_text={iid: item.raw for iid, item in corpus.items.items()},
    )


class FeedbackLog:
    """Append-only JSONL feedback store with a monotonically increasing seq."""

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()
        self._seq = 0
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self._seq = max(self._seq, json.loads(line).get("seq", 0))

    def append(self, record: dict) -> int:
        with self._lock:
            self._seq += 1
            record = {"seq": self._seq, **record}
            os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            return self._seq

    def records(self) -> list[dict]:
        if not os.path.exists(self.path):
            return []
        out = []
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    out.append(json.loads(line))
        return out


class QueryBody(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    text: str = Field(min_length=1)
    k: int = Field(default=5, ge=1)
    model_tag: str | None = None


class FeedbackBody(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    request_text: str = Field(min_length=1)
    model_tag: str
    k: int = Field(ge=1)
    rating: int = Field(ge=1, le=5)


def create_app(config: PipelineConfig) -> FastAPI:
    app = FastAPI(title="reqrank", version="0.1.0")
    app.state.config = config
    app.state.snapshot = load_snapshot(config)
    app.state.feedback = FeedbackLog(str(config.feedback_path))

    def reload_roster() -> None:
        # build first, assign once: readers see either the old or new roster
        app.state.snapshot = load_snapshot(config)

    app.state.reload_roster = reload_roster

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": jsonable_encoder(exc.errors())})

    def resolve_tag(snapshot: RosterSnapshot, tag: str | None) -> str:
        if tag is None:
            return snapshot.default_tag
        if tag not in snapshot.scorers:
            raise HTTPException(status_code=404, detail=f"unknown model tag {tag!r}")
        return tag

    @app.post("/api/query")
    def api_query(body: QueryBody):
        snapshot: RosterSnapshot = app.state.snapshot
        tag = resolve_tag(snapshot, body.model_tag)
        scorer = snapshot.scorers[tag]
        start = time.perf_counter()
        ranked = scorer.rank("adhoc", body.text, snapshot.catalog_ids, k=body.k)
        latency_ms = (time.perf_counter() - start) * 1000.0
        return {
            "request": body.text,
            "model_tag": tag,
            "k": body.k,
            "entries": [
                {"item_id": iid, "item_text": snapshot.catalog_text[iid], "score": score}
                for iid, score in ranked.entries
            ],
            "latency_ms": latency_ms,
            "used_fallback": scorer.used_fallback,
        }

    @app.post("/api/feedback")
    def api_feedback(body: FeedbackBody):
        snapshot: RosterSnapshot = app.state.snapshot
        resolve_tag(snapshot, body.model_tag)
        seq = app.state.feedback.append(
            {
                "request_text": body.request_text,
                "model_tag": body.model_tag,
                "k": body.k,
                "rating": body.rating,
            }
        )
        return {"stored": True, "seq": seq}

    @app.get("/api/models")
    def api_models():
        snapshot: RosterSnapshot = app.state.snapshot
        return {
            "models": [
                {"tag": tag, "kind": snapshot.kinds[tag], "default": tag == snapshot.default_tag}
                for tag in sorted(snapshot.scorers)
            ],
            "default": snapshot.default_tag,
        }

    @app.get("/api/feedback/summary")
    def api_feedback_summary(model_tag: str | None = Query(default=None)):
        snapshot: RosterSnapshot = app.state.snapshot
        if model_tag is not None and model_tag not in snapshot.scorers:
            raise HTTPException(status_code=404, detail=f"unknown model tag {model_tag!r}")
        records = app.state.feedback.records()
        if model_tag is not None:
            records = [r for r in records if r.get("model_tag") == model_tag]
        ratings = [int(r["rating"]) for r in records]
        if ratings:
            mean, sd = aggregate_likert(ratings)
        else:
            mean, sd = None, None
        return {"model_tag": model_tag, "count": len(ratings), "mean": mean, "sd": sd}

    static_dir = config.static_dir
    if static_dir is not None and static_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")

    return app
