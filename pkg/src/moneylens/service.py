"""HTTP surface: suggestion endpoint, selection logging, corpus browsing.

The engine is immutable, so request handling is stateless; the selection log
is the only mutable resource and is written with atomic single-write line
appends under a process lock.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import os
import threading
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .engine import Engine
from .evaluation import TrialRecord
from .policies import POLICIES

__all__ = ["create_app", "SelectionEvent", "SELECTION_LOG_COLUMNS"]

SELECTION_LOG_COLUMNS = (
    "participant_id",
    "quote_id",
    "section",
    "focal_value",
    "shown",
    "choice",
    "timestamp",
    "session_id",
)


class PerspectivesRequest(BaseModel):
    text: str


class SpanModel(BaseModel):
    start: int
    end: int


class OptionModel(BaseModel):
    policy: str
    phrase: str
    score: Optional[float] = None
    reference_id: Optional[str] = None
    multiplier: Optional[str] = None
    per_capita_amount: Optional[str] = None


class MeasurementModel(BaseModel):
    span: SpanModel
    raw: str
    value: str
    magnitude: Optional[int] = None
    options: list[OptionModel]


class PerspectivesResponse(BaseModel):
    measurements: list[MeasurementModel]
    warnings: list[str] = Field(default_factory=list)


class SelectionEvent(BaseModel):
    """One keep/skip decision from the editor, appended to the trial log."""

    participant_id: str
    quote_id: str
    section: str
    focal_value: str
    shown: list[str]
    choice: str
    timestamp: Optional[str] = None
    session_id: Optional[str] = None


class _SelectionLog:
    """Append-only CSV log; one os.write per line keeps lines intact."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()
        if not path.exists() or path.stat().st_size == 0:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(",".join(SELECTION_LOG_COLUMNS) + "\n", encoding="utf-8")

    def append(self, row: dict) -> None:
        buf = io.StringIO()
        csv.writer(buf).writerow([row[c] for c in SELECTION_LOG_COLUMNS])
        data = buf.getvalue().encode("utf-8")
        with self._lock:
            fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
            try:
                os.write(fd, data)
            finally:
                os.close(fd)


def _measurement_payload(suggestion) -> MeasurementModel:
    m = suggestion.measurement
    options = []
    for p in suggestion.bundle.options:
        options.append(
            OptionModel(
                policy=p.policy,
                phrase=p.phrase,
                score=p.score,
                reference_id=p.reference_id,
                multiplier=format(p.multiplier, "f") if p.multiplier is not None else None,
                per_capita_amount=(
                    format(p.per_capita_amount, "f") if p.per_capita_amount is not None else None
                ),
            )
        )
    return MeasurementModel(
        span=SpanModel(start=m.span.start, end=m.span.end),
        raw=m.raw,
        value=format(m.value, "f"),
        magnitude=m.magnitude,
        options=options,
    )


def create_app(engine: Engine, selection_log_path: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="moneylens", version="0.1.0")
    # the editor page is typically served from a different local origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    log = _SelectionLog(Path(selection_log_path or engine.config.selection_log_path))
    app.state.engine = engine
    app.state.selection_log = log

    @app.get("/v1/health")
    def health() -> dict:
        return engine.health()

    @app.post("/v1/perspectives", response_model=PerspectivesResponse)
    def perspectives(request: PerspectivesRequest) -> PerspectivesResponse:
        text = request.text
        if not text or not text.strip():
            raise HTTPException(status_code=400, detail="text must be non-empty")
        if len(text) > engine.config.max_text_chars:
            raise HTTPException(
                status_code=400,
                detail=f"text exceeds the {engine.config.max_text_chars}-character limit",
            )
        suggestions = engine.suggest(text)
        warnings = sorted({str(f) for s in suggestions for f in s.failures})
        unavailable = any(
            f.kind == "unavailable" for s in suggestions for f in s.failures
        )
        no_options = all(not s.bundle.options for s in suggestions)
        if suggestions and unavailable and no_options:
            # Nothing could be produced at all; surface the outage instead of
            # returning an empty-but-200 answer.
            raise HTTPException(status_code=503, detail="; ".join(warnings))
        return PerspectivesResponse(
            measurements=[_measurement_payload(s) for s in suggestions],
            warnings=warnings,
        )

    @app.post("/v1/selections", status_code=204)
    def selections(event: SelectionEvent) -> Response:
        try:
            record = TrialRecord(
                participant_id=event.participant_id,
                quote_id=event.quote_id,
                section=event.section,
                focal_value=Decimal(event.focal_value),
                shown=frozenset(event.shown),
                choice=event.choice,
            )
        except (ValueError, InvalidOperation) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        log.append(
            {
                "participant_id": record.participant_id,
                "quote_id": record.quote_id,
                "section": record.section,
                "focal_value": format(record.focal_value, "f"),
                "shown": ",".join(p for p in POLICIES if p in record.shown),
                "choice": record.choice,
                "timestamp": event.timestamp
                or dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
                "session_id": event.session_id or "",
            }
        )
        return Response(status_code=204)

    @app.get("/v1/references")
    def references(q: str = Query(default=""), limit: int = Query(default=20, ge=1, le=500)) -> dict:
        if engine.corpus is None:
            return {"references": []}
        hits = engine.corpus.search(q, limit=limit) if q else engine.corpus.objects[:limit]
        return {
            "references": [
                {
                    "id": o.id,
                    "phrase": o.phrase,
                    "category": o.category,
                    "value": format(o.value, "f"),
                    "source": o.source,
                }
                for o in hits
            ]
        }

    return app
