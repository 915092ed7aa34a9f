"""Review HTTP API: batch labeling for the baseline loop and adjudication
of articles flagged by the screening pipeline.

The service is the single writer for labels and adjudications; reviewer
verdicts are stored alongside the model's, never over it.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field

from .baseline import POLICIES, ActiveLearningLoop, ConfidenceBin
from .pipeline import AuditRow


class BatchArticle(BaseModel):
    id: str
    title: str
    abstract: str | None = None


class BatchResponse(BaseModel):
    articles: list[BatchArticle]


class LabelItem(BaseModel):
    id: str
    label: str = Field(pattern="^(include|exclude)$")


class LabelsRequest(BaseModel):
    labels: list[LabelItem]


class LabelsResponse(BaseModel):
    labeled_count: int
    bin_counts: list[int]
    stable: bool


class HistoryPointModel(BaseModel):
    labeled_count: int
    bins: list[int]


class HistoryResponse(BaseModel):
    points: list[HistoryPointModel]
    stable: bool


class PolicyRequest(BaseModel):
    name: str = Field(pattern="^[AB]$")


class PolicyResponse(BaseModel):
    policy: str
    auto_excluded: int
    manual: int


class FlaggedItem(BaseModel):
    article_id: str
    file_name: str
    article_title: str
    answers: dict[str, str]
    outcome_category: str
    final_decision: str
    verdict: str
    reason: str
    chunks_used: dict[str, list[int]] = {}
    adjudication: str | None = None


class FlaggedResponse(BaseModel):
    items: list[FlaggedItem]


class AdjudicationRequest(BaseModel):
    article_id: str
    decision: str = Field(pattern="^(include|exclude)$")


class AdjudicationResponse(BaseModel):
    article_id: str
    decision: str
    adjudicated_count: int


@dataclass
class ReviewState:
    loop: ActiveLearningLoop | None = None
    fixture_bins: tuple[int, ...] | None = None
    flagged: list[AuditRow] = field(default_factory=list)
    adjudications: dict[str, str] = field(default_factory=dict)
    adjudication_path: str | None = None

    def load_adjudications(self) -> None:
        if self.adjudication_path and os.path.exists(self.adjudication_path):
            with open(self.adjudication_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        row = json.loads(line)
                        self.adjudications[row["article_id"]] = row["decision"]

    def persist_adjudication(self, article_id: str, decision: str) -> None:
        self.adjudications[article_id] = decision
        if self.adjudication_path:
            with open(self.adjudication_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"article_id": article_id, "decision": decision}) + "\n")

    def current_bins(self) -> list[int]:
        if self.loop is not None:
            counts = [0] * 5
            for _, b in self.loop.binned_pool():
                counts[int(b)] += 1
            return counts
        if self.fixture_bins is not None:
            return list(self.fixture_bins)
        return [0] * 5


def create_app(state: ReviewState, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="srscreen review service")
    state.load_adjudications()

    @app.get("/batch", response_model=BatchResponse)
    def get_batch(n: int = Query(default=100, ge=1)):
        if state.loop is None:
            raise HTTPException(400, "no labeling loop loaded")
        ids = state.loop.next_batch(n)
        articles = []
        for aid in ids:
            rec = state.loop.records_by_id[aid]
            articles.append(BatchArticle(id=aid, title=rec.title, abstract=rec.abstract))
        return BatchResponse(articles=articles)

    @app.post("/labels", response_model=LabelsResponse)
    def post_labels(req: LabelsRequest):
        if state.loop is None:
            raise HTTPException(400, "no labeling loop loaded")
        for item in req.labels:
            if item.id not in state.loop.features:
                raise HTTPException(404, f"unknown article id {item.id}")
            if item.id in state.loop.labels:
                raise HTTPException(409, f"article {item.id} already labeled")
        point = state.loop.submit_labels(
            [(item.id, 1 if item.label == "include" else 0) for item in req.labels]
        )
        return LabelsResponse(
            labeled_count=point.labeled_count,
            bin_counts=list(point.bin_counts),
            stable=state.loop.is_stable(),
        )

    @app.get("/history", response_model=HistoryResponse)
    def get_history():
        if state.loop is None:
            return HistoryResponse(points=[], stable=False)
        return HistoryResponse(
            points=[
                HistoryPointModel(labeled_count=pt.labeled_count, bins=list(pt.bin_counts))
                for pt in state.loop.history
            ],
            stable=state.loop.is_stable(),
        )

    @app.post("/policy", response_model=PolicyResponse)
    def post_policy(req: PolicyRequest):
        policy = POLICIES[req.name]
        bins = state.current_bins()
        auto = sum(n for b, n in zip(ConfidenceBin, bins) if b in policy.excluded_bins)
        return PolicyResponse(policy=policy.name, auto_excluded=auto,
                              manual=sum(bins) - auto)

    @app.get("/flagged", response_model=FlaggedResponse)
    def get_flagged():
        items = [
            FlaggedItem(
                article_id=row.article_id,
                file_name=row.file_name,
                article_title=row.article_title,
                answers=row.answers,
                outcome_category=row.outcome_category,
                final_decision=row.final_decision,
                verdict=row.verdict,
                reason=row.reason,
                chunks_used=row.chunks_used,
                adjudication=state.adjudications.get(row.article_id),
            )
            for row in state.flagged
        ]
        return FlaggedResponse(items=items)

    @app.post("/adjudication", response_model=AdjudicationResponse)
    def post_adjudication(req: AdjudicationRequest):
        known = {row.article_id for row in state.flagged}
        if req.article_id not in known:
            raise HTTPException(404, f"article {req.article_id} is not flagged")
        if req.article_id in state.adjudications:
            raise HTTPException(
                409,
                f"article {req.article_id} already adjudicated as "
                f"{state.adjudications[req.article_id]!r}",
            )
        state.persist_adjudication(req.article_id, req.decision)
        return AdjudicationResponse(
            article_id=req.article_id,
            decision=req.decision,
            adjudicated_count=len(state.adjudications),
        )

    if static_dir and os.path.isdir(static_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def flagged_from_rows(rows: list[AuditRow]) -> list[AuditRow]:
    """Phase-2 rows awaiting human review: everything not machine-excluded."""
    return [row for row in rows if row.final_decision == "included"]
