"""Run orchestration: the two screening phases, audit logging, checkpoints.

Each phase streams per-article checkpoint records (line-delimited JSON) so
a killed run resumes at the next article and still produces byte-identical
final artifacts. Audit CSVs carry the verbatim model answers per question;
the final decision column is always recomputable from them.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field

from .corpus import ArticleStore
from .errors import BackendUnavailableError, InputError
from .gateway import ChatGateway, build_prompt, parse_answer
from .guide import (
    Answer,
    AnswerValue,
    Decision,
    Guide,
    OutcomeSet,
    Phase,
    Verdict,
    evaluate_phase1,
    evaluate_phase2,
)
from .rag import RagAnswerer

log = logging.getLogger(__name__)

PHASE2_AUDIT_HEADER = [
    "File name", "Article Title", "Q1", "Q2", "Q3", "Q4", "Q5",
    "Outcome Category", "Final decision",
]
PHASE1_AUDIT_HEADER = [
    "File name", "Article Title", "Q1", "Q2", "Q3", "Q4", "Q5", "Q6",
    "Final decision",
]

STAGE_ORDER = ["ingest", "dedup", "screen_ta", "screen_ft", "metrics"]


@dataclass
class AuditRow:
    article_id: str
    file_name: str
    article_title: str
    answers: dict[str, str]          # question id -> verbatim model output
    outcome_category: str            # comma-joined labels, "Unsure", or blank
    final_decision: str              # "included" / "excluded"
    verdict: str                     # Include / Exclude / Retain
    reason: str
    flags: list[str] = field(default_factory=list)
    chunks_used: dict[str, list[int]] = field(default_factory=dict)


@dataclass
class PhaseResult:
    kept_ids: list[str]              # include + retain (anything not excluded)
    excluded_ids: list[str]
    rows: list[AuditRow]
    measured_hours: float
    complete: bool = True


def _decision_to_cell(verdict: Verdict) -> str:
    return "excluded" if verdict is Verdict.EXCLUDE else "included"


class Checkpoint:
    """Append-only per-article record of a phase, used for resume."""

    def __init__(self, path):
        self.path = path

    def load(self) -> dict[str, dict]:
        rows: dict[str, dict] = {}
        if not os.path.exists(self.path):
            return rows
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    rows[row["article_id"]] = row
                except (json.JSONDecodeError, KeyError):
                    raise InputError(
                        f"corrupted checkpoint {self.path}:{lineno}; refusing to "
                        "resume -- delete the file to restart this stage"
                    )
        return rows

    def append(self, row: dict) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def _row_from_checkpoint(data: dict) -> AuditRow:
    return AuditRow(
        article_id=data["article_id"],
        file_name=data["file_name"],
        article_title=data["article_title"],
        answers=data["answers"],
        outcome_category=data.get("outcome_category", ""),
        final_decision=data["final_decision"],
        verdict=data["verdict"],
        reason=data.get("reason", ""),
        flags=data.get("flags", []),
        chunks_used=data.get("chunks_used", {}),
    )


def _row_to_checkpoint(row: AuditRow) -> dict:
    return {
        "article_id": row.article_id,
        "file_name": row.file_name,
        "article_title": row.article_title,
        "answers": row.answers,
        "outcome_category": row.outcome_category,
        "final_decision": row.final_decision,
        "verdict": row.verdict,
        "reason": row.reason,
        "flags": row.flags,
        "chunks_used": row.chunks_used,
    }


def run_phase1(store: ArticleStore, guide: Guide, gateway: ChatGateway,
               run_dir, limit: int | None = None, dry_run: bool = False) -> PhaseResult:
    """Title/abstract screening over the whole store.

    Questions go out in guide order and short-circuit on a definitive
    Exclude (inclusion gate No, exclusion gate Yes); the skipped cells stay
    blank in the audit. Backend exhaustion on a question degrades that
    answer to Unsure and flags the article.
    """
    os.makedirs(run_dir, exist_ok=True)
    checkpoint = Checkpoint(os.path.join(run_dir, "phase1.checkpoint.jsonl"))
    done = checkpoint.load()
    start = time.perf_counter()
    processed = 0
    complete = True

    for article in store.articles():
        if article.id in done:
            continue
        if limit is not None and processed >= limit:
            complete = False
            break
        view = article.screening_view()
        has_abstract = bool(view.abstract)
        answers: dict[str, Answer] = {}
        raw_answers: dict[str, str] = {}
        flags: list[str] = []

        if has_abstract and not dry_run:
            for question in guide.inclusion_questions + guide.exclusion_questions:
                bundle = build_prompt(question, view, Phase.TITLE_ABSTRACT)
                try:
                    response = gateway.ask(bundle)
                    answer = parse_answer(response.text, question_id=question.id)
                    raw_answers[question.id] = response.text
                except BackendUnavailableError as exc:
                    log.warning("backend exhausted on %s/%s: %s", article.id, question.id, exc)
                    answer = Answer(AnswerValue.UNSURE, raw="", question_id=question.id)
                    flags.append(f"backend_failed:{question.id}")
                answers[question.id] = answer
                if answer.unparsed:
                    flags.append(f"unparsed:{question.id}")
                is_inclusion = question in guide.inclusion_questions
                if is_inclusion and answer.value is AnswerValue.NO:
                    break
                if not is_inclusion and answer.value is AnswerValue.YES:
                    break
        if dry_run:
            for question in guide.inclusion_questions + guide.exclusion_questions:
                bundle = build_prompt(question, view, Phase.TITLE_ABSTRACT)
                _write_dry_run_bundle(run_dir, bundle)
            continue

        decision = evaluate_phase1(answers, guide, has_abstract)
        row = AuditRow(
            article_id=article.id,
            file_name=article.fulltext_name or "",
            article_title=view.title,
            answers=raw_answers,
            outcome_category="",
            final_decision=_decision_to_cell(decision.verdict),
            verdict=decision.verdict.value,
            reason=decision.reason,
            flags=flags + list(decision.tags),
        )
        checkpoint.append(_row_to_checkpoint(row))
        done[article.id] = _row_to_checkpoint(row)
        processed += 1

    rows = [_row_from_checkpoint(done[aid]) for aid in sorted(done)]
    kept = [r.article_id for r in rows if r.verdict != Verdict.EXCLUDE.value]
    excluded = [r.article_id for r in rows if r.verdict == Verdict.EXCLUDE.value]
    return PhaseResult(
        kept_ids=kept,
        excluded_ids=excluded,
        rows=rows,
        measured_hours=(time.perf_counter() - start) / 3600,
        complete=complete,
    )


def run_phase2(store: ArticleStore, kept_ids: list[str], guide: Guide,
               rag: RagAnswerer, run_dir, limit: int | None = None) -> PhaseResult:
    """RAG full-text screening of the phase-1 survivors.

    Missing full text or a failed index build can only retain (fail-safe
    toward the manual queue), never exclude.
    """
    os.makedirs(run_dir, exist_ok=True)
    checkpoint = Checkpoint(os.path.join(run_dir, "phase2.checkpoint.jsonl"))
    done = checkpoint.load()
    start = time.perf_counter()
    processed = 0
    complete = True

    for article_id in sorted(kept_ids):
        if article_id in done:
            continue
        if limit is not None and processed >= limit:
            complete = False
            break
        article = store.get(article_id)
        view = article.screening_view()
        raw_answers: dict[str, str] = {}
        chunks_used: dict[str, list[int]] = {}
        flags: list[str] = []

        if not view.fulltext:
            decision = Decision(Verdict.RETAIN, reason="no full text attached")
            flags.append("no_fulltext")
            outcome_cell = ""
        else:
            try:
                index = rag.index_for(view)
            except Exception as exc:  # embedding/chunker failure: fail safe
                log.warning("rag index failed for %s: %s", article_id, exc)
                index = None
            if index is None:
                decision = Decision(Verdict.RETAIN, reason="rag failed")
                flags.append("rag_failed")
                outcome_cell = ""
            else:
                answers: dict[str, Answer] = {}
                for question in guide.inclusion_questions:
                    try:
                        answer, raw, used = rag.answer_question(view, question, index)
                        raw_answers[question.id] = raw
                        chunks_used[question.id] = used
                    except BackendUnavailableError as exc:
                        log.warning("backend exhausted on %s/%s: %s",
                                    article_id, question.id, exc)
                        answer = Answer(AnswerValue.UNSURE, raw="", question_id=question.id)
                        flags.append(f"backend_failed:{question.id}")
                    answers[question.id] = answer
                    if answer.value is AnswerValue.NO:
                        break
                failed_gate = any(
                    a.value is AnswerValue.NO for a in answers.values()
                )
                outcomes = OutcomeSet(unsure=True)
                outcome_cell = ""
                if not failed_gate and guide.outcome_question is not None:
                    try:
                        outcomes, raw, used = rag.answer_outcomes(
                            view, guide.outcome_question, index
                        )
                        chunks_used[guide.outcome_question.id] = used
                        outcome_cell = (
                            "Unsure" if outcomes.unsure
                            else ", ".join(sorted(outcomes.labels))
                        )
                    except BackendUnavailableError as exc:
                        log.warning("backend exhausted on %s outcome: %s", article_id, exc)
                        flags.append("backend_failed:outcome")
                        outcome_cell = ""
                decision = evaluate_phase2(answers, outcomes, guide)

        row = AuditRow(
            article_id=article_id,
            file_name=article.fulltext_name or "",
            article_title=view.title,
            answers=raw_answers,
            outcome_category=outcome_cell,
            final_decision=_decision_to_cell(decision.verdict),
            verdict=decision.verdict.value,
            reason=decision.reason,
            flags=flags,
            chunks_used=chunks_used,
        )
        checkpoint.append(_row_to_checkpoint(row))
        done[article_id] = _row_to_checkpoint(row)
        processed += 1

    rows = [_row_from_checkpoint(done[aid]) for aid in sorted(done)]
    kept = [r.article_id for r in rows if r.verdict != Verdict.EXCLUDE.value]
    excluded = [r.article_id for r in rows if r.verdict == Verdict.EXCLUDE.value]
    return PhaseResult(
        kept_ids=kept,
        excluded_ids=excluded,
        rows=rows,
        measured_hours=(time.perf_counter() - start) / 3600,
        complete=complete,
    )


def _write_dry_run_bundle(run_dir, bundle) -> None:
    path = os.path.join(run_dir, "dry_run_bundles.jsonl")
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps({
            "article_id": bundle.article_id,
            "question_id": bundle.question_id,
            "phase": bundle.phase.value,
            "prompt_hash": bundle.prompt_hash,
            "user_prompt": bundle.user_prompt,
        }, ensure_ascii=False, sort_keys=True) + "\n")


def export_audit(rows: list[AuditRow], path, phase: Phase) -> None:
    """Write the audit CSV (UTF-8, RFC-4180, ascending article id)."""
    if phase is Phase.FULL_TEXT:
        header = PHASE2_AUDIT_HEADER
        question_ids = ["Q1", "Q2", "Q3", "Q4", "Q5"]
    else:
        header = PHASE1_AUDIT_HEADER
        question_ids = ["Q1", "Q2", "Q3", "Q4", "Q5", "Q6"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in sorted(rows, key=lambda r: r.article_id):
            cells = [row.file_name, row.article_title]
            cells += [row.answers.get(qid, "") for qid in question_ids]
            if phase is Phase.FULL_TEXT:
                cells.append(row.outcome_category)
            cells.append(row.final_decision)
            writer.writerow(cells)


class RunManifest:
    """Stage-status bookkeeping for one run directory."""

    def __init__(self, run_dir, run_id: str | None = None, config_hash: str = ""):
        self.path = os.path.join(run_dir, "manifest.json")
        if os.path.exists(self.path):
            with open(self.path, encoding="utf-8") as fh:
                self.data = json.load(fh)
        else:
            self.data = {
                "run_id": run_id or hashlib.sha1(os.path.abspath(run_dir).encode()).hexdigest()[:8],
                "config_hash": config_hash,
                "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
                "stages": {name: {"status": "pending", "counts": {}} for name in STAGE_ORDER},
            }
            self._save()

    def _save(self) -> None:
        self.data["updated"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        with open(self.path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)

    def mark(self, stage: str, status: str, counts: dict | None = None) -> None:
        if stage not in self.data["stages"]:
            raise InputError(f"unknown stage {stage}")
        if status == "done":
            idx = STAGE_ORDER.index(stage)
            for prior in STAGE_ORDER[:idx]:
                if self.data["stages"][prior]["status"] != "done":
                    raise InputError(f"stage {stage} cannot finish before {prior}")
        self.data["stages"][stage]["status"] = status
        if counts:
            self.data["stages"][stage]["counts"] = counts
        self._save()

    def status(self, stage: str) -> str:
        return self.data["stages"][stage]["status"]


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, ensure_ascii=False)
    return hashlib.sha1(blob.encode("utf-8")).hexdigest()[:12]
