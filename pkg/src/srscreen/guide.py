"""Guide-driven screening decisions.

The title/abstract and full-text decision procedures are encoded as data
(`Guide` objects loadable from YAML) and a pair of pure evaluation
functions that aggregate per-question answers into include/exclude/retain
verdicts. Uncertainty never excludes: unsure answers retain in phase 1 and
pass the gate in phase 2, pushing the article toward human review.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import yaml

from .errors import InputError

log = logging.getLogger(__name__)


class AnswerValue(str, enum.Enum):
    YES = "Yes"
    NO = "No"
    UNSURE = "Unsure"


class Verdict(str, enum.Enum):
    INCLUDE = "Include"
    EXCLUDE = "Exclude"
    RETAIN = "Retain"


class Phase(str, enum.Enum):
    TITLE_ABSTRACT = "TitleAbstract"
    FULL_TEXT = "FullText"


class Polarity(str, enum.Enum):
    INCLUSION_GATE = "InclusionGate"
    EXCLUSION_GATE = "ExclusionGate"
    OUTCOME = "Outcome"


@dataclass(frozen=True)
class Answer:
    value: AnswerValue
    raw: str  # verbatim model output, kept for the audit trail
    question_id: str
    unparsed: bool = False


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    polarity: Polarity
    tag: str | None = None  # optional metadata emitted when the gate fires


@dataclass(frozen=True)
class OutcomeSet:
    labels: frozenset[str] = frozenset()
    unsure: bool = False

    def __post_init__(self):
        if not self.unsure and not self.labels:
            raise InputError("OutcomeSet without labels must be marked unsure")


@dataclass(frozen=True)
class Decision:
    verdict: Verdict
    reason: str
    failing_question: str | None = None
    exclusion_code: int | None = None
    unsure_questions: tuple[str, ...] = ()
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.verdict is Verdict.EXCLUDE:
            if self.failing_question is None and self.exclusion_code is None:
                raise InputError("Exclude decisions need a failing question or code")
        elif self.exclusion_code is not None:
            raise InputError("only Exclude decisions may carry an exclusion code")


@dataclass(frozen=True)
class Guide:
    phase: Phase
    inclusion_questions: tuple[Question, ...]
    exclusion_questions: tuple[Question, ...] = ()
    outcome_question: Question | None = None
    required_outcome: str = "Falls"

    def all_questions(self) -> tuple[Question, ...]:
        qs = self.inclusion_questions + self.exclusion_questions
        if self.outcome_question is not None:
            qs = qs + (self.outcome_question,)
        return qs

    def validate(self) -> list[str]:
        problems = []
        ids = [q.id for q in self.all_questions()]
        if len(ids) != len(set(ids)):
            problems.append("question ids must be unique")
        for q in self.all_questions():
            if not q.text.strip():
                problems.append(f"question {q.id} has empty text")
        if self.phase is Phase.TITLE_ABSTRACT:
            if not self.inclusion_questions:
                problems.append("phase-1 guide needs at least one inclusion question")
            if self.outcome_question is not None:
                problems.append("phase-1 guide must not have an outcome question")
        else:
            if len(self.inclusion_questions) != 5:
                problems.append("phase-2 guide needs exactly 5 gate questions")
            if self.exclusion_questions:
                problems.append("phase-2 guide takes no exclusion questions")
            if self.outcome_question is None:
                problems.append("phase-2 guide needs an outcome question")
        return problems


# Coarse exclusion-code defaults per failed full-text gate. The guide's
# yes/no gates cannot distinguish the fine-grained reason codes, so each
# gate maps to the first code of its group; the audit reason says so.
PHASE2_GATE_CODES = {"Q1": 1, "Q2": 4, "Q3": 17, "Q4": 18, "Q5": 20}
OUTCOME_CODE = 20

AnswerSet = dict[str, Answer]


def _fill_missing(answers: AnswerSet, questions) -> AnswerSet:
    filled = dict(answers)
    for q in questions:
        if q.id not in filled:
            log.warning("missing answer for %s; treating as Unsure", q.id)
            filled[q.id] = Answer(AnswerValue.UNSURE, raw="", question_id=q.id)
    return filled


def evaluate_phase1(answers: AnswerSet, guide: Guide, has_abstract: bool) -> Decision:
    """Title/abstract verdict.

    Order is fixed: no abstract includes outright; any inclusion gate
    answered No excludes (first in guide order); any exclusion gate
    answered Yes excludes; any remaining Unsure retains; otherwise include.
    """
    if not has_abstract:
        return Decision(Verdict.INCLUDE, reason="no abstract")
    answers = _fill_missing(answers, guide.inclusion_questions + guide.exclusion_questions)

    for q in guide.inclusion_questions:
        if answers[q.id].value is AnswerValue.NO:
            return Decision(
                Verdict.EXCLUDE,
                reason=f"inclusion gate {q.id} answered No",
                failing_question=q.id,
                tags=(q.tag,) if q.tag else (),
            )
    for q in guide.exclusion_questions:
        if answers[q.id].value is AnswerValue.YES:
            return Decision(
                Verdict.EXCLUDE,
                reason=f"exclusion gate {q.id} answered Yes",
                failing_question=q.id,
                tags=(q.tag,) if q.tag else (),
            )
    unsure = tuple(
        q.id
        for q in guide.inclusion_questions + guide.exclusion_questions
        if answers[q.id].value is AnswerValue.UNSURE
    )
    if unsure:
        return Decision(
            Verdict.RETAIN,
            reason=f"unsure on {', '.join(unsure)}",
            unsure_questions=unsure,
        )
    return Decision(Verdict.INCLUDE, reason="all gates passed")


def evaluate_phase2(answers: AnswerSet, outcomes: OutcomeSet, guide: Guide) -> Decision:
    """Full-text verdict from the five gates plus the outcome category.

    A gate answered No excludes with that gate's coarse reason code; unsure
    gates pass (flagged in the decision). The outcome question then rules:
    unsure retains, and inclusion requires the required outcome label
    (default "Falls").
    """
    answers = _fill_missing(answers, guide.inclusion_questions)

    for q in guide.inclusion_questions:
        if answers[q.id].value is AnswerValue.NO:
            return Decision(
                Verdict.EXCLUDE,
                reason=f"gate {q.id} answered No (default code for this gate's group)",
                failing_question=q.id,
                exclusion_code=PHASE2_GATE_CODES.get(q.id, OUTCOME_CODE),
            )
    unsure = tuple(
        q.id for q in guide.inclusion_questions if answers[q.id].value is AnswerValue.UNSURE
    )
    if outcomes.unsure:
        return Decision(
            Verdict.RETAIN,
            reason="outcome category unsure",
            unsure_questions=unsure,
        )
    if guide.required_outcome in outcomes.labels:
        suffix = f" (unsure on {', '.join(unsure)})" if unsure else ""
        return Decision(
            Verdict.INCLUDE,
            reason=f"gates passed, outcome includes {guide.required_outcome}{suffix}",
            unsure_questions=unsure,
        )
    qid = guide.outcome_question.id if guide.outcome_question else None
    return Decision(
        Verdict.EXCLUDE,
        reason=f"outcome {sorted(outcomes.labels)} lacks {guide.required_outcome}",
        failing_question=qid,
        exclusion_code=OUTCOME_CODE,
    )


def load_guide(path) -> Guide:
    """Load and validate a guide config (YAML)."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return guide_from_dict(data)


def guide_from_dict(data: dict) -> Guide:
    try:
        phase = Phase(data["phase"])
    except (KeyError, ValueError):
        raise InputError(f"guide config needs phase TitleAbstract or FullText, got {data.get('phase')!r}")

    def build(qdicts, polarity):
        out = []
        for q in qdicts or []:
            out.append(
                Question(
                    id=str(q["id"]),
                    text=str(q.get("text", "")),
                    polarity=polarity,
                    tag=q.get("tag"),
                )
            )
        return tuple(out)

    outcome_q = None
    if data.get("outcome_question"):
        q = data["outcome_question"]
        outcome_q = Question(id=str(q["id"]), text=str(q.get("text", "")), polarity=Polarity.OUTCOME)
    guide = Guide(
        phase=phase,
        inclusion_questions=build(data.get("inclusion_questions"), Polarity.INCLUSION_GATE),
        exclusion_questions=build(data.get("exclusion_questions"), Polarity.EXCLUSION_GATE),
        outcome_question=outcome_q,
        required_outcome=data.get("required_outcome", "Falls"),
    )
    problems = guide.validate()
    if problems:
        raise InputError("invalid guide config: " + "; ".join(problems))
    return guide


def builtin_phase1_guide() -> Guide:
    """The shipped title/abstract guide: four inclusion and two exclusion gates."""
    inclusion = (
        Question(
            "Q1",
            "Is the study potentially designed as a systematic review and "
            "meta-analysis of randomized controlled trials?",
            Polarity.INCLUSION_GATE,
        ),
        Question(
            "Q2",
            "Does the study's population include men and/or women age ≥ 50 years, "
            "community dwelling and/or institutionalized?",
            Polarity.INCLUSION_GATE,
        ),
        Question(
            "Q3",
            "Is there an intervention of vitamin D, with or without Calcium supplementation?",
            Polarity.INCLUSION_GATE,
        ),
        Question(
            "Q4",
            "Is the comparator vitamin D placebo or control? Or is this information "
            "uncertain? Explain",
            Polarity.INCLUSION_GATE,
        ),
    )
    exclusion = (
        Question(
            "Q5",
            "Does the paper's population include pregnant women, individuals with "
            "advanced diseases like chronic liver failure, chronic renal failure, "
            "cancer, or individuals on steroids?",
            Polarity.EXCLUSION_GATE,
        ),
        Question(
            "Q6",
            "Does the paper primarily focus on active Vitamin D like calcitriol, or "
            "paricalcitol, or doxercalciferol, or alfacalcidol, or falecalcitriol, or "
            "22-oxacalcitriol, or synthetic vitamin D or vitamin D analogues?",
            Polarity.EXCLUSION_GATE,
        ),
    )
    return Guide(
        phase=Phase.TITLE_ABSTRACT,
        inclusion_questions=inclusion,
        exclusion_questions=exclusion,
    )


def builtin_phase2_guide() -> Guide:
    """The shipped full-text guide: five gates plus the outcome category question."""
    suffix = " Answer with 'Yeah', 'Nope' or 'Unsure.'"
    gates = (
        Question(
            "Q1",
            "Is the study design a systematic review with or without meta-analysis "
            "of randomized controlled trials?" + suffix,
            Polarity.INCLUSION_GATE,
        ),
        Question(
            "Q2",
            "Is the study population's age ≥ 50 years, community dwelling and/or "
            "institutionalized?" + suffix,
            Polarity.INCLUSION_GATE,
        ),
        Question(
            "Q3",
            "Is the intervention vitamin D, with or without Calcium supplementation "
            "(± Ca)?" + suffix,
            Polarity.INCLUSION_GATE,
        ),
        Question(
            "Q4",
            "Is the comparator vitamin D (± Ca), placebo or control?" + suffix,
            Polarity.INCLUSION_GATE,
        ),
        Question(
            "Q5",
            "Is one of the outcomes falls, fractures or mortality?" + suffix,
            Polarity.INCLUSION_GATE,
        ),
    )
    outcome = Question(
        "Q6",
        "Is one of the outcomes falls, fractures or mortality? Answer with one of "
        "the following categories: 'Falls', 'Fractures', 'Mortality', or 'Unsure'.",
        Polarity.OUTCOME,
    )
    return Guide(
        phase=Phase.FULL_TEXT,
        inclusion_questions=gates,
        outcome_question=outcome,
    )
