"""Confusion counts, screening performance rates, and the reviewer-time model.

All rates are carried as exact fractions of integer counts; rounding
happens only at render time (half-up, one decimal), so replayed published
counts reproduce their published percentages without float drift.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

from .errors import InputError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise InputError("confusion counts must be non-negative")

    @property
    def step_total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(kept: set[str], excluded: set[str], gold_included: set[str]) -> ConfusionCounts:
    """Count decisions against gold: kept means sent onward, excluded means dropped."""
    overlap = kept & excluded
    if overlap:
        raise InputError(f"kept and excluded overlap: {sorted(overlap)[:5]}")
    stray = gold_included - (kept | excluded)
    if stray:
        raise InputError(f"gold ids outside the step: {sorted(stray)[:5]}")
    return ConfusionCounts(
        tp=len(kept & gold_included),
        fn=len(excluded & gold_included),
        fp=len(kept - gold_included),
        tn=len(excluded - gold_included),
    )


@dataclass(frozen=True)
class MetricsReport:
    aer: Fraction | None
    fnr: Fraction | None
    specificity: Fraction | None
    ppv: Fraction | None
    npv: Fraction | None

    def as_dict(self) -> dict:
        return {
            name: (None if value is None else float(value))
            for name, value in (
                ("aer", self.aer),
                ("fnr", self.fnr),
                ("specificity", self.specificity),
                ("ppv", self.ppv),
                ("npv", self.npv),
            )
        }


def _rate(numerator: int, denominator: int) -> Fraction | None:
    return None if denominator == 0 else Fraction(numerator, denominator)


def metrics(counts: ConfusionCounts, auto_excluded_count: int) -> MetricsReport:
    """The five rates; zero denominators yield None (rendered "n/a")."""
    if auto_excluded_count > counts.step_total:
        raise InputError("auto-excluded count exceeds the step total")
    return MetricsReport(
        aer=_rate(auto_excluded_count, counts.step_total),
        fnr=_rate(counts.fn, counts.fn + counts.tp),
        specificity=_rate(counts.tn, counts.tn + counts.fp),
        ppv=_rate(counts.tp, counts.tp + counts.fp),
        npv=_rate(counts.tn, counts.tn + counts.fn),
    )


def render_percent(value: Fraction | None, decimals: int = 1) -> str:
    """Half-up percentage with trailing '.0' stripped ('5%', '97.6%', 'n/a')."""
    if value is None:
        return "n/a"
    quantum = Decimal(1).scaleb(-decimals) if decimals else Decimal(1)
    pct = (Decimal(value.numerator) * 100 / Decimal(value.denominator)).quantize(
        quantum, rounding=ROUND_HALF_UP
    )
    text = format(pct, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text + "%"


def render_hours(value: Fraction | float) -> str:
    frac = Fraction(value).limit_denominator(10**9) if not isinstance(value, Fraction) else value
    dec = (Decimal(frac.numerator) / Decimal(frac.denominator)).quantize(
        Decimal("0.1"), rounding=ROUND_HALF_UP
    )
    text = format(dec, "f")
    if text.endswith(".0"):
        text = text[:-2]
    return text


@dataclass(frozen=True)
class TimeParams:
    ta_rate: int = 100          # title/abstract articles screened per hour
    ft_minutes: int = 15        # minutes per full-text article
    r1_hours: Fraction = Fraction(20)   # measured baseline training time
    s1_hours: Fraction = Fraction(2)    # measured phase-1 machine time
    s2_hours: Fraction = Fraction(4)    # measured phase-2 machine time

    def __post_init__(self):
        if self.ta_rate <= 0 or self.ft_minutes <= 0:
            raise InputError("time params must be positive")


@dataclass(frozen=True)
class StageCounts:
    n_ta: int            # articles entering title/abstract screening
    n_ft: int            # full texts a manual reviewer would read
    manual_queue: int    # baseline articles left for manual title/abstract work
    remaining: int       # pipeline articles left for manual full-text review


@dataclass(frozen=True)
class TimeReport:
    m1: Fraction
    m2: Fraction
    r1: Fraction
    r2: Fraction
    r_total: Fraction
    s1: Fraction
    s2: Fraction
    sm: Fraction
    s_total: Fraction
    baseline_savings_hours: Fraction
    baseline_savings_fraction: Fraction
    pipeline_savings_hours: Fraction
    pipeline_savings_fraction: Fraction

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


def time_model(params: TimeParams, counts: StageCounts) -> TimeReport:
    """Hour accounting for the manual, baseline, and pipeline routes.

    Baseline savings compare against manual title/abstract work only (M1);
    pipeline savings compare against the full manual route (M1 + M2).
    """
    if counts.manual_queue > counts.n_ta or counts.remaining > counts.n_ta:
        raise InputError("stage counts inconsistent with the pool size")
    m1 = Fraction(counts.n_ta, params.ta_rate)
    m2 = Fraction(counts.n_ft * params.ft_minutes, 60)
    r2 = Fraction(counts.manual_queue, params.ta_rate)
    sm = Fraction(counts.remaining * params.ft_minutes, 60)
    r_total = params.r1_hours + r2
    s_total = params.s1_hours + params.s2_hours + sm
    manual_total = m1 + m2
    return TimeReport(
        m1=m1,
        m2=m2,
        r1=params.r1_hours,
        r2=r2,
        r_total=r_total,
        s1=params.s1_hours,
        s2=params.s2_hours,
        sm=sm,
        s_total=s_total,
        baseline_savings_hours=m1 - r_total,
        baseline_savings_fraction=(m1 - r_total) / m1 if m1 else Fraction(0),
        pipeline_savings_hours=manual_total - s_total,
        pipeline_savings_fraction=(manual_total - s_total) / manual_total
        if manual_total
        else Fraction(0),
    )


@dataclass
class StageMetrics:
    name: str
    counts: ConfusionCounts
    report: MetricsReport
    remaining: int
    note: str = ""


@dataclass
class ReportDocument:
    text: str
    csv_text: str
    results: dict

    def write(self, out_dir, stem="report") -> None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f"{stem}.txt"), "w", encoding="utf-8") as fh:
            fh.write(self.text)
        with open(os.path.join(out_dir, f"{stem}.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(self.csv_text)
        with open(os.path.join(out_dir, f"{stem}.json"), "w", encoding="utf-8") as fh:
            json.dump(self.results, fh, indent=2, sort_keys=True)


def render_report(stages: list[StageMetrics],
                  baseline_rows: list[tuple[str, MetricsReport, int, TimeReport]] | None = None,
                  pipeline_time: TimeReport | None = None) -> ReportDocument:
    """Text/CSV summary mirroring the published table layout, plus JSON results."""
    lines = []
    csv_buf = io.StringIO()
    writer = csv.writer(csv_buf)
    results: dict = {"stages": {}, "baseline": {}, "time": {}}

    writer.writerow(["section", "row", "value"])
    if baseline_rows:
        lines.append("Baseline title/abstract screening (five-bin triage)")
        header = f"{'':38s}" + "".join(f"{name:>18s}" for name, *_ in baseline_rows)
        lines.append(header)

        def row(label, values):
            lines.append(f"{label:38s}" + "".join(f"{v:>18s}" for v in values))
            for (name, *_), v in zip(baseline_rows, values):
                writer.writerow([f"baseline.{name}", label, v])

        row("Articles Remaining (AER)", [
            f"{remaining:,} ({render_percent(rep.aer)})"
            for _, rep, remaining, _ in baseline_rows
        ])
        row("FNR", [render_percent(rep.fnr) for _, rep, _, _ in baseline_rows])
        row("R1", [f"{render_hours(t.r1)} hours" for *_, t in baseline_rows])
        row("R2", [f"{render_hours(t.r2)} hours" for *_, t in baseline_rows])
        row("Total Time (Title/Abstract)", [
            f"{render_hours(t.r_total)} hours" for *_, t in baseline_rows
        ])
        m1 = baseline_rows[0][3].m1
        row(f"Total Time Saved (vs M1 = {render_hours(m1)} hours)", [
            f"{render_hours(t.baseline_savings_hours)} hours "
            f"({render_percent(t.baseline_savings_fraction, decimals=0)})"
            for *_, t in baseline_rows
        ])
        for name, rep, remaining, t in baseline_rows:
            results["baseline"][name] = {
                "metrics": rep.as_dict(),
                "remaining": remaining,
                "time": t.as_dict(),
            }
        lines.append("")

    if stages:
        lines.append("LLM screening pipeline")
        for stage in stages:
            rep = stage.report
            parts = [
                f"remaining {stage.remaining:,}",
                f"AER {render_percent(rep.aer)}",
                f"FNR {render_percent(rep.fnr)}",
                f"specificity {render_percent(rep.specificity)}",
                f"PPV {render_percent(rep.ppv)}",
                f"NPV {render_percent(rep.npv)}",
            ]
            if stage.note:
                parts.append(f"[{stage.note}]")
            lines.append(f"  {stage.name:14s} " + "  ".join(parts))
            for key, value in rep.as_dict().items():
                writer.writerow([f"stage.{stage.name}", key, render_percent(getattr(rep, key))])
            results["stages"][stage.name] = {
                "metrics": rep.as_dict(),
                "remaining": stage.remaining,
                "confusion": {
                    "tp": stage.counts.tp, "fp": stage.counts.fp,
                    "tn": stage.counts.tn, "fn": stage.counts.fn,
                },
            }
        lines.append("")

    if pipeline_time is not None:
        t = pipeline_time
        lines.append("Time accounting (hours)")
        rows = [
            ("M1 (manual title/abstract)", render_hours(t.m1)),
            ("M2 (manual full-text)", render_hours(t.m2)),
            ("S1 (pipeline phase 1)", render_hours(t.s1)),
            ("S2 (pipeline phase 2)", render_hours(t.s2)),
            ("SM (manual review of remainder)", render_hours(t.sm)),
            ("Total Time (Title/Abstract+Full-text)", render_hours(t.s_total)),
            (
                f"Total Time Saved (vs M1+M2 = {render_hours(t.m1 + t.m2)} hours)",
                f"{render_hours(t.pipeline_savings_hours)} hours "
                f"({render_percent(t.pipeline_savings_fraction)})",
            ),
        ]
        for label, value in rows:
            lines.append(f"  {label:42s} {value}")
            writer.writerow(["time", label, value])
        results["time"] = t.as_dict()

    return ReportDocument(text="\n".join(lines) + "\n", csv_text=csv_buf.getvalue(),
                          results=results)
