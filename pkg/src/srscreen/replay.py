"""Count-replay of the published screening study.

The source corpus is not distributable, so the published stage counts are
frozen here as fixtures; feeding them through the metrics and time models
must reproduce the published rates and hour totals exactly. Nothing in
this module runs a model.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .baseline import POLICY_A, POLICY_B, ConfidenceBin, ThresholdPolicy
from .metrics import (
    ConfusionCounts,
    MetricsReport,
    ReportDocument,
    StageCounts,
    StageMetrics,
    TimeParams,
    TimeReport,
    metrics,
    render_report,
    time_model,
)


@dataclass(frozen=True)
class PaperCounts:
    """Stage counts from the published study (replay fixtures)."""

    total: int = 14439          # articles after dedup (17,346 minus 2,907)
    gold: int = 20              # final inclusions of the completed review
    phase1_kept: int = 3298     # passed title/abstract screening (all 20 gold)
    phase2_kept: int = 78       # flagged for manual review (all 20 gold)
    manual_fulltexts: int = 1680  # full texts the manual route actually read
    trained: int = 2000         # articles hand-labeled to train the baseline
    # five-bin counts over the 12,439 unscreened articles, and where the
    # 20 gold articles landed
    bins: tuple[int, ...] = (6308, 2661, 1345, 1721, 404)
    gold_bins: tuple[int, ...] = (0, 1, 10, 6, 3)

    @property
    def unscreened(self) -> int:
        return self.total - self.trained


@dataclass
class ThresholdReplay:
    policy: ThresholdPolicy
    auto_excluded: int
    manual_queue: int
    false_negatives: int
    report: MetricsReport
    time: TimeReport


@dataclass
class PaperReplay:
    stages: list[StageMetrics]
    thresholds: dict[str, ThresholdReplay]
    pipeline_time: TimeReport
    document: ReportDocument


def _stage(name: str, step_total: int, kept: int, gold_total: int,
           gold_kept: int, note: str = "") -> StageMetrics:
    counts = ConfusionCounts(
        tp=gold_kept,
        fn=gold_total - gold_kept,
        fp=kept - gold_kept,
        tn=step_total - kept - (gold_total - gold_kept),
    )
    return StageMetrics(
        name=name,
        counts=counts,
        report=metrics(counts, auto_excluded_count=step_total - kept),
        remaining=kept,
        note=note,
    )


def replay_paper_counts(counts: PaperCounts | None = None,
                        params: TimeParams | None = None) -> PaperReplay:
    """Rebuild every published rate and hour total from the frozen counts."""
    c = counts or PaperCounts()
    params = params or TimeParams()

    stages = [
        _stage("phase1", c.total, c.phase1_kept, c.gold, c.gold),
        _stage("phase2", c.phase1_kept, c.phase2_kept, c.gold, c.gold,
               note="specificity/PPV/NPV not reported per stage in source"),
        _stage("overall", c.total, c.phase2_kept, c.gold, c.gold),
    ]

    thresholds: dict[str, ThresholdReplay] = {}
    for policy in (POLICY_A, POLICY_B):
        auto = sum(
            n for b, n in zip(ConfidenceBin, c.bins) if b in policy.excluded_bins
        )
        fn = sum(
            g for b, g in zip(ConfidenceBin, c.gold_bins) if b in policy.excluded_bins
        )
        manual = c.unscreened - auto
        conf = ConfusionCounts(
            tp=c.gold - fn, fn=fn, fp=manual - (c.gold - fn), tn=auto - fn
        )
        time = time_model(
            params,
            StageCounts(n_ta=c.total, n_ft=c.manual_fulltexts,
                        manual_queue=manual, remaining=c.phase2_kept),
        )
        thresholds[policy.name] = ThresholdReplay(
            policy=policy,
            auto_excluded=auto,
            manual_queue=manual,
            false_negatives=fn,
            report=metrics(conf, auto_excluded_count=auto),
            time=time,
        )

    pipeline_time = time_model(
        params,
        StageCounts(n_ta=c.total, n_ft=c.manual_fulltexts,
                    manual_queue=thresholds["A"].manual_queue,
                    remaining=c.phase2_kept),
    )
    document = render_report(
        stages,
        baseline_rows=[
            (f"Threshold {name}", t.report, t.manual_queue, t.time)
            for name, t in sorted(thresholds.items())
        ],
        pipeline_time=pipeline_time,
    )
    return PaperReplay(stages=stages, thresholds=thresholds,
                       pipeline_time=pipeline_time, document=document)
