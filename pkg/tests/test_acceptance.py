"""Acceptance gate: one test per headline claim, each printing a PASS/FAIL line.

Expected values are either computed by an independent in-test reference
(brute force, recounting) or checked against the published tables at the
stated tolerances. Run with `pytest tests/test_acceptance.py -v -s`.
"""

import functools
import itertools
import random
import time
from fractions import Fraction

import numpy as np

from srscreen.baseline import (
    POLICY_A,
    POLICY_B,
    ActiveLearningLoop,
    ConfidenceBin,
    SimulatedReviewer,
    apply_threshold,
)
from srscreen.corpus import Article, BibRecord, dedup, normalize_key, trigram_similarity
from srscreen.gateway import ChatGateway, KeywordRuleBackend
from srscreen.guide import (
    Answer,
    AnswerValue,
    OutcomeSet,
    Phase,
    builtin_phase1_guide,
    builtin_phase2_guide,
    evaluate_phase1,
    evaluate_phase2,
)
from srscreen.metrics import render_hours, render_percent
from srscreen.pipeline import export_audit, run_phase1, run_phase2
from srscreen.rag import HashEmbeddingBackend, RagAnswerer, VectorIndex, build_index
from srscreen.replay import replay_paper_counts
from srscreen.synth import KEYWORD_RULES, synthetic_baseline_records, synthetic_screening_store

PP = 0.0005   # 0.05 percentage points, as a fraction
HOURS = Fraction(5, 100)


def criterion(name, budget_seconds):
    """Each acceptance test reports one PASS/FAIL line and a runtime budget."""

    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                fn(*args, **kwargs)
                elapsed = time.perf_counter() - start
                assert elapsed < budget_seconds, (
                    f"runtime {elapsed:.1f}s exceeds the {budget_seconds}s budget"
                )
            except BaseException:
                print(f"ACCEPTANCE FAIL: {name}")
                raise
            print(f"ACCEPTANCE PASS: {name} ({elapsed:.2f}s)")

        return wrapper

    return deco


def pct(value):
    return float(value) * 100


# ----------------------------------------------------------------------------
@criterion("paper-count replay reproduces published rates", budget_seconds=1)
def test_paper_count_replay():
    replay = replay_paper_counts()
    stages = {s.name: s.report for s in replay.stages}

    assert abs(pct(stages["phase1"].aer) - 77.2) <= 0.05
    assert pct(stages["phase1"].fnr) == 0
    assert abs(pct(stages["phase2"].aer) - 97.63) <= 0.05
    assert pct(stages["phase2"].fnr) == 0
    assert abs(pct(stages["overall"].aer) - 99.5) <= 0.05
    assert abs(pct(stages["overall"].specificity) - 99.6) <= 0.05
    assert abs(pct(stages["overall"].ppv) - 25.6) <= 0.05
    assert pct(stages["overall"].npv) == 100

    a = replay.thresholds["A"]
    b = replay.thresholds["B"]
    assert (a.auto_excluded, a.manual_queue) == (8969, 3470)
    assert (b.auto_excluded, b.manual_queue) == (6308, 6131)
    assert abs(pct(a.report.fnr) - 5.0) <= 0.05
    assert pct(b.report.fnr) == 0

    # the rendered table cell must read 97.6%, not 97.63%
    assert render_percent(stages["phase2"].aer) == "97.6%"
    assert "97.6%" in replay.document.text


# ----------------------------------------------------------------------------
@criterion("time-model replay reproduces published hours", budget_seconds=1)
def test_time_model_replay():
    replay = replay_paper_counts()
    t = replay.pipeline_time
    a = replay.thresholds["A"].time
    b = replay.thresholds["B"].time

    for got, want in [
        (t.m1, Fraction(1444, 10)), (t.m2, Fraction(420)),
        (a.r_total, Fraction(547, 10)), (a.baseline_savings_hours, Fraction(897, 10)),
        (b.r_total, Fraction(813, 10)), (b.baseline_savings_hours, Fraction(631, 10)),
        (t.s_total, Fraction(255, 10)), (t.pipeline_savings_hours, Fraction(5389, 10)),
    ]:
        assert abs(got - want) <= HOURS, (got, want)

    assert abs(pct(a.baseline_savings_fraction) - 62) <= 0.5
    assert abs(pct(b.baseline_savings_fraction) - 44) <= 0.5
    assert abs(pct(t.pipeline_savings_fraction) - 95.5) <= 0.5
    assert render_hours(t.s_total) == "25.5"


# ----------------------------------------------------------------------------
@criterion("decision logic matches brute-force references exhaustively",
           budget_seconds=10)
def test_decision_logic_exhaustive():
    p1 = builtin_phase1_guide()
    p2 = builtin_phase2_guide()
    values = [AnswerValue.YES, AnswerValue.NO, AnswerValue.UNSURE]
    qids1 = ["Q1", "Q2", "Q3", "Q4", "Q5", "Q6"]
    qids2 = ["Q1", "Q2", "Q3", "Q4", "Q5"]

    def wrap(mapping):
        return {q: Answer(v, raw=v.value, question_id=q) for q, v in mapping.items()}

    def ref1(vals, has_abstract):
        if not has_abstract:
            return "Include"
        for q in qids1[:4]:
            if vals[q] is AnswerValue.NO:
                return "Exclude"
        for q in qids1[4:]:
            if vals[q] is AnswerValue.YES:
                return "Exclude"
        if any(v is AnswerValue.UNSURE for v in vals.values()):
            return "Retain"
        return "Include"

    def ref2(vals, outcomes):
        for q in qids2:
            if vals.get(q, AnswerValue.UNSURE) is AnswerValue.NO:
                return "Exclude"
        if outcomes.unsure:
            return "Retain"
        return "Include" if "Falls" in outcomes.labels else "Exclude"

    for combo in itertools.product(values, repeat=6):
        vals = dict(zip(qids1, combo))
        for has_abstract in (True, False):
            got = evaluate_phase1(wrap(vals), p1, has_abstract).verdict.value
            assert got == ref1(vals, has_abstract), (vals, has_abstract)

    outcome_sets = [
        OutcomeSet(labels=frozenset(c))
        for r in (1, 2, 3)
        for c in itertools.combinations(("Falls", "Fractures", "Mortality"), r)
    ] + [OutcomeSet(unsure=True), OutcomeSet(labels=frozenset({"Falls"}), unsure=True)]
    assert len(outcome_sets) == 9
    for combo in itertools.product(values, repeat=5):
        vals = dict(zip(qids2, combo))
        for outcomes in outcome_sets:
            got = evaluate_phase2(wrap(vals), outcomes, p2).verdict.value
            assert got == ref2(vals, outcomes), (vals, outcomes)

    # the four audit-sheet rows
    yes5 = {q: AnswerValue.YES for q in qids2}
    row1 = evaluate_phase2(wrap({**yes5, "Q1": AnswerValue.NO}),
                           OutcomeSet(unsure=True), p2)
    assert row1.verdict.value == "Exclude" and row1.exclusion_code == 1

    row2 = evaluate_phase2(wrap(yes5), OutcomeSet(labels=frozenset({"Fractures"})), p2)
    assert row2.verdict.value == "Exclude" and row2.exclusion_code == 20

    row3 = evaluate_phase2(wrap({**yes5, "Q4": AnswerValue.UNSURE}),
                           OutcomeSet(labels=frozenset({"Falls"})), p2)
    assert row3.verdict.value == "Include"

    blank_q1 = {q: AnswerValue.YES for q in qids2[1:]}
    row4 = evaluate_phase2(wrap(blank_q1),
                           OutcomeSet(labels=frozenset({"Falls", "Fractures"})), p2)
    assert row4.verdict.value == "Include"


# ----------------------------------------------------------------------------
@criterion("end-to-end offline pipeline: FNR 0, <=10% kept, byte-identical "
           "reruns and kill-and-resume", budget_seconds=120)
def test_end_to_end_pipeline(tmp_path):
    p1_guide = builtin_phase1_guide()
    p2_guide = builtin_phase2_guide()

    def full_run(run_dir, kill_after=None):
        store, gold = synthetic_screening_store(n=1000, n_gold=20, n_decoys=10,
                                                seed=0)
        gateway = ChatGateway(KeywordRuleBackend(KEYWORD_RULES))
        rag = RagAnswerer(gateway, HashEmbeddingBackend(),
                          cache_dir=str(run_dir / "cache"))
        if kill_after is not None:
            partial = run_phase1(store, p1_guide, gateway, run_dir / "p1",
                                 limit=kill_after)
            assert not partial.complete
        p1 = run_phase1(store, p1_guide, gateway, run_dir / "p1")
        p2 = run_phase2(store, p1.kept_ids, p2_guide, rag, run_dir / "p2")
        export_audit(p1.rows, run_dir / "phase1_audit.csv", Phase.TITLE_ABSTRACT)
        export_audit(p2.rows, run_dir / "phase2_audit.csv", Phase.FULL_TEXT)
        return store, gold, p1, p2

    store, gold, p1, p2 = full_run(tmp_path / "a")
    kept = set(p2.kept_ids)
    assert gold <= set(p1.kept_ids), "gold lost at title/abstract stage"
    assert gold <= kept, "gold lost at full-text stage (FNR != 0)"
    assert len(kept) <= 100, f"kept {len(kept)} > 10% of the corpus"

    full_run(tmp_path / "b")                      # independent rerun
    full_run(tmp_path / "c", kill_after=400)      # killed and resumed

    for name in ("phase1_audit.csv", "phase2_audit.csv"):
        ref = (tmp_path / "a" / name).read_bytes()
        assert (tmp_path / "b" / name).read_bytes() == ref, f"{name} differs on rerun"
        assert (tmp_path / "c" / name).read_bytes() == ref, f"{name} differs after resume"


# ----------------------------------------------------------------------------
@criterion("retrieval equals exhaustive cosine ranking; plant-and-probe answers "
           "from retrieved context", budget_seconds=30)
def test_retrieval_oracle():
    rng = np.random.default_rng(13)
    for trial in range(100):
        n = int(rng.integers(1, 60))
        d = int(rng.integers(2, 32))
        vectors = rng.normal(size=(n, d))
        if trial % 5 == 0 and n >= 2:
            vectors[1] = vectors[0]  # force a cosine tie
        query = rng.normal(size=d)
        k = int(rng.integers(1, 12))
        index = VectorIndex("a", d, chunks=[None] * n, vectors=vectors)
        got = [i for i, _ in index.top_k(query, k)]
        cos = vectors @ query / (np.linalg.norm(vectors, axis=1)
                                 * np.linalg.norm(query))
        want = sorted(range(n), key=lambda i: (-cos[i], i))[: min(k, n)]
        assert got == want, f"trial {trial}"

    # plant-and-probe: the answer text exists only in one buried passage
    pyrng = random.Random(99)
    from srscreen.corpus import ArticleView
    from srscreen.guide import Polarity, Question

    vocabulary = [f"w{n:03d}" for n in range(200)]
    for probe in range(5):
        filler = " ".join(pyrng.choice(vocabulary) for _ in range(3000))
        planted = ("The primary outcome was falls measured prospectively with "
                   "monthly diaries in this vitamin d supplementation trial.")
        pos = pyrng.randint(0, len(filler))
        text = filler[:pos] + " " + planted + " " + filler[pos:]
        view = ArticleView(id=f"p{probe}", title="T", abstract=None, fulltext=text)
        be = HashEmbeddingBackend()
        index = build_index(view, be, size=500, overlap=100)
        # the mock only answers yes when the planted phrase reaches the prompt
        gateway = ChatGateway(KeywordRuleBackend(
            [(r".", r"primary outcome was falls", "yes")], default="no"))
        answerer = RagAnswerer(gateway, be, k=3, chunk_size=500, overlap=100)
        q = Question(id="Q5", text="Was the primary outcome falls in the vitamin "
                                   "d supplementation trial?",
                     polarity=Polarity.INCLUSION_GATE)
        answer, raw, used = answerer.answer_question(view, q, index)
        assert raw == "yes", f"probe {probe}: planted passage not retrieved"
        assert used, "no chunk indices recorded"


# ----------------------------------------------------------------------------
@criterion("baseline loop: stable within 20 batches, Threshold B FNR 0 with "
           "AER >= 30%, nesting/conservation invariants", budget_seconds=120)
def test_baseline_loop_properties():
    records, gold = synthetic_baseline_records(n=5000, seed=0)
    loop = ActiveLearningLoop(records, seed=0, batch_size=100)
    reviewer = SimulatedReviewer(gold, seed=0)
    stable_at = None
    for i in range(20):
        batch = loop.next_batch()
        loop.submit_labels(reviewer.label_batch(batch, len(batch)))
        if loop.is_stable():
            stable_at = i + 1
            break
    assert stable_at is not None, "no stability within 20 batches"

    part_b = loop.apply_policy(POLICY_B)
    remaining_gold = gold & set(loop.unlabeled)
    fn = set(part_b.auto_excluded) & remaining_gold
    assert not fn, f"Threshold B auto-excluded gold includes: {sorted(fn)[:5]}"
    aer = len(part_b.auto_excluded) / len(loop.unlabeled)
    assert aer >= 0.30, f"Threshold B AER {aer:.2%} < 30%"

    rng = random.Random(41)
    for _ in range(1000):
        pool = [(f"x{i}", ConfidenceBin(rng.randint(0, 4)))
                for i in range(rng.randint(0, 30))]
        pa = apply_threshold(pool, POLICY_A)
        pb = apply_threshold(pool, POLICY_B)
        ids = sorted(aid for aid, _ in pool)
        assert sorted(pa.auto_excluded + pa.manual_queue) == ids
        assert sorted(pb.auto_excluded + pb.manual_queue) == ids
        assert set(pb.auto_excluded) <= set(pa.auto_excluded)


# ----------------------------------------------------------------------------
@criterion("blocked dedup equals the all-pairs oracle at thresholds "
           "0.85/0.90/0.95; idempotent", budget_seconds=60)
def test_dedup_oracle():
    def all_pairs_groups(articles, threshold):
        parent = {a.id: a.id for a in articles}

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        keys = {a.id: normalize_key(a.record) for a in articles}
        for a, b in itertools.combinations(articles, 2):
            if (a.record.doi and a.record.doi == b.record.doi) or \
                    trigram_similarity(keys[a.id], keys[b.id]) >= threshold:
                parent[find(b.id)] = find(a.id)
        groups = {}
        for a in articles:
            groups.setdefault(find(a.id), set()).add(a.id)
        return {frozenset(g) for g in groups.values()}

    def result_groups(result):
        groups = {}
        for removed_id, kept_id, _ in result.removed:
            groups.setdefault(kept_id, {kept_id}).add(removed_id)
        return {frozenset(groups.get(a.id, {a.id})) for a in result.kept}

    rng = random.Random(31)
    words = ["vitamin", "calcium", "bone", "fall", "fracture", "elderly",
             "trial", "cohort", "serum", "dose", "winter", "density"]
    for threshold in (0.85, 0.90, 0.95):
        for fixture in range(6):
            n = rng.randint(20, 150)
            articles = []
            for i in range(n):
                rng.shuffle(words)
                title = f"Study of {' '.join(words[:5])} endpoint {i:03d}"
                doi = f"10.1/{i // 7}" if rng.random() < 0.2 else None
                articles.append(Article(record=BibRecord(
                    id=f"d{i:03d}", title=title, year=2015, doi=doi,
                    source_file="fixture")))
            # plant near-duplicates (single-character typos)
            for j in range(min(n, rng.randint(5, 40))):
                base = articles[j].record.title
                typo = base[:15] + "z" + base[16:]
                articles.append(Article(record=BibRecord(
                    id=f"t{j:03d}", title=typo, year=2015, source_file="fixture")))
            assert len(articles) <= 200

            result = dedup(articles, threshold=threshold)
            assert result_groups(result) == all_pairs_groups(articles, threshold), \
                f"threshold {threshold}, fixture {fixture}"

            again = dedup(result.kept, threshold=threshold)
            assert again.removed == []
            assert {a.id for a in again.kept} == {a.id for a in result.kept}
