"""Deterministic synthetic corpora for offline runs and tests.

The real screening corpus is not distributable, so end-to-end behavior is
exercised on generated articles with planted signals: gold articles carry
the inclusion keywords (and a falls outcome) that the keyword-rule mock
backend looks for; decoys pass the title/abstract phase but fail the
full-text outcome gate.
"""

from __future__ import annotations

import numpy as np

from .corpus import Article, ArticleStore, BibRecord

# Rule table for the keyword mock backend, matched against the shipped
# guides' question texts. First match wins, so the more specific question
# patterns (exclusion gates, the categorical outcome question) come first;
# the generic gate patterns would otherwise shadow them.
KEYWORD_RULES = [
    (r"pregnant women", r"pregnant women", "yes"),
    (r"pregnant women", r".*", "no"),
    (r"active Vitamin D", r"calcitriol", "yes"),
    (r"active Vitamin D", r".*", "no"),
    (r"following categories", r"primary outcome was falls", "Falls"),
    (r"following categories", r"primary outcome was fractures", "Fractures"),
    (r"following categories", r".*", "Unsure"),
    (r"one of the outcomes", r"outcome was (falls|fractures|mortality)", "yes"),
    (r"one of the outcomes", r".*", "no"),
    (r"systematic review", r"meta-analysis of randomized controlled trials", "yes"),
    (r"systematic review", r".*", "no"),
    (r"population", r"community-dwelling adults aged 65", "yes"),
    (r"population", r".*", "no"),
    (r"intervention", r"vitamin d supplementation", "yes"),
    (r"intervention", r".*", "no"),
    (r"comparator", r"placebo", "yes"),
    (r"comparator", r".*", "no"),
]

_INCLUSION_BLURB = (
    "This meta-analysis of randomized controlled trials studied "
    "community-dwelling adults aged 65 and older receiving vitamin d "
    "supplementation compared with placebo."
)

_FILLER = [
    "observational cohort", "case report", "cell culture assay",
    "imaging biomarkers", "genome association", "surgical technique",
    "dietary survey", "drug pharmacokinetics", "air pollution exposure",
    "screening questionnaire", "hospital admissions", "wearable sensors",
]


def _filler_sentence(rng) -> str:
    picks = rng.choice(len(_FILLER), size=3, replace=False)
    return "A study of " + ", ".join(_FILLER[int(i)] for i in picks) + "."


def synthetic_screening_store(n: int = 1000, n_gold: int = 20, n_decoys: int = 10,
                              seed: int = 0) -> tuple[ArticleStore, set[str]]:
    """Corpus for end-to-end pipeline runs with the keyword mock.

    Gold articles pass both phases with a falls outcome; decoys pass
    phase 1 but report a fractures outcome (excluded, code 20); the rest
    fail the title/abstract gates. Returns (store, gold ids).
    """
    rng = np.random.default_rng(seed)
    store = ArticleStore()
    gold_ids: set[str] = set()
    for i in range(n):
        aid = f"syn{i:05d}"
        if i < n_gold:
            kind = "gold"
        elif i < n_gold + n_decoys:
            kind = "decoy"
        else:
            kind = "noise"
        if kind == "noise":
            title = f"Synthetic article {i}: {_filler_sentence(rng)[:60]}"
            abstract = _filler_sentence(rng) + " " + _filler_sentence(rng)
            record = BibRecord(id=aid, title=title, abstract=abstract,
                               year=2000 + i % 25, source_file="synthetic")
            store.add(Article(record=record))
            continue
        outcome = "falls" if kind == "gold" else "fractures"
        title = f"Vitamin D supplementation trial synthesis {i}"
        abstract = _INCLUSION_BLURB + f" Cohort {i}."
        record = BibRecord(id=aid, title=title, abstract=abstract,
                           year=2000 + i % 25, source_file="synthetic")
        body_parts = [
            f"Background. {_INCLUSION_BLURB}",
            _filler_sentence(rng),
            f"The primary outcome was {outcome} in the pooled population. "
            f"Secondary analyses covered adherence. The outcome was {outcome}.",
            _filler_sentence(rng),
        ]
        fulltext = (" ".join(body_parts) + " ") * 3
        store.add(Article(record=record, fulltext=fulltext.strip(),
                          fulltext_name=f"{aid}.txt"))
        if kind == "gold":
            gold_ids.add(aid)
    store.set_gold_labels(gold_ids)
    return store, gold_ids


_SIGNAL_TOKENS = ["vitamin", "supplementation", "falls", "meta", "analysis",
                  "randomized", "trials", "older", "adults"]
_NOISE_TOKENS = ["protein", "imaging", "sensor", "cohort", "genome", "cells",
                 "survey", "pollution", "kinetics", "surgery", "admission",
                 "biomarker", "screening", "wearable", "questionnaire", "injury"]


def synthetic_baseline_records(n: int = 5000, include_fraction: float = 0.02,
                               seed: int = 0) -> tuple[list[BibRecord], set[str]]:
    """Separable corpus for the active-learning loop.

    Includes draw their vocabulary from the planted signal tokens, the
    rest from a disjoint noise vocabulary, so a linear model separates
    them quickly. Returns (records, gold included ids).
    """
    rng = np.random.default_rng(seed)
    n_include = round(n * include_fraction)
    records: list[BibRecord] = []
    gold: set[str] = set()
    for i in range(n):
        aid = f"bl{i:05d}"
        if i < n_include:
            tokens = [ _SIGNAL_TOKENS[int(j)]
                       for j in rng.choice(len(_SIGNAL_TOKENS), size=6, replace=False)]
            gold.add(aid)
        else:
            tokens = [ _NOISE_TOKENS[int(j)]
                       for j in rng.choice(len(_NOISE_TOKENS), size=6, replace=False)]
        title = " ".join(tokens[:3]) + f" study {i}"
        abstract = " ".join(tokens) + " " + " ".join(tokens[::-1])
        records.append(BibRecord(id=aid, title=title, abstract=abstract,
                                 year=2010, source_file="synthetic"))
    return records, gold
