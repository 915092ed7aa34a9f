"""Rayyan-style active-learning baseline.

A documented stand-in, not a clone: hashed unigram/bigram features over
title+abstract, an incremental logistic-loss linear model, five ordered
confidence bins, and two exclusion threshold policies. The published
tool's numbers are used elsewhere as replay fixtures only; nothing here
targets them as accuracy goals.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import math
import re
import unicodedata
from dataclasses import dataclass, field

import numpy as np

from .corpus import BibRecord
from .errors import ConfigError

FEATURE_DIM = 2**18
DEFAULT_CUTPOINTS = (0.10, 0.35, 0.65, 0.90)
CLASS_WEIGHT_CAP = 10.0
L2_PENALTY = 1e-5
EPOCHS_PER_INCREMENT = 5


class ConfidenceBin(enum.IntEnum):
    MOST_LIKELY_EXCLUDE = 0
    LIKELY_EXCLUDE = 1
    UNDECIDED = 2
    LIKELY_INCLUDE = 3
    MOST_LIKELY_INCLUDE = 4

    @property
    def label(self) -> str:
        return {
            0: "Most Likely To Exclude",
            1: "Likely To Exclude",
            2: "Undecided",
            3: "Likely To Include",
            4: "Most Likely To Include",
        }[int(self)]


@dataclass(frozen=True)
class ThresholdPolicy:
    name: str
    excluded_bins: frozenset[ConfidenceBin]


POLICY_A = ThresholdPolicy(
    "A", frozenset({ConfidenceBin.MOST_LIKELY_EXCLUDE, ConfidenceBin.LIKELY_EXCLUDE})
)
POLICY_B = ThresholdPolicy("B", frozenset({ConfidenceBin.MOST_LIKELY_EXCLUDE}))

POLICIES = {"A": POLICY_A, "B": POLICY_B}

SparseFeatures = dict[int, float]


def _stable_hash(token: str) -> int:
    return int(hashlib.md5(token.encode("utf-8")).hexdigest()[:8], 16) % FEATURE_DIM


def _tokens(text: str) -> list[str]:
    text = unicodedata.normalize("NFKD", text)
    text = "".join(c for c in text if not unicodedata.combining(c))
    return re.findall(r"[a-z0-9]+", text.lower())


def _grams(tokens: list[str]) -> list[str]:
    return tokens + [f"{a}_{b}" for a, b in zip(tokens, tokens[1:])]


class Featurizer:
    """Hashed unigram+bigram TF-IDF features over title and abstract.

    Title tokens are additionally emitted with a title prefix so title
    terms carry their own weight. IDF comes from the corpus snapshot
    passed to fit().
    """

    def __init__(self):
        self._idf: dict[int, float] = {}
        self._n_docs = 0

    def fit(self, records: list[BibRecord]) -> "Featurizer":
        df: dict[int, int] = {}
        for rec in records:
            for fid in set(self._feature_ids(rec)):
                df[fid] = df.get(fid, 0) + 1
        self._n_docs = len(records)
        self._idf = {
            fid: math.log((1 + self._n_docs) / (1 + count)) + 1.0
            for fid, count in df.items()
        }
        return self

    def _feature_ids(self, record: BibRecord) -> list[int]:
        title_tokens = _tokens(record.title)
        body_tokens = title_tokens + _tokens(record.abstract or "")
        ids = [_stable_hash(g) for g in _grams(body_tokens)]
        ids += [_stable_hash("title:" + g) for g in _grams(title_tokens)]
        return ids

    def featurize(self, record: BibRecord) -> SparseFeatures:
        tf: dict[int, int] = {}
        for fid in self._feature_ids(record):
            tf[fid] = tf.get(fid, 0) + 1
        return {
            fid: (1.0 + math.log(count)) * self._idf.get(fid, 1.0)
            for fid, count in tf.items()
        }


@dataclass
class LinearModel:
    seed: int = 0
    weights: np.ndarray = field(default_factory=lambda: np.zeros(FEATURE_DIM))
    bias: float = 0.0
    updates_seen: int = 0
    increments: int = 0
    examples: list[tuple[SparseFeatures, int]] = field(default_factory=list)

    def save(self, path) -> None:
        nz = np.nonzero(self.weights)[0]
        np.savez(
            path,
            indices=nz,
            values=self.weights[nz],
            bias=self.bias,
            updates_seen=self.updates_seen,
            increments=self.increments,
            seed=self.seed,
        )

    @classmethod
    def load(cls, path) -> "LinearModel":
        data = np.load(path)
        model = cls(seed=int(data["seed"]))
        model.weights[data["indices"]] = data["values"]
        model.bias = float(data["bias"])
        model.updates_seen = int(data["updates_seen"])
        model.increments = int(data["increments"])
        return model


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def score(model: LinearModel, features: SparseFeatures) -> float:
    z = model.bias + sum(model.weights[fid] * val for fid, val in features.items())
    return _sigmoid(z)


def train_increment(model: LinearModel, batch: list[tuple[SparseFeatures, int]]) -> LinearModel:
    """Fold one labeled batch in and retrain.

    Runs 5 logistic-SGD epochs over the cumulative labeled pool with
    lr = 0.1/sqrt(updates_seen + 1), sparse L2 decay of 1e-5, inverse-
    prevalence class weights capped at 10x, and seed-deterministic
    shuffling. Labels are 1 (include) / 0 (exclude). Empty batch is a no-op.
    """
    if not batch:
        return model
    model.examples.extend(batch)
    model.increments += 1
    rng = np.random.default_rng((model.seed, model.increments))

    n = len(model.examples)
    n_pos = sum(y for _, y in model.examples)
    n_neg = n - n_pos
    w_pos = min(CLASS_WEIGHT_CAP, n / (2.0 * n_pos)) if n_pos else 1.0
    w_neg = min(CLASS_WEIGHT_CAP, n / (2.0 * n_neg)) if n_neg else 1.0

    weights = model.weights
    for _ in range(EPOCHS_PER_INCREMENT):
        for i in rng.permutation(n):
            features, label = model.examples[int(i)]
            p = score(model, features)
            g = (p - label) * (w_pos if label else w_neg)
            lr = 0.1 / math.sqrt(model.updates_seen + 1)
            for fid, val in features.items():
                weights[fid] -= lr * (g * val + L2_PENALTY * weights[fid])
            model.bias -= lr * g
            model.updates_seen += 1
    return model


def bin_probability(probability: float, cutpoints=DEFAULT_CUTPOINTS) -> ConfidenceBin:
    """Half-open interval mapping of a probability onto the five bins."""
    if len(cutpoints) != 4 or any(b <= a for a, b in zip(cutpoints, cutpoints[1:])):
        raise ConfigError(f"cutpoints must be 4 strictly increasing values, got {cutpoints}")
    for i, cut in enumerate(cutpoints):
        if probability < cut:
            return ConfidenceBin(i)
    return ConfidenceBin.MOST_LIKELY_INCLUDE


@dataclass
class Partition:
    auto_excluded: list[str]
    manual_queue: list[str]


def apply_threshold(binned_pool: list[tuple[str, ConfidenceBin]],
                    policy: ThresholdPolicy) -> Partition:
    """Split a binned pool into auto-excluded and manual queues, order-preserving."""
    auto, manual = [], []
    for article_id, b in binned_pool:
        (auto if b in policy.excluded_bins else manual).append(article_id)
    return Partition(auto_excluded=auto, manual_queue=manual)


@dataclass
class HistoryPoint:
    labeled_count: int
    bin_counts: tuple[int, int, int, int, int]  # ordered per ConfidenceBin


TrainingHistory = list[HistoryPoint]


def stability_check(history: TrainingHistory, window: int = 5,
                    epsilon: float = 0.01) -> bool:
    """True when every bin's share of the pool moved <= epsilon over the window.

    Shares, not raw counts: the unlabeled pool shrinks with every labeled
    batch, so counts drift even when the model has stopped reshuffling
    articles between bins.
    """
    if window < 2:
        raise ConfigError(f"window must be >= 2, got {window}")
    if len(history) < window:
        return False
    recent = history[-window:]
    shares = []
    for pt in recent:
        pool = sum(pt.bin_counts)
        if pool == 0:
            return True
        shares.append([c / pool for c in pt.bin_counts])
    for b in range(5):
        series = [s[b] for s in shares]
        if max(series) - min(series) > epsilon:
            return False
    return True


def export_history_csv(history: TrainingHistory, path) -> None:
    """Writes the labeled-count vs five-bin-count series (one row per increment)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["labeled_count", "bin1", "bin2", "bin3", "bin4", "bin5"])
        for pt in history:
            writer.writerow([pt.labeled_count, *pt.bin_counts])


class SimulatedReviewer:
    """Labels seeded random batches from gold, standing in for the human."""

    def __init__(self, gold_included: set[str], seed: int = 0):
        self.gold_included = gold_included
        self._rng = np.random.default_rng(seed)

    def label_batch(self, pool_ids: list[str], size: int) -> list[tuple[str, int]]:
        if not pool_ids:
            raise ConfigError("unlabeled pool is empty")
        take = min(size, len(pool_ids))
        chosen = self._rng.choice(len(pool_ids), size=take, replace=False)
        return [
            (pool_ids[int(i)], 1 if pool_ids[int(i)] in self.gold_included else 0)
            for i in sorted(chosen)
        ]


class ActiveLearningLoop:
    """Label -> retrain -> re-bin cycle over an unlabeled pool.

    Strictly sequential by contract (one training increment at a time);
    scoring and binning are pure and could fan out.
    """

    def __init__(self, records: list[BibRecord], seed: int = 0,
                 cutpoints=DEFAULT_CUTPOINTS, batch_size: int = 100):
        self.featurizer = Featurizer().fit(records)
        self.records_by_id = {r.id: r for r in records}
        self.features = {r.id: self.featurizer.featurize(r) for r in records}
        self.unlabeled = [r.id for r in sorted(records, key=lambda r: r.id)]
        self.labels: dict[str, int] = {}
        self.model = LinearModel(seed=seed)
        self.cutpoints = cutpoints
        self.batch_size = batch_size
        self.history: TrainingHistory = []
        self._rng = np.random.default_rng(seed)

    def next_batch(self, n: int | None = None) -> list[str]:
        n = n or self.batch_size
        take = min(n, len(self.unlabeled))
        chosen = self._rng.choice(len(self.unlabeled), size=take, replace=False)
        return [self.unlabeled[int(i)] for i in sorted(chosen)]

    def submit_labels(self, labeled: list[tuple[str, int]]) -> HistoryPoint:
        batch = []
        for article_id, label in labeled:
            if article_id in self.labels:
                raise ConfigError(f"article {article_id} already labeled")
            if article_id not in self.features:
                raise ConfigError(f"unknown article {article_id}")
            self.labels[article_id] = label
            batch.append((self.features[article_id], label))
        labeled_ids = {aid for aid, _ in labeled}
        self.unlabeled = [aid for aid in self.unlabeled if aid not in labeled_ids]
        train_increment(self.model, batch)
        point = HistoryPoint(
            labeled_count=len(self.labels), bin_counts=self._bin_counts()
        )
        self.history.append(point)
        return point

    def binned_pool(self) -> list[tuple[str, ConfidenceBin]]:
        return [
            (aid, bin_probability(score(self.model, self.features[aid]), self.cutpoints))
            for aid in self.unlabeled
        ]

    def _bin_counts(self) -> tuple[int, int, int, int, int]:
        counts = [0] * 5
        for _, b in self.binned_pool():
            counts[int(b)] += 1
        return tuple(counts)

    def apply_policy(self, policy: ThresholdPolicy) -> Partition:
        return apply_threshold(self.binned_pool(), policy)

    def is_stable(self, window: int = 5, epsilon: float = 0.01) -> bool:
        return stability_check(self.history, window=window, epsilon=epsilon)
