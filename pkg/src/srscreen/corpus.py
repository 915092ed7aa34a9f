"""Bibliographic ingestion, normalization, near-duplicate removal and the article store.

Input formats are RIS exports and CSV exports with a user-supplied column
mapping. Records are normalized into `BibRecord`s, wrapped in `Article`s
(optionally carrying a full text and an evaluation-only gold label), and
persisted as a line-delimited JSON store so checkpoints diff cleanly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field, replace

from .errors import InputError, NotFoundError

log = logging.getLogger(__name__)

_DOI_RE = re.compile(r"^10\.\S+$")
_RIS_TAG_RE = re.compile(r"^([A-Z][A-Z0-9])  -\s?(.*)$")
_LEADING_ARTICLES = ("a", "an", "the")


@dataclass(frozen=True)
class BibRecord:
    id: str
    title: str
    source_file: str
    abstract: str | None = None
    authors: tuple[str, ...] = ()
    year: int | None = None
    venue: str | None = None
    doi: str | None = None


@dataclass
class Article:
    record: BibRecord
    fulltext: str | None = None
    fulltext_name: str | None = None
    gold_label: str | None = None  # "Included" / "Excluded", evaluation only

    @property
    def id(self) -> str:
        return self.record.id

    def screening_view(self) -> "ArticleView":
        """A gold-blind view; screening code only ever sees these."""
        return ArticleView(
            id=self.record.id,
            title=self.record.title,
            abstract=self.record.abstract,
            fulltext=self.fulltext,
        )


@dataclass(frozen=True)
class ArticleView:
    """What screening operations are allowed to look at (no gold label)."""

    id: str
    title: str
    abstract: str | None = None
    fulltext: str | None = None


@dataclass
class ParseResult:
    records: list[BibRecord]
    errors: list[str] = field(default_factory=list)


@dataclass
class DedupResult:
    kept: list[Article]
    removed: list[tuple[str, str, float]]  # (removed_id, kept_id, similarity)
    pair_count_examined: int = 0


def _record_id(source_file: str, ordinal: int) -> str:
    digest = hashlib.sha1(f"{source_file}:{ordinal}".encode("utf-8")).hexdigest()
    return digest[:12]


def normalize_doi(raw: str) -> str | None:
    doi = raw.strip().lower()
    doi = re.sub(r"^https?://(dx\.)?doi\.org/", "", doi)
    doi = re.sub(r"^doi:\s*", "", doi)
    return doi if _DOI_RE.match(doi) else None


def _clean(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def parse_ris(text: str, source_file: str = "<string>") -> ParseResult:
    """Parse an RIS export into BibRecords.

    Malformed tag lines and unterminated records are collected as errors
    without aborting the parse; zero parsable records from non-empty input
    raises InputError.
    """
    records: list[BibRecord] = []
    errors: list[str] = []
    fields: dict[str, list[str]] = {}
    last_tag: str | None = None
    saw_content = False
    ordinal = 0

    def flush(terminated: bool):
        nonlocal fields, last_tag, ordinal
        if not fields:
            last_tag = None
            return
        if not terminated:
            errors.append(f"{source_file}: record after #{ordinal} not terminated by 'ER  -'")
            fields, last_tag = {}, None
            return
        rec, err = _record_from_fields(fields, source_file, ordinal)
        if rec is not None:
            records.append(rec)
            ordinal += 1
        else:
            errors.append(err)
        fields, last_tag = {}, None

    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        saw_content = True
        m = _RIS_TAG_RE.match(line)
        if m:
            tag, value = m.group(1), m.group(2).strip()
            if tag == "ER":
                flush(terminated=True)
            else:
                fields.setdefault(tag, []).append(value)
                last_tag = tag
        elif last_tag is not None and line[:1].isspace():
            # continuation of the previous tag's value
            fields[last_tag][-1] = (fields[last_tag][-1] + " " + line.strip()).strip()
        else:
            errors.append(f"{source_file}:{lineno}: malformed RIS line: {line!r}")
    flush(terminated=False)

    if saw_content and not records:
        raise InputError(f"{source_file}: no parsable RIS records")
    return ParseResult(records, errors)


def _record_from_fields(fields, source_file, ordinal):
    title = None
    for tag in ("TI", "T1"):
        if fields.get(tag):
            title = _clean(fields[tag][0])
            break
    if not title:
        return None, f"{source_file}: record #{ordinal} has no title (TI/T1)"
    abstract = None
    for tag in ("AB", "N2"):
        if fields.get(tag):
            abstract = _clean(fields[tag][0]) or None
            break
    year = None
    if fields.get("PY"):
        m = re.match(r"(\d{4})", fields["PY"][0])
        if m:
            year = int(m.group(1))
    doi = normalize_doi(fields["DO"][0]) if fields.get("DO") else None
    authors = tuple(_clean(a) for a in fields.get("AU", []) + fields.get("A1", []) if a.strip())
    venue = None
    for tag in ("JO", "JF", "T2"):
        if fields.get(tag):
            venue = _clean(fields[tag][0]) or None
            break
    return (
        BibRecord(
            id=_record_id(source_file, ordinal),
            title=title,
            abstract=abstract,
            authors=authors,
            year=year,
            venue=venue,
            doi=doi,
            source_file=source_file,
        ),
        None,
    )


def parse_csv(text: str, mapping: dict[str, str], source_file: str = "<string>") -> ParseResult:
    """Parse a CSV export given a {field: column-name} mapping.

    `mapping` must name at least a title column; unmapped columns are
    ignored. Rows with the wrong arity are collected as errors.
    """
    if "title" not in mapping:
        raise InputError("column mapping must name a 'title' column")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InputError(f"{source_file}: CSV has no header row")
    col_index = {name: i for i, name in enumerate(header)}
    for fld, col in mapping.items():
        if col not in col_index:
            raise InputError(f"{source_file}: mapped column {col!r} (for {fld!r}) not in header")

    records: list[BibRecord] = []
    errors: list[str] = []
    ordinal = 0
    for rownum, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            errors.append(f"{source_file}: row {rownum} has {len(row)} fields, expected {len(header)}")
            continue

        def cell(fld):
            col = mapping.get(fld)
            return _clean(row[col_index[col]]) if col else ""

        title = cell("title")
        if not title:
            errors.append(f"{source_file}: row {rownum} has empty title")
            continue
        year = None
        if cell("year"):
            m = re.match(r"(\d{4})", cell("year"))
            if m:
                year = int(m.group(1))
        doi = normalize_doi(cell("doi")) if cell("doi") else None
        authors = tuple(a.strip() for a in cell("authors").split(";") if a.strip())
        records.append(
            BibRecord(
                id=_record_id(source_file, ordinal),
                title=title,
                abstract=cell("abstract") or None,
                authors=authors,
                year=year,
                venue=cell("venue") or None,
                doi=doi,
                source_file=source_file,
            )
        )
        ordinal += 1
    return ParseResult(records, errors)


def normalize_key(record: BibRecord) -> str:
    """Canonical key for blocking/dedup: folded title plus year."""
    text = unicodedata.normalize("NFKD", record.title)
    text = "".join(c for c in text if not unicodedata.combining(c))
    text = re.sub(r"[^a-z0-9]+", " ", text.lower()).strip()
    tokens = text.split()
    if tokens and tokens[0] in _LEADING_ARTICLES:
        tokens = tokens[1:]
    if record.year is not None:
        tokens.append(str(record.year))
    return " ".join(tokens)


def _trigrams(key: str) -> frozenset[str]:
    if len(key) < 3:
        return frozenset([key]) if key else frozenset()
    return frozenset(key[i : i + 3] for i in range(len(key) - 2))


def trigram_similarity(key_a: str, key_b: str) -> float:
    """Jaccard similarity over character trigrams of normalized keys."""
    ta, tb = _trigrams(key_a), _trigrams(key_b)
    if not ta and not tb:
        return 1.0
    union = len(ta | tb)
    return len(ta & tb) / union if union else 0.0


class _UnionFind:
    def __init__(self, ids):
        self.parent = {i: i for i in ids}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def dedup(articles: list[Article], threshold: float = 0.90, use_doi: bool = True) -> DedupResult:
    """Merge near-duplicates.

    Exact-DOI matches always merge; otherwise candidate pairs are generated
    from a trigram inverted index over normalized title+year keys (any pair
    at or above a threshold of 0.5 shares at least one trigram, so blocking
    never misses a mergeable pair) and merged when their Jaccard trigram
    similarity reaches `threshold`. Within a merged group the keeper is the
    record with an abstract, then the longest abstract, then the smallest id.
    """
    if not 0.5 <= threshold <= 1.0:
        raise InputError(f"dedup threshold must be in [0.5, 1.0], got {threshold}")
    if not articles:
        return DedupResult(kept=[], removed=[])

    by_id = {a.id: a for a in articles}
    if len(by_id) != len(articles):
        raise InputError("duplicate article ids in dedup input")
    keys = {a.id: normalize_key(a.record) for a in articles}
    grams = {a.id: _trigrams(keys[a.id]) for a in articles}
    uf = _UnionFind(by_id)

    doi_pairs: set[tuple[str, str]] = set()
    if use_doi:
        by_doi: dict[str, str] = {}
        for a in sorted(articles, key=lambda x: x.id):
            if a.record.doi:
                first = by_doi.setdefault(a.record.doi, a.id)
                if first != a.id:
                    uf.union(first, a.id)
                    doi_pairs.add((first, a.id))

    # candidate generation: inverted index over trigrams
    postings: dict[str, list[str]] = {}
    for aid in sorted(by_id):
        for g in grams[aid]:
            postings.setdefault(g, []).append(aid)
    candidates: set[tuple[str, str]] = set()
    for ids in postings.values():
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                candidates.add((ids[i], ids[j]))

    examined = 0
    for a, b in sorted(candidates):
        examined += 1
        ta, tb = grams[a], grams[b]
        union = len(ta | tb)
        sim = len(ta & tb) / union if union else 0.0
        if sim >= threshold:
            uf.union(a, b)

    groups: dict[str, list[Article]] = {}
    for a in articles:
        groups.setdefault(uf.find(a.id), []).append(a)

    kept: list[Article] = []
    removed: list[tuple[str, str, float]] = []
    for members in groups.values():
        keeper = min(
            members,
            key=lambda art: (
                art.record.abstract is None,
                -len(art.record.abstract or ""),
                art.id,
            ),
        )
        kept.append(keeper)
        for art in members:
            if art.id == keeper.id:
                continue
            same_doi = use_doi and art.record.doi and art.record.doi == keeper.record.doi
            sim = 1.0 if same_doi else trigram_similarity(keys[art.id], keys[keeper.id])
            removed.append((art.id, keeper.id, sim))

    kept.sort(key=lambda a: a.id)
    removed.sort()
    return DedupResult(kept=kept, removed=removed, pair_count_examined=examined)


def write_dedup_report(result: DedupResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["removed_id", "kept_id", "similarity"])
        for removed_id, kept_id, sim in result.removed:
            writer.writerow([removed_id, kept_id, f"{sim:.4f}"])


class ArticleStore:
    """In-memory article map with a line-delimited JSON file representation.

    Single-writer contract: one store instance owns its file; concurrent
    readers are fine.
    """

    def __init__(self):
        self._articles: dict[str, Article] = {}

    def __len__(self):
        return len(self._articles)

    def __contains__(self, article_id):
        return article_id in self._articles

    def add(self, article: Article) -> None:
        if article.id in self._articles:
            raise InputError(f"duplicate article id {article.id}")
        self._articles[article.id] = article

    def get(self, article_id: str) -> Article:
        try:
            return self._articles[article_id]
        except KeyError:
            raise NotFoundError(f"unknown article id {article_id}") from None

    def articles(self) -> list[Article]:
        return [self._articles[k] for k in sorted(self._articles)]

    def attach_fulltext(self, article_id: str, name: str, body: str) -> Article:
        if not body:
            raise InputError("full text body must be non-empty")
        article = self.get(article_id)
        if article.fulltext is not None:
            log.warning("re-attaching full text to %s (was %s, now %s)",
                        article_id, article.fulltext_name, name)
        updated = replace(article, fulltext=body, fulltext_name=name)
        self._articles[article_id] = updated
        return updated

    def set_gold_labels(self, included_ids) -> None:
        included = set(included_ids)
        unknown = included - set(self._articles)
        if unknown:
            raise InputError(f"gold ids not in store: {sorted(unknown)[:5]}")
        for aid, art in self._articles.items():
            self._articles[aid] = replace(
                art, gold_label="Included" if aid in included else "Excluded"
            )

    def gold_included_ids(self) -> set[str]:
        return {a.id for a in self._articles.values() if a.gold_label == "Included"}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for article in self.articles():
                rec = article.record
                row = {
                    "id": rec.id,
                    "title": rec.title,
                    "abstract": rec.abstract,
                    "authors": list(rec.authors),
                    "year": rec.year,
                    "venue": rec.venue,
                    "doi": rec.doi,
                    "source_file": rec.source_file,
                    "fulltext": article.fulltext,
                    "fulltext_name": article.fulltext_name,
                    "gold_label": article.gold_label,
                }
                fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ArticleStore":
        store = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                record = BibRecord(
                    id=row["id"],
                    title=row["title"],
                    abstract=row.get("abstract"),
                    authors=tuple(row.get("authors") or ()),
                    year=row.get("year"),
                    venue=row.get("venue"),
                    doi=row.get("doi"),
                    source_file=row.get("source_file", ""),
                )
                store.add(
                    Article(
                        record=record,
                        fulltext=row.get("fulltext"),
                        fulltext_name=row.get("fulltext_name"),
                        gold_label=row.get("gold_label"),
                    )
                )
        return store
