"""Related-term definition retrieval over an embedded Okapi BM25 index.

The index holds one entry per core term (a term with an encyclopedia page),
indexing the concatenation of its title and first-sentence definition. A
target term's surface tokens are the query; the top-ranked entries supply the
definitions of related terms.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .textnorm import tokenize
from .types import Document, Source, Term

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

INDEX_FORMAT = "cdi-index"
INDEX_VERSION = 1


@dataclass(frozen=True)
class CoreTermEntry:
    term: Term
    definition: str
    doc_tokens: tuple[str, ...]

    @classmethod
    def build(cls, term: Term, definition: str) -> "CoreTermEntry":
        if not definition:
            raise ValueError(f"core term {term.normalized!r} has an empty definition")
        return cls(term=term, definition=definition, doc_tokens=tuple(tokenize(term.surface + " " + definition)))


@dataclass(frozen=True)
class RelatedDefinition:
    term: Term
    definition: str
    relevance: float

    def to_dict(self) -> dict[str, Any]:
        return {"term": self.term.to_dict(), "definition": self.definition, "relevance": self.relevance}


@dataclass(frozen=True)
class Bm25Index:
    """Immutable inverted index; safe for unlimited concurrent readers."""

    entries: tuple[CoreTermEntry, ...]
    postings: dict[str, tuple[tuple[int, int], ...]]
    doc_lengths: tuple[int, ...]
    avg_doc_length: float
    n_docs: int
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    _doc_freq: dict[str, int] = field(default_factory=dict, repr=False)

    def idf(self, token: str) -> float:
        df = self._doc_freq.get(token, 0)
        if df == 0:
            return 0.0
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))

    def term_freq(self, token: str, entry_id: int) -> int:
        for eid, tf in self.postings.get(token, ()):
            if eid == entry_id:
                return tf
        return 0


def build_index(entries: Sequence[CoreTermEntry], k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> Bm25Index:
    """Construct the inverted index over core-term entries."""
    if not entries:
        raise ValueError("empty index: no core-term entries")
    if k1 <= 0 or not 0.0 <= b <= 1.0:
        raise ValueError(f"invalid BM25 parameters k1={k1}, b={b}")
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_lengths = []
    for entry_id, entry in enumerate(entries):
        counts = Counter(entry.doc_tokens)
        doc_lengths.append(len(entry.doc_tokens))
        for token, tf in counts.items():
            postings.setdefault(token, []).append((entry_id, tf))
    doc_freq = {token: len(plist) for token, plist in postings.items()}
    return Bm25Index(
        entries=tuple(entries),
        postings={t: tuple(p) for t, p in postings.items()},
        doc_lengths=tuple(doc_lengths),
        avg_doc_length=sum(doc_lengths) / len(doc_lengths),
        n_docs=len(entries),
        k1=k1,
        b=b,
        _doc_freq=doc_freq,
    )


def bm25_score(index: Bm25Index, query_tokens: Sequence[str], entry_id: int) -> float:
    """Okapi BM25 score of one entry for the query.

    IDF = ln(1 + (N - df + 0.5) / (df + 0.5)), which is non-negative for all
    df <= N; unknown query tokens contribute 0.
    """
    if not 0 <= entry_id < index.n_docs:
        raise ValueError(f"entry_id {entry_id} out of range")
    length = index.doc_lengths[entry_id]
    norm = index.k1 * (1.0 - index.b + index.b * length / index.avg_doc_length)
    total = 0.0
    for token in query_tokens:
        tf = index.term_freq(token, entry_id)
        if tf == 0:
            continue
        total += index.idf(token) * (tf * (index.k1 + 1.0)) / (tf + norm)
    return total


def retrieve_related(
    index: Bm25Index, target: Term, kprime: int, exclude_self: bool = False
) -> list[RelatedDefinition]:
    """Top-k' core-term definitions for the target term.

    Entries are ranked by BM25 score of the target's surface tokens, ties
    broken lexicographically by normalized term. With exclude_self, the
    target's own entry is removed before truncation.
    """
    if kprime < 0:
        raise ValueError("kprime must be >= 0")
    query = tokenize(target.surface)
    ranked = []
    for entry_id, entry in enumerate(index.entries):
        if exclude_self and entry.term.normalized == target.normalized:
            continue
        ranked.append((bm25_score(index, query, entry_id), entry))
    ranked.sort(key=lambda pair: (-pair[0], pair[1].term.normalized))
    return [
        RelatedDefinition(term=entry.term, definition=entry.definition, relevance=score)
        for score, entry in ranked[:kprime]
    ]


def entries_from_corpus(encyclopedia: list[Document]) -> list[CoreTermEntry]:
    """Derive core-term entries from an encyclopedia corpus (title + first summary sentence)."""
    from .ingest import split_sentences

    entries = []
    seen: set[str] = set()
    for doc in encyclopedia:
        if doc.source != Source.ENCYCLOPEDIA:
            continue
        summary = doc.section_text("summary")
        if not summary:
            continue
        sents = split_sentences(summary)
        if not sents:
            continue
        term = Term.from_surface(doc.title)
        if term.normalized in seen:
            continue
        seen.add(term.normalized)
        entries.append(CoreTermEntry.build(term, sents[0]))
    return entries


def load_core_terms(path: str | Path) -> list[CoreTermEntry]:
    """Load core terms from JSONL lines of {"surface": ..., "definition": ...}."""
    from .ingest import read_jsonl

    entries = []
    for rec in read_jsonl(path):
        entries.append(CoreTermEntry.build(Term.from_surface(rec["surface"]), rec["definition"]))
    return entries


# --- index persistence -------------------------------------------------------


def save_index(index: Bm25Index, path: str | Path, header: dict[str, Any] | None = None) -> None:
    doc = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "k1": index.k1,
        "b": index.b,
        "n_docs": index.n_docs,
        "entries": [
            {"term": e.term.to_dict(), "definition": e.definition, "doc_tokens": list(e.doc_tokens)}
            for e in index.entries
        ],
        "postings": {token: [list(p) for p in plist] for token, plist in index.postings.items()},
        "doc_lengths": list(index.doc_lengths),
    }
    if header is not None:
        doc["_header"] = header
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_index(path: str | Path) -> Bm25Index:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != INDEX_FORMAT:
        raise ValueError(f"not a {INDEX_FORMAT} file: {path}")
    if doc.get("version") != INDEX_VERSION:
        raise ValueError(f"unsupported index version {doc.get('version')}")
    entries = tuple(
        CoreTermEntry(
            term=Term.from_dict(e["term"]),
            definition=e["definition"],
            doc_tokens=tuple(e["doc_tokens"]),
        )
        for e in doc["entries"]
    )
    postings = {token: tuple((int(eid), int(tf)) for eid, tf in plist) for token, plist in doc["postings"].items()}
    doc_lengths = tuple(int(x) for x in doc["doc_lengths"])
    return Bm25Index(
        entries=entries,
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=sum(doc_lengths) / len(doc_lengths),
        n_docs=int(doc["n_docs"]),
        k1=float(doc["k1"]),
        b=float(doc["b"]),
        _doc_freq={token: len(plist) for token, plist in postings.items()},
    )
