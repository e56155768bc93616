"""Corpus parsing, sentence segmentation, and dataset construction.

Input corpora are pre-fetched JSONL archives (one document object per line),
not live crawls. Dataset assembly is deterministic under a seed: negatives are
sampled per-term and the train/valid/test split is assigned per-term so no
term's sentences leak across splits.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Any, Iterable, Iterator

from .errors import IngestError
from .textnorm import contains_token_seq, normalize_surface, tokenize
from .types import (
    Document,
    ExtractionExample,
    Field,
    GenerationExample,
    Label,
    SentenceRecord,
    Source,
    Split,
    Term,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_NEGATIVES = 5

# Tokens ending in "." that never close a sentence.
_ABBREVIATIONS = frozenset(
    {
        "fig.",
        "figs.",
        "eq.",
        "eqs.",
        "sec.",
        "secs.",
        "no.",
        "nos.",
        "vol.",
        "e.g.",
        "i.e.",
        "etc.",
        "al.",
        "cf.",
        "vs.",
        "resp.",
        "dr.",
        "prof.",
        "mr.",
        "mrs.",
        "ms.",
        "st.",
        "inc.",
        "ca.",
        "approx.",
    }
)

_OPENERS = {"(": ")", "[": "]"}
_CLOSERS = {")": "(", "]": "["}


@dataclass
class ParseResult:
    documents: list[Document]
    skipped: int


def split_sentences(text: str) -> list[str]:
    """Segment text into sentences.

    A sentence ends at `.`, `!` or `?` followed by whitespace and an uppercase
    letter or digit, unless the closing token is a known abbreviation or a
    parenthesis/bracket is still open. Whitespace inside each sentence is
    collapsed; no non-whitespace character is ever dropped.
    """
    sentences: list[str] = []
    start = 0
    depth_paren = 0
    depth_bracket = 0
    n = len(text)
    for i, ch in enumerate(text):
        if ch == "(":
            depth_paren += 1
        elif ch == ")":
            depth_paren = max(0, depth_paren - 1)
        elif ch == "[":
            depth_bracket += 1
        elif ch == "]":
            depth_bracket = max(0, depth_bracket - 1)
        if ch not in ".!?":
            continue
        if depth_paren > 0 or depth_bracket > 0:
            continue
        if i + 1 >= n or not text[i + 1].isspace():
            continue
        j = i + 1
        while j < n and text[j].isspace():
            j += 1
        if j >= n or not (text[j].isupper() or text[j].isdigit()):
            continue
        if ch == "." and _trailing_token(text, i) in _ABBREVIATIONS:
            continue
        sentences.append(text[start : i + 1])
        start = j
        depth_paren = 0
        depth_bracket = 0
    if start < n:
        sentences.append(text[start:])
    out = []
    for sent in sentences:
        collapsed = " ".join(sent.split())
        if collapsed:
            out.append(collapsed)
    return out


def _trailing_token(text: str, end: int) -> str:
    """The whitespace-delimited token ending at text[end], lowercased."""
    i = end
    while i >= 0 and not text[i].isspace():
        i -= 1
    return text[i + 1 : end + 1].lower()


def iter_sentences(doc: Document) -> Iterator[tuple[str, str]]:
    """Yield (section_name, sentence) over every section of a document."""
    for name, section_text in doc.sections:
        for sent in split_sentences(section_text):
            yield name, sent


def sentence_record(doc: Document, section: str, text: str, term: Term) -> SentenceRecord:
    contains = contains_token_seq(term.normalized.split(), tokenize(text))
    return SentenceRecord(
        text=text, doc_id=doc.doc_id, source=doc.source, section=section, contains_term=contains
    )


def parse_corpus(stream: IO[bytes] | IO[str] | Iterable[str], source: Source) -> ParseResult:
    """Parse a JSONL document archive.

    Each well-formed line becomes one Document. Malformed lines (bad JSON,
    missing fields, wrong source, duplicate doc_id, encyclopedia record with
    no summary section) are skipped and counted.
    """
    try:
        lines = iter(stream)
    except TypeError as exc:
        raise IngestError(f"unreadable corpus stream: {exc}") from exc

    documents: list[Document] = []
    seen_ids: set[str] = set()
    skipped = 0
    for lineno, raw in enumerate(lines, start=1):
        try:
            if isinstance(raw, bytes):
                raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IngestError(f"corpus stream is not valid UTF-8 at line {lineno}: {exc}") from exc
        line = raw.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            if isinstance(rec, dict) and "_header" in rec:
                continue
            doc = _parse_record(rec, source)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            logger.debug("skipping corpus line %d: %s", lineno, exc)
            skipped += 1
            continue
        if doc.doc_id in seen_ids:
            logger.debug("skipping corpus line %d: duplicate doc_id %s", lineno, doc.doc_id)
            skipped += 1
            continue
        seen_ids.add(doc.doc_id)
        documents.append(doc)
    if skipped:
        logger.warning("parse_corpus: skipped %d malformed record(s)", skipped)
    return ParseResult(documents=documents, skipped=skipped)


def _parse_record(rec: dict[str, Any], source: Source) -> Document:
    if not isinstance(rec, dict):
        raise ValueError("record is not an object")
    doc_id = rec["doc_id"]
    title = rec["title"]
    if not isinstance(doc_id, str) or not isinstance(title, str) or not doc_id:
        raise ValueError("doc_id/title must be nonempty strings")
    rec_source = Source(rec.get("source", source.value))
    if rec_source != source:
        raise ValueError(f"record source {rec_source.value!r} does not match corpus {source.value!r}")
    sections = [(s["name"], s["text"]) for s in rec["sections"]]
    for name, text in sections:
        if not isinstance(name, str) or not isinstance(text, str):
            raise ValueError("section name/text must be strings")
    doc = Document(doc_id=doc_id, title=title, source=source, url=rec.get("url"), sections=sections)
    if source == Source.ENCYCLOPEDIA and doc.section_text("summary") is None:
        raise ValueError("encyclopedia document lacks a summary section")
    return doc


def term_frequency(term: Term, corpus: list[Document]) -> int:
    """Number of sentences in the corpus containing the normalized term contiguously."""
    needle = term.normalized.split()
    count = 0
    for doc in corpus:
        for _, sent in iter_sentences(doc):
            if contains_token_seq(needle, tokenize(sent)):
                count += 1
    return count


def _title_map(corpus: list[Document]) -> dict[str, Document]:
    by_title: dict[str, Document] = {}
    for doc in corpus:
        key = normalize_surface(doc.title)
        if key in by_title:
            logger.warning("duplicate normalized title %r; keeping first (%s)", key, by_title[key].doc_id)
            continue
        by_title[key] = doc
    return by_title


def _check_ratios(split_ratios: tuple[float, float, float]) -> None:
    if len(split_ratios) != 3 or abs(sum(split_ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be a triple summing to 1, got {split_ratios}")


def assign_splits(
    keys: list[str], split_ratios: tuple[float, float, float], seed: int
) -> dict[str, Split]:
    """Deterministic per-key split assignment by seeded shuffle of sorted keys."""
    _check_ratios(split_ratios)
    ordered = sorted(keys)
    rng = random.Random(f"{seed}:split")
    rng.shuffle(ordered)
    n = len(ordered)
    c1 = round(n * split_ratios[0])
    c2 = round(n * (split_ratios[0] + split_ratios[1]))
    assignment: dict[str, Split] = {}
    for i, key in enumerate(ordered):
        if i < c1:
            assignment[key] = Split.TRAIN
        elif i < c2:
            assignment[key] = Split.VALID
        else:
            assignment[key] = Split.TEST
    return assignment


def build_extraction_dataset(
    corpus: list[Document],
    terms: list[Term],
    min_freq: int = 0,
    max_negatives: int = DEFAULT_MAX_NEGATIVES,
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> list[ExtractionExample]:
    """Build labeled (term, sentence) pairs from an encyclopedia corpus.

    The positive for each term is the first sentence of its page summary;
    negatives are up to `max_negatives` term-bearing sentences sampled from the
    other sections of the same page. Terms below `min_freq` reference-corpus
    frequency, or without a usable summary, are dropped.
    """
    if min_freq < 0:
        raise ValueError("min_freq must be >= 0")
    _check_ratios(split_ratios)
    by_title = _title_map(corpus)

    per_term: list[tuple[Term, SentenceRecord, list[SentenceRecord]]] = []
    for term in sorted(terms, key=lambda t: t.normalized):
        if term.ref_frequency < min_freq:
            continue
        doc = by_title.get(term.normalized)
        if doc is None:
            logger.warning("term %r: no encyclopedia page; skipped", term.normalized)
            continue
        summary = doc.section_text("summary")
        if summary is None:
            logger.warning("term %r: page has no summary section; skipped", term.normalized)
            continue
        summary_sents = split_sentences(summary)
        if not summary_sents:
            logger.warning("term %r: empty summary section; skipped", term.normalized)
            continue
        positive = sentence_record(doc, "summary", summary_sents[0], term)

        pool: list[SentenceRecord] = []
        seen_texts: set[str] = set()
        for section, sent in iter_sentences(doc):
            if section == "summary":
                continue
            rec = sentence_record(doc, section, sent, term)
            if not rec.contains_term or rec.text in seen_texts:
                continue
            seen_texts.add(rec.text)
            pool.append(rec)
        rng = random.Random(f"{seed}:neg:{term.normalized}")
        k = min(max_negatives, len(pool))
        chosen = sorted(rng.sample(range(len(pool)), k))
        negatives = [pool[i] for i in chosen]
        per_term.append((term, positive, negatives))

    splits = assign_splits([t.normalized for t, _, _ in per_term], split_ratios, seed)
    examples: list[ExtractionExample] = []
    for term, positive, negatives in per_term:
        split = splits[term.normalized]
        examples.append(ExtractionExample(term=term, sentence=positive, label=Label.POSITIVE, split=split))
        for neg in negatives:
            examples.append(ExtractionExample(term=term, sentence=neg, label=Label.NEGATIVE, split=split))
    return examples


def build_generation_dataset(
    encyclopedia: list[Document],
    web: list[Document],
    terms: list[Term],
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> list[GenerationExample]:
    """Build (term, gold definition, web candidates) examples.

    Only terms with an encyclopedia page are kept; the gold definition is the
    first summary sentence. Candidates come exclusively from the web corpus and
    never equal the gold string, so the reference cannot leak into the input.
    """
    _check_ratios(split_ratios)
    by_title = _title_map(encyclopedia)

    picked: list[tuple[Term, str]] = []
    for term in sorted(terms, key=lambda t: t.normalized):
        doc = by_title.get(term.normalized)
        if doc is None:
            continue
        summary = doc.section_text("summary")
        if summary is None:
            logger.warning("term %r: page has no summary section; skipped", term.normalized)
            continue
        summary_sents = split_sentences(summary)
        if not summary_sents:
            logger.warning("term %r: empty summary section; skipped", term.normalized)
            continue
        picked.append((term, summary_sents[0]))

    splits = assign_splits([t.normalized for t, _ in picked], split_ratios, seed)
    examples: list[GenerationExample] = []
    for term, gold in picked:
        candidates: list[SentenceRecord] = []
        seen: set[str] = set()
        for doc in web:
            if doc.source != Source.WEB:
                continue
            for section, sent in iter_sentences(doc):
                rec = sentence_record(doc, section, sent, term)
                if not rec.contains_term or rec.text == gold:
                    continue
                key = " ".join(tokenize(rec.text))
                if key in seen:
                    continue
                seen.add(key)
                candidates.append(rec)
        if not candidates:
            logger.warning("term %r: no web candidate sentences", term.normalized)
        examples.append(
            GenerationExample(
                term=term,
                gold_definition=gold,
                candidate_sentences=candidates,
                split=splits[term.normalized],
            )
        )
    return examples


# --- JSONL I/O -------------------------------------------------------------


def read_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    """Yield record objects from a JSONL file, skipping a provenance header line."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if isinstance(obj, dict) and "_header" in obj:
                continue
            yield obj


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]], header: dict[str, Any] | None = None) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        if header is not None:
            fh.write(json.dumps({"_header": header}, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            count += 1
    return count


def load_corpus(path: str | Path, source: Source) -> ParseResult:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IngestError(f"cannot open corpus file {path}: {exc}") from exc
    with fh:
        return parse_corpus(fh, source)


def load_terms(path: str | Path) -> list[Term]:
    """Load a term list from JSONL lines of {"surface": ..., "field": ...}."""
    terms = []
    for rec in read_jsonl(path):
        field = Field(rec.get("field", "other"))
        terms.append(Term.from_surface(rec["surface"], field=field))
    return terms


def with_frequencies(terms: list[Term], reference_corpus: list[Document]) -> list[Term]:
    """Return terms with ref_frequency recomputed against a reference corpus."""
    return [
        Term(
            surface=t.surface,
            normalized=t.normalized,
            field=t.field,
            ref_frequency=term_frequency(t, reference_corpus),
        )
        for t in terms
    ]


def load_extraction_dataset(path: str | Path) -> list[ExtractionExample]:
    return [ExtractionExample.from_dict(rec) for rec in read_jsonl(path)]


def load_generation_dataset(path: str | Path) -> list[GenerationExample]:
    return [GenerationExample.from_dict(rec) for rec in read_jsonl(path)]
