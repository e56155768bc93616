"""Core domain types shared across the pipeline, with JSONL-friendly (de)serialization."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .textnorm import normalize_surface


class Source(str, Enum):
    ENCYCLOPEDIA = "encyclopedia"
    WEB = "web"


class Field(str, Enum):
    CS = "cs"
    MATH = "math"
    PHY = "phy"
    OTHER = "other"


class Label(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class Split(str, Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST = "test"


@dataclass(frozen=True)
class Term:
    """A target term: raw surface form plus its normalized (head-lemmatized) form."""

    surface: str
    normalized: str
    field: Field = Field.OTHER
    ref_frequency: int = 0

    def __post_init__(self) -> None:
        if not self.normalized or self.normalized != self.normalized.strip():
            raise ValueError(f"bad normalized term: {self.normalized!r}")
        if self.ref_frequency < 0:
            raise ValueError("ref_frequency must be >= 0")

    @classmethod
    def from_surface(cls, surface: str, field: Field = Field.OTHER, ref_frequency: int = 0) -> "Term":
        return cls(surface=surface, normalized=normalize_surface(surface), field=field, ref_frequency=ref_frequency)

    def to_dict(self) -> dict[str, Any]:
        return {
            "surface": self.surface,
            "normalized": self.normalized,
            "field": self.field.value,
            "ref_frequency": self.ref_frequency,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Term":
        return cls(
            surface=d["surface"],
            normalized=d["normalized"],
            field=Field(d.get("field", "other")),
            ref_frequency=int(d.get("ref_frequency", 0)),
        )


@dataclass
class Document:
    """One source document: an encyclopedia page or a fetched web page."""

    doc_id: str
    title: str
    source: Source
    sections: list[tuple[str, str]]
    url: str | None = None

    def section_text(self, name: str) -> str | None:
        for sec_name, text in self.sections:
            if sec_name == name:
                return text
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "source": self.source.value,
            "url": self.url,
            "sections": [{"name": n, "text": t} for n, t in self.sections],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Document":
        return cls(
            doc_id=d["doc_id"],
            title=d["title"],
            source=Source(d["source"]),
            url=d.get("url"),
            sections=[(s["name"], s["text"]) for s in d["sections"]],
        )


@dataclass(frozen=True)
class SentenceRecord:
    """A single segmented sentence with provenance."""

    text: str
    doc_id: str
    source: Source
    section: str
    contains_term: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "doc_id": self.doc_id,
            "source": self.source.value,
            "section": self.section,
            "contains_term": self.contains_term,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SentenceRecord":
        return cls(
            text=d["text"],
            doc_id=d["doc_id"],
            source=Source(d["source"]),
            section=d["section"],
            contains_term=bool(d["contains_term"]),
        )


@dataclass
class ExtractionExample:
    """A (term, sentence) pair labeled definitional / non-definitional."""

    term: Term
    sentence: SentenceRecord
    label: Label
    split: Split

    def to_dict(self) -> dict[str, Any]:
        return {
            "term": self.term.to_dict(),
            "sentence": self.sentence.to_dict(),
            "label": self.label.value,
            "split": self.split.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExtractionExample":
        return cls(
            term=Term.from_dict(d["term"]),
            sentence=SentenceRecord.from_dict(d["sentence"]),
            label=Label(d["label"]),
            split=Split(d["split"]),
        )


@dataclass
class GenerationExample:
    """A term with its reference definition and web candidate sentences."""

    term: Term
    gold_definition: str
    candidate_sentences: list[SentenceRecord] = field(default_factory=list)
    split: Split = Split.TRAIN

    def to_dict(self) -> dict[str, Any]:
        return {
            "term": self.term.to_dict(),
            "gold_definition": self.gold_definition,
            "candidate_sentences": [s.to_dict() for s in self.candidate_sentences],
            "split": self.split.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GenerationExample":
        return cls(
            term=Term.from_dict(d["term"]),
            gold_definition=d["gold_definition"],
            candidate_sentences=[SentenceRecord.from_dict(s) for s in d["candidate_sentences"]],
            split=Split(d["split"]),
        )
