from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from defpipe.types import Document, Source, Term


def enc_doc(doc_id: str, title: str, summary: str, **other_sections: str) -> Document:
    sections = [("summary", summary)] + [(name, text) for name, text in other_sections.items()]
    return Document(doc_id=doc_id, title=title, source=Source.ENCYCLOPEDIA, sections=sections)


def web_doc(doc_id: str, title: str, text: str, section: str = "body") -> Document:
    return Document(doc_id=doc_id, title=title, source=Source.WEB, sections=[(section, text)])


@pytest.fixture
def encyclopedia() -> list[Document]:
    return [
        enc_doc(
            "enc-1",
            "Twin prime",
            "A twin prime is a prime number that is either 2 less or 2 more than another prime number. "
            "Twin primes become rarer as numbers grow.",
            history="The twin prime conjecture is old. Many mathematicians studied the twin prime distribution. "
            "Work on the twin prime problem continues.",
        ),
        enc_doc(
            "enc-2",
            "Zero-shot learning",
            "Zero-shot learning is a problem setup in machine learning where a model handles classes never seen in training. "
            "It relies on auxiliary descriptions.",
            methods="Attribute vectors drive zero-shot learning systems. Benchmarks for zero-shot learning vary widely.",
        ),
        enc_doc(
            "enc-3",
            "Organic chemistry",
            "Organic chemistry is the branch of chemistry that studies the structure of carbon-containing compounds. "
            "It overlaps with biochemistry.",
            scope="Reactions in organic chemistry follow mechanisms. Organic chemistry laboratories use spectroscopy.",
        ),
        enc_doc(
            "enc-4",
            "Meta learning",
            "Meta learning is the study of algorithms that learn how to learn from experience across tasks. "
            "It gained traction recently.",
            details="Optimization-based meta learning adapts quickly. Surveys of meta learning list many variants.",
        ),
    ]


@pytest.fixture
def web() -> list[Document]:
    return [
        web_doc(
            "web-1",
            "math blog",
            "A twin prime is a prime number that differs from another prime by two. "
            "The twin prime conjecture remains unsolved. "
            "Everyone loves prime numbers.",
        ),
        web_doc(
            "web-2",
            "ml forum",
            "Zero-shot learning is a setup where predictions are made for unseen classes. "
            "Few-shot learning is a problem setup in machine learning where predictions are made based on a few training examples. "
            "People discuss few-shot learning benchmarks all day.",
        ),
        web_doc(
            "web-3",
            "mirror page",
            "A twin prime is a prime number that differs from another prime by two. "
            "This page mirrors the blog above.",
        ),
    ]


@pytest.fixture
def terms() -> list[Term]:
    return [
        Term.from_surface("Twin primes", ref_frequency=9),
        Term.from_surface("Zero-shot learning", ref_frequency=7),
        Term.from_surface("Organic chemistry", ref_frequency=6),
        Term.from_surface("Meta learning", ref_frequency=5),
        Term.from_surface("Few-shot learning", ref_frequency=3),
    ]
