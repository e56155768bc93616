"""Shared text normalization: tokenizer, head de-pluralizer, token-sequence search.

Every component that compares term surfaces against sentence text goes through
these helpers so that matching behaves identically across the pipeline.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# Irregular plurals common in technical writing.
_IRREGULAR = {
    "indices": "index",
    "matrices": "matrix",
    "vertices": "vertex",
    "analyses": "analysis",
    "hypotheses": "hypothesis",
    "criteria": "criterion",
    "phenomena": "phenomenon",
}

# Words ending in "s" that are not plurals (or whose singular is itself).
_KEEP_S = frozenset(
    {
        "bias",
        "basis",
        "axis",
        "corpus",
        "calculus",
        "consensus",
        "census",
        "series",
        "species",
        "physics",
        "mathematics",
        "dynamics",
        "statistics",
        "semantics",
        "economics",
        "robotics",
        "genetics",
        "thermodynamics",
        "electronics",
        "informatics",
        "news",
        "chaos",
        "gas",
        "canvas",
        "atlas",
    }
)


def tokenize(text: str) -> list[str]:
    """Lowercase and split into alphanumeric tokens, dropping punctuation."""
    return _TOKEN_RE.findall(text.lower())


def depluralize(word: str) -> str:
    """De-pluralize a single lowercase token with a small suffix-rule table.

    Intentionally shallow: good enough to map page titles like "twin primes"
    onto the singular head form, not a morphological analyzer.
    """
    if word in _IRREGULAR:
        return _IRREGULAR[word]
    if word in _KEEP_S or len(word) <= 3 or not word.endswith("s"):
        return word
    if word.endswith("ss"):
        return word
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith(("xes", "ches", "shes", "sses", "zes")):
        return word[:-2]
    if word.endswith("ses"):
        return word[:-1]
    if word.endswith(("us", "is")):
        return word
    return word[:-1]


def normalize_surface(surface: str) -> str:
    """Normalize a term surface: lowercase, collapse whitespace, de-pluralize the head token."""
    tokens = tokenize(surface)
    if not tokens:
        return ""
    tokens[-1] = depluralize(tokens[-1])
    return " ".join(tokens)


def find_token_seq(needle: list[str], haystack: list[str]) -> int:
    """Index of the first contiguous occurrence of `needle` in `haystack`, or -1."""
    n = len(needle)
    if n == 0 or n > len(haystack):
        return -1
    first = needle[0]
    for i in range(len(haystack) - n + 1):
        if haystack[i] == first and haystack[i : i + n] == needle:
            return i
    return -1


def contains_token_seq(needle: list[str], haystack: list[str]) -> bool:
    return find_token_seq(needle, haystack) >= 0
