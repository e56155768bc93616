"""Definitional-sentence scoring and ranking.

Candidate sentences for a term are ranked by the confidence of a sentence
scorer. The built-in scorer is a logistic regression over a fixed,
interpretable feature set; a neural scorer can be plugged in over HTTP through
ExternalScorer without changing any call site (both are plain callables of
(term, sentence) -> confidence).
"""

from __future__ import annotations

import json
import logging
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import requests

from . import evaluator, httpclient
from .errors import ProtocolViolation
from .textnorm import contains_token_seq, find_token_seq, tokenize
from .types import Document, ExtractionExample, Label, SentenceRecord, Source, Term

logger = logging.getLogger(__name__)

FEATURE_SPEC_VERSION = "fv1"

_CUES: tuple[tuple[str, ...], ...] = (
    ("is", "a"),
    ("is", "an"),
    ("is", "the"),
    ("refers", "to"),
    ("is", "defined", "as"),
    ("is", "a", "type", "of"),
    ("denotes",),
)
_COPULAS = frozenset({"is", "are", "was", "were"})
_DETERMINERS = frozenset({"a", "an", "the"})
_LENGTH_BUCKETS = ((0, 8), (9, 16), (17, 32), (33, 64), (65, 10**9))
_ACRONYM_RE = re.compile(r"\([A-Z]{2,}\)")
_SUMMARY_SECTIONS = frozenset({"summary", "abstract", "introduction", "overview", "definition", "lead"})

FEATURE_NAMES: tuple[str, ...] = tuple(
    [f"cue:{' '.join(c)}" for c in _CUES]
    + ["term_at_start", "term_position", ]
    + [f"len_{lo}_{hi}" for lo, hi in _LENGTH_BUCKETS]
    + ["copula", "paren_acronym", "digit_ratio", "summary_section"]
)
N_FEATURES = len(FEATURE_NAMES)

ScorerFn = Callable[[Term, SentenceRecord], float]


@dataclass(frozen=True)
class ScoredSentence:
    sentence: SentenceRecord
    confidence: float

    def to_dict(self) -> dict[str, Any]:
        return {"sentence": self.sentence.to_dict(), "confidence": self.confidence}


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    feature_spec_version: str = FEATURE_SPEC_VERSION


@dataclass
class ScorerModel:
    weights: np.ndarray
    bias: float
    feature_spec_version: str = FEATURE_SPEC_VERSION
    training_meta: dict[str, Any] = field(default_factory=dict)


def collect_candidates(term: Term, web_corpus: Sequence[Document]) -> list[SentenceRecord]:
    """All web sentences mentioning the term, deduplicated by normalized text."""
    from .ingest import iter_sentences  # local import to avoid a module cycle

    needle = term.normalized.split()
    out: list[SentenceRecord] = []
    seen: set[str] = set()
    for doc in web_corpus:
        if doc.source != Source.WEB:
            continue
        for section, sent in iter_sentences(doc):
            toks = tokenize(sent)
            if not contains_token_seq(needle, toks):
                continue
            key = " ".join(toks)
            if key in seen:
                continue
            seen.add(key)
            out.append(
                SentenceRecord(text=sent, doc_id=doc.doc_id, source=doc.source, section=section, contains_term=True)
            )
    return out


def featurize(term: Term, sentence: SentenceRecord) -> FeatureVector:
    """Deterministic feature vector for a (term, sentence) pair."""
    toks = tokenize(sentence.text)
    needle = term.normalized.split()
    values = np.zeros(N_FEATURES, dtype=np.float64)

    i = 0
    for cue in _CUES:
        values[i] = 1.0 if contains_token_seq(list(cue), toks) else 0.0
        i += 1

    pos = find_token_seq(needle, toks)
    head = toks[1:] if toks and toks[0] in _DETERMINERS else toks
    values[i] = 1.0 if needle and head[: len(needle)] == needle else 0.0
    i += 1
    values[i] = (len(toks) - pos) / len(toks) if pos >= 0 and toks else 0.0
    i += 1

    n = len(toks)
    for lo, hi in _LENGTH_BUCKETS:
        values[i] = 1.0 if lo <= n <= hi else 0.0
        i += 1

    values[i] = 1.0 if any(t in _COPULAS for t in toks) else 0.0
    i += 1
    values[i] = 1.0 if _ACRONYM_RE.search(sentence.text) else 0.0
    i += 1
    chars = [c for c in sentence.text if not c.isspace()]
    values[i] = sum(c.isdigit() for c in chars) / max(1, len(chars))
    i += 1
    values[i] = 1.0 if sentence.section.lower() in _SUMMARY_SECTIONS else 0.0
    return FeatureVector(values=values)


def _sigmoid(z: float) -> float:
    z = max(-30.0, min(30.0, z))
    return 1.0 / (1.0 + math.exp(-z))


def _mean_loss(x: np.ndarray, y: np.ndarray, w: np.ndarray, b: float) -> float:
    total = 0.0
    for i in range(len(y)):
        p = _sigmoid(float(x[i] @ w) + b)
        total += -(y[i] * math.log(p) + (1.0 - y[i]) * math.log(1.0 - p))
    return total / len(y)


def fit_logistic(
    features: np.ndarray,
    labels: np.ndarray,
    learning_rate: float = 0.1,
    epochs: int = 20,
    seed: int = 0,
) -> tuple[np.ndarray, float, list[float]]:
    """Binary logistic regression by seeded per-sample SGD.

    Full-batch loss is evaluated after every pass; a pass that raised the loss
    is rolled back and retried at half the step size, so the recorded loss
    series never increases. Returns (weights, bias, losses) where losses[0] is
    the pre-training loss.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n, dim = x.shape
    w = np.zeros(dim, dtype=np.float64)
    b = 0.0
    rng = random.Random(f"{seed}:sgd")
    losses = [_mean_loss(x, y, w, b)]
    order = list(range(n))
    lr = learning_rate
    for _ in range(epochs):
        if lr < 1e-9:
            break
        w_prev, b_prev = w.copy(), b
        rng.shuffle(order)
        for idx in order:
            p = _sigmoid(float(x[idx] @ w) + b)
            g = p - y[idx]
            w -= lr * g * x[idx]
            b -= lr * g
        loss = _mean_loss(x, y, w, b)
        if loss > losses[-1] + 1e-12:
            w, b = w_prev, b_prev
            lr *= 0.5
            continue
        losses.append(loss)
    return w, b, losses


def train_scorer(
    examples: Sequence[ExtractionExample],
    learning_rate: float = 0.1,
    epochs: int = 20,
    seed: int = 0,
) -> ScorerModel:
    """Train the built-in logistic scorer on labeled extraction examples."""
    if not examples:
        raise ValueError("degenerate training set: no examples")
    labels = np.array([1.0 if ex.label == Label.POSITIVE else 0.0 for ex in examples])
    if labels.min() == labels.max():
        raise ValueError("degenerate training set: needs both positive and negative examples")
    features = np.stack([featurize(ex.term, ex.sentence).values for ex in examples])
    weights, bias, losses = fit_logistic(features, labels, learning_rate, epochs, seed)
    return ScorerModel(
        weights=weights,
        bias=bias,
        training_meta={
            "seed": seed,
            "epochs": epochs,
            "learning_rate": learning_rate,
            "epoch_losses": losses,
        },
    )


def score(model: ScorerModel, term: Term, sentence: SentenceRecord) -> float:
    """Confidence in (0, 1) that the sentence defines the term."""
    fv = featurize(term, sentence)
    if fv.feature_spec_version != model.feature_spec_version:
        raise ValueError(
            f"feature spec mismatch: model {model.feature_spec_version!r} vs extractor {fv.feature_spec_version!r}"
        )
    return _sigmoid(float(fv.values @ model.weights) + model.bias)


def make_scorer(model: ScorerModel) -> ScorerFn:
    return lambda term, sentence: score(model, term, sentence)


def rank_sdi(
    term: Term, candidates: Sequence[SentenceRecord], k: int, scorer: ScorerFn
) -> list[ScoredSentence]:
    """Top-k candidates by scorer confidence.

    Ties break toward the longer sentence, then lexicographic text, so the
    ranking is a stable total order and top-k is always a prefix of top-(k+1).
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    scored = [ScoredSentence(sentence=c, confidence=scorer(term, c)) for c in candidates]
    scored.sort(key=lambda s: (-s.confidence, -len(s.sentence.text), s.sentence.text))
    return scored[:k]


def evaluate_scorer(
    model: ScorerModel, examples: Sequence[ExtractionExample], threshold: float = 0.5
) -> tuple[float, float, float]:
    """Precision/recall/F1 (percent) of the scorer at the given threshold."""
    predictions = [
        Label.POSITIVE if score(model, ex.term, ex.sentence) > threshold else Label.NEGATIVE
        for ex in examples
    ]
    gold = [ex.label for ex in examples]
    return evaluator.prf1(predictions, gold)


# --- model persistence -------------------------------------------------------


def save_model(model: ScorerModel, path: str | Path, header: dict[str, Any] | None = None) -> None:
    doc = {
        "feature_spec_version": model.feature_spec_version,
        "weights": [float(v) for v in model.weights],
        "bias": float(model.bias),
        "training_meta": model.training_meta,
    }
    if header is not None:
        doc["_header"] = header
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> ScorerModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return ScorerModel(
        weights=np.array(doc["weights"], dtype=np.float64),
        bias=float(doc["bias"]),
        feature_spec_version=doc["feature_spec_version"],
        training_meta=doc.get("training_meta", {}),
    )


# --- external scorer over HTTP ----------------------------------------------


class ExternalScorer:
    """Client for the remote scorer protocol (POST /score and /score_batch).

    Instances are valid ScorerFn callables, so rank_sdi can use a remote
    neural scorer in place of the built-in model.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.5,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()

    def score(self, jargon: str, sentence: str) -> float:
        data = httpclient.post_json(
            self.session,
            self.endpoint + "/score",
            {"jargon": jargon, "sentence": sentence},
            timeout=self.timeout,
            retries=self.retries,
            backoff=self.backoff,
        )
        return _check_confidence(data.get("confidence"))

    def score_batch(self, jargons: Sequence[str], sentences: Sequence[str]) -> list[float]:
        if len(jargons) != len(sentences):
            raise ValueError("jargons and sentences must be parallel arrays")
        data = httpclient.post_json(
            self.session,
            self.endpoint + "/score_batch",
            {"jargons": list(jargons), "sentences": list(sentences)},
            timeout=self.timeout,
            retries=self.retries,
            backoff=self.backoff,
        )
        confidences = data.get("confidences")
        if not isinstance(confidences, list) or len(confidences) != len(jargons):
            raise ProtocolViolation("score_batch response must carry a parallel 'confidences' array")
        return [_check_confidence(c) for c in confidences]

    def __call__(self, term: Term, sentence: SentenceRecord) -> float:
        return self.score(term.surface, sentence.text)


def _check_confidence(value: Any) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise ProtocolViolation(f"confidence must be a finite number, got {value!r}")
    if not 0.0 <= value <= 1.0:
        raise ProtocolViolation(f"confidence {value} outside [0, 1]")
    return float(value)
