"""Text-overlap metrics, classification scores, and report assembly.

All metrics share one tokenizer (lowercase, punctuation split out into
standalone tokens) and report on a 0..100 scale. BLEU is corpus-level with
exponentially smoothed zero counts; ROUGE-L and METEOR are averaged over
pairs. Scores are comparable run-to-run of this tool, not guaranteed equal to
any external implementation.
"""

from __future__ import annotations

import csv
import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .textnorm import depluralize
from .types import Label, Term

_METRIC_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5

BLEU_MAX_ORDER = 4


def metric_tokenize(text: str) -> list[str]:
    """Lowercase and split, treating each punctuation mark as its own token."""
    return _METRIC_TOKEN_RE.findall(text.lower())


# --- BLEU ---------------------------------------------------------------------


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def clipped_ngram_matches(hyp_tokens: Sequence[str], ref_tokens: Sequence[str], n: int) -> tuple[int, int]:
    """(clipped match count, hypothesis n-gram count) for one pair at order n."""
    hyp_counts = ngram_counts(hyp_tokens, n)
    ref_counts = ngram_counts(ref_tokens, n)
    clipped = sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())
    total = max(0, len(hyp_tokens) - n + 1)
    return clipped, total


def bleu_corpus(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    """Corpus-level BLEU in [0, 100].

    Geometric mean of modified n-gram precisions (n = 1..4) times the brevity
    penalty. Orders with zero matches are smoothed to 1 / (2^runs * total);
    orders the corpus is too short to instantiate are dropped from the mean.
    """
    if len(hypotheses) != len(references):
        raise ValueError(f"length mismatch: {len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise ValueError("empty evaluation set")
    correct = [0] * BLEU_MAX_ORDER
    total = [0] * BLEU_MAX_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_tokens = metric_tokenize(hyp)
        ref_tokens = metric_tokenize(ref)
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, BLEU_MAX_ORDER + 1):
            clipped, count = clipped_ngram_matches(hyp_tokens, ref_tokens, n)
            correct[n - 1] += clipped
            total[n - 1] += count
    if hyp_len == 0:
        return 0.0
    smooth = 1.0
    log_sum = 0.0
    orders = 0
    for n in range(1, BLEU_MAX_ORDER + 1):
        if total[n - 1] == 0:
            continue
        if correct[n - 1] == 0:
            smooth *= 2.0
            precision = 1.0 / (smooth * total[n - 1])
        else:
            precision = correct[n - 1] / total[n - 1]
        log_sum += math.log(precision)
        orders += 1
    if orders == 0:
        return 0.0
    geo_mean = math.exp(log_sum / orders)
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * geo_mean


def sentence_bleu(hypothesis: str, reference: str) -> float:
    return bleu_corpus([hypothesis], [reference])


# --- ROUGE-L ------------------------------------------------------------------


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            if ai == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = cur[j - 1] if cur[j - 1] >= prev[j] else prev[j]
        prev = cur
    return prev[len(b)]


def rouge_l(hypothesis: str, reference: str) -> float:
    """LCS-based F1 in [0, 100]."""
    hyp_tokens = metric_tokenize(hypothesis)
    ref_tokens = metric_tokenize(reference)
    lcs = _lcs_length(hyp_tokens, ref_tokens)
    if lcs == 0:
        return 0.0
    precision = lcs / len(hyp_tokens)
    recall = lcs / len(ref_tokens)
    return 100.0 * 2.0 * precision * recall / (precision + recall)


# --- METEOR -------------------------------------------------------------------


def _align_unigrams(hyp_tokens: list[str], ref_tokens: list[str], use_stem: bool) -> list[tuple[int, int]]:
    """Greedy in-order one-to-one alignment: exact matches first, then stem matches."""
    matches: list[tuple[int, int]] = []
    hyp_free = [True] * len(hyp_tokens)
    ref_free = [True] * len(ref_tokens)

    stages = [lambda t: t]
    if use_stem:
        stages.append(depluralize)
    for key in stages:
        for i, tok in enumerate(hyp_tokens):
            if not hyp_free[i]:
                continue
            want = key(tok)
            for j, ref_tok in enumerate(ref_tokens):
                if ref_free[j] and key(ref_tok) == want:
                    matches.append((i, j))
                    hyp_free[i] = False
                    ref_free[j] = False
                    break
    matches.sort()
    return matches


def _chunk_count(matches: list[tuple[int, int]]) -> int:
    chunks = 0
    prev: tuple[int, int] | None = None
    for i, j in matches:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor(hypothesis: str, reference: str, use_stem: bool = True) -> float:
    """Unigram-alignment METEOR in [0, 100] (exact + plural-suffix stem matching)."""
    hyp_tokens = metric_tokenize(hypothesis)
    ref_tokens = metric_tokenize(reference)
    matches = _align_unigrams(hyp_tokens, ref_tokens, use_stem)
    m = len(matches)
    if m == 0:
        return 0.0
    precision = m / len(hyp_tokens)
    recall = m / len(ref_tokens)
    f_mean = precision * recall / (METEOR_ALPHA * precision + (1.0 - METEOR_ALPHA) * recall)
    penalty = METEOR_GAMMA * (_chunk_count(matches) / m) ** METEOR_BETA
    return 100.0 * f_mean * (1.0 - penalty)


# --- classification scores ------------------------------------------------------


def f1_score(precision_pct: float, recall_pct: float) -> float:
    """Harmonic mean of precision and recall, both on the 0..100 scale."""
    if precision_pct + recall_pct == 0:
        return 0.0
    return 2.0 * precision_pct * recall_pct / (precision_pct + recall_pct)


def prf1(predictions: Sequence[Label], gold: Sequence[Label]) -> tuple[float, float, float]:
    """Precision, recall, and F1 (percent) on the positive class."""
    if len(predictions) != len(gold):
        raise ValueError(f"length mismatch: {len(predictions)} predictions vs {len(gold)} gold labels")
    tp = fp = fn = 0
    for pred, actual in zip(predictions, gold):
        if pred == Label.POSITIVE and actual == Label.POSITIVE:
            tp += 1
        elif pred == Label.POSITIVE:
            fp += 1
        elif actual == Label.POSITIVE:
            fn += 1
    precision = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    recall = 100.0 * tp / (tp + fn) if tp + fn else 0.0
    return precision, recall, f1_score(precision, recall)


# --- frequency buckets -----------------------------------------------------------


@dataclass
class Bucket:
    label: str
    lo: float
    hi: float
    n: int
    scores: dict[str, float | None]

    def to_dict(self) -> dict[str, Any]:
        return {"bucket": self.label, "lo": self.lo, "hi": self.hi, "n": self.n, "scores": self.scores}


def bucketize_by_frequency(
    items: Sequence[tuple[Term, dict[str, float]]], bucket_edges: Sequence[int]
) -> list[Bucket]:
    """Group per-term scores into half-open frequency buckets and average them.

    Implicit underflow/overflow buckets cover frequencies outside the given
    edges, so every item lands in exactly one bucket.
    """
    edges = list(bucket_edges)
    if any(edges[i] >= edges[i + 1] for i in range(len(edges) - 1)):
        raise ValueError(f"bucket edges must be strictly increasing, got {edges}")
    bounds: list[tuple[str, float, float]] = []
    if edges:
        bounds.append((f"<{edges[0]}", float("-inf"), float(edges[0])))
        for lo, hi in zip(edges, edges[1:]):
            bounds.append((f"[{lo},{hi})", float(lo), float(hi)))
        bounds.append((f">={edges[-1]}", float(edges[-1]), float("inf")))
    else:
        bounds.append(("all", float("-inf"), float("inf")))

    metric_keys: list[str] = []
    for _, scores in items:
        for key in scores:
            if key not in metric_keys:
                metric_keys.append(key)

    buckets = []
    for label, lo, hi in bounds:
        members = [scores for term, scores in items if lo <= term.ref_frequency < hi]
        means: dict[str, float | None] = {}
        for key in metric_keys:
            values = [s[key] for s in members if key in s]
            means[key] = sum(values) / len(values) if values else None
        buckets.append(Bucket(label=label, lo=lo, hi=hi, n=len(members), scores=means))
    return buckets


# --- human ratings ----------------------------------------------------------------


@dataclass
class HumanRatings:
    """Per-term 1..5 ratings, one per annotator, in a fixed annotator order."""

    annotator_ids: list[str]
    ratings: dict[str, list[int]]

    def __post_init__(self) -> None:
        width = len(self.annotator_ids)
        for term, row in self.ratings.items():
            if len(row) != width:
                raise ValueError(f"term {term!r} rated by {len(row)} annotators, expected {width}")
            for r in row:
                if not 1 <= r <= 5:
                    raise ValueError(f"rating {r} for term {term!r} outside 1..5")


def cohen_kappa(a: Sequence[int], b: Sequence[int]) -> float:
    """Chance-corrected agreement between two categorical rating vectors."""
    if len(a) != len(b) or not a:
        raise ValueError("rating vectors must be nonempty and the same length")
    n = len(a)
    observed = sum(x == y for x, y in zip(a, b)) / n
    if observed == 1.0:
        return 1.0
    counts_a = Counter(a)
    counts_b = Counter(b)
    expected = sum(counts_a[c] * counts_b.get(c, 0) for c in counts_a) / (n * n)
    if expected == 1.0:
        return 0.0
    return (observed - expected) / (1.0 - expected)


def aggregate_human(ratings: HumanRatings) -> tuple[float, float | None]:
    """(grand mean score, mean pairwise Cohen's kappa; kappa None for a single annotator)."""
    if not ratings.ratings:
        raise ValueError("no ratings to aggregate")
    all_values = [r for row in ratings.ratings.values() for r in row]
    mean_score = sum(all_values) / len(all_values)
    n_annotators = len(ratings.annotator_ids)
    if n_annotators < 2:
        return mean_score, None
    terms = sorted(ratings.ratings)
    kappas = []
    for i in range(n_annotators):
        for j in range(i + 1, n_annotators):
            col_i = [ratings.ratings[t][i] for t in terms]
            col_j = [ratings.ratings[t][j] for t in terms]
            kappas.append(cohen_kappa(col_i, col_j))
    return mean_score, sum(kappas) / len(kappas)


def load_human_ratings(path: str | Path) -> HumanRatings:
    """Load a term,annotator_id,rating CSV (header optional)."""
    by_term: dict[str, dict[str, int]] = {}
    annotators: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[:2] == ["term", "annotator_id"]:
                continue
            term, annotator, rating = row[0], row[1], int(row[2])
            if annotator not in annotators:
                annotators.append(annotator)
            by_term.setdefault(term, {})[annotator] = rating
    annotators.sort()
    ratings = {}
    for term, per_annotator in by_term.items():
        if sorted(per_annotator) != annotators:
            raise ValueError(f"term {term!r} not rated by the full annotator set {annotators}")
        ratings[term] = [per_annotator[a] for a in annotators]
    return HumanRatings(annotator_ids=annotators, ratings=ratings)


# --- report assembly ---------------------------------------------------------------


@dataclass
class EvalReport:
    corpus: dict[str, float | None]
    per_term: list[dict[str, Any]]
    buckets: list[Bucket]
    human: dict[str, float | None] | None
    n_items: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "corpus": self.corpus,
            "per_term": self.per_term,
            "buckets": [b.to_dict() for b in self.buckets],
            "human": self.human,
            "n_items": self.n_items,
        }


def build_report(
    pairs: Sequence[tuple[Term, str, str]],
    bucket_edges: Sequence[int] = (),
    human: HumanRatings | None = None,
) -> EvalReport:
    """Score (term, hypothesis, reference) triples and assemble the full report."""
    if not pairs:
        raise ValueError("empty evaluation set")
    per_term = []
    scored_items = []
    for term, hyp, ref in pairs:
        scores = {
            "bleu": sentence_bleu(hyp, ref),
            "rouge_l": rouge_l(hyp, ref),
            "meteor": meteor(hyp, ref),
        }
        per_term.append({"term": term.surface, "ref_frequency": term.ref_frequency, **scores})
        scored_items.append((term, scores))
    corpus: dict[str, float | None] = {
        "bleu": bleu_corpus([h for _, h, _ in pairs], [r for _, _, r in pairs]),
        "rouge_l": sum(s["rouge_l"] for _, s in scored_items) / len(scored_items),
        "meteor": sum(s["meteor"] for _, s in scored_items) / len(scored_items),
        "bert_score": None,
    }
    human_agg = None
    if human is not None:
        mean_score, kappa = aggregate_human(human)
        human_agg = {"mean_score": mean_score, "kappa": kappa}
    buckets = bucketize_by_frequency(scored_items, bucket_edges)
    return EvalReport(corpus=corpus, per_term=per_term, buckets=buckets, human=human_agg, n_items=len(pairs))


def report_tsv(report: EvalReport) -> str:
    """Two-line TSV summary in BL, R-L, MT, BS column order."""
    corpus = report.corpus
    bs = corpus.get("bert_score")
    cells = [
        f"{corpus['bleu']:.2f}",
        f"{corpus['rouge_l']:.2f}",
        f"{corpus['meteor']:.2f}",
        "null" if bs is None else f"{bs:.2f}",
    ]
    return "BL\tR-L\tMT\tBS\n" + "\t".join(cells) + "\n"


def save_report(report: EvalReport, path: str | Path, header: dict[str, Any] | None = None) -> None:
    doc = report.to_dict()
    if header is not None:
        doc["_header"] = header
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
