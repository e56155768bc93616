"""Acceptance suite: one test per release criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Tolerances and runtime ceilings are part of the criteria and are
asserted, not merely logged.
"""

from __future__ import annotations

import json
import math
import random
import time
from collections import Counter

import pytest

from defpipe import cli, evaluator, extractor, generator, ingest, retriever
from defpipe.evaluator import METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA
from defpipe.types import Label, SentenceRecord, Source, Split, Term
from synthdata import make_definitional_dataset

PASS = "ACCEPTANCE PASS"


def _record(text, section="body", source=Source.WEB):
    return SentenceRecord(text=text, doc_id="x", source=source, section=section, contains_term=True)


# --- criterion 1: metric oracle equivalence -----------------------------------


def _lcs_oracle(a, b):
    memo = {}

    def rec(i, j):
        if i == len(a) or j == len(b):
            return 0
        if (i, j) not in memo:
            if a[i] == b[j]:
                memo[i, j] = 1 + rec(i + 1, j + 1)
            else:
                memo[i, j] = max(rec(i + 1, j), rec(i, j + 1))
        return memo[i, j]

    return rec(0, 0)


def _clip_oracle(hyp, ref, n):
    hyp_ngrams = [tuple(hyp[i : i + n]) for i in range(len(hyp) - n + 1)]
    ref_counts = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
    clipped = sum(min(c, ref_counts.get(g, 0)) for g, c in Counter(hyp_ngrams).items())
    return clipped, len(hyp_ngrams)


def _meteor_fixture(rng):
    """A (hyp, ref, expected) triple with the match set known by construction.

    Tokens are globally unique within the pair, so the maximal unigram
    alignment is exactly the set of shared tokens and the chunk count follows
    from their positions alone.
    """
    ref_tokens = [f"w{rng.randint(0, 10**6)}x{i}" for i in range(rng.randint(2, 10))]
    kept = sorted(rng.sample(range(len(ref_tokens)), rng.randint(1, len(ref_tokens))))
    hyp_tokens = [ref_tokens[i] for i in kept]
    for _ in range(rng.randint(0, 4)):
        hyp_tokens.insert(rng.randint(0, len(hyp_tokens)), f"junk{rng.randint(0, 10**6)}q")
    if rng.random() < 0.3:
        rng.shuffle(hyp_tokens)

    ref_pos = {tok: j for j, tok in enumerate(ref_tokens)}
    pairs = sorted((i, ref_pos[tok]) for i, tok in enumerate(hyp_tokens) if tok in ref_pos)
    m = len(pairs)
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    precision = m / len(hyp_tokens)
    recall = m / len(ref_tokens)
    f_mean = precision * recall / (METEOR_ALPHA * precision + (1 - METEOR_ALPHA) * recall)
    penalty = METEOR_GAMMA * (chunks / m) ** METEOR_BETA
    expected = 100.0 * f_mean * (1.0 - penalty)
    return " ".join(hyp_tokens), " ".join(ref_tokens), expected


def test_criterion_metric_oracle_equivalence():
    start = time.monotonic()
    rng = random.Random(101)
    vocab = ["a", "b", "c", "d", "e", "f", "g"]

    for _ in range(1000):
        hyp = [rng.choice(vocab) for _ in range(rng.randint(0, 12))]
        ref = [rng.choice(vocab) for _ in range(rng.randint(0, 12))]
        got = evaluator.rouge_l(" ".join(hyp), " ".join(ref))
        lcs = _lcs_oracle(hyp, ref)
        if lcs == 0:
            want = 0.0
        else:
            p, r = lcs / len(hyp), lcs / len(ref)
            want = 100.0 * 2 * p * r / (p + r)
        assert got == want, f"ROUGE-L mismatch on {hyp} vs {ref}"

    for _ in range(200):
        hyp = [rng.choice(vocab) for _ in range(rng.randint(1, 20))]
        ref = [rng.choice(vocab) for _ in range(rng.randint(1, 20))]
        for n in range(1, 5):
            got = evaluator.clipped_ngram_matches(hyp, ref, n)
            want = _clip_oracle(hyp, ref, n)
            assert got[1] == want[1]
            assert abs(got[0] - want[0]) <= 1e-9

    for _ in range(100):
        hyp, ref, expected = _meteor_fixture(rng)
        assert evaluator.meteor(hyp, ref) == pytest.approx(expected, abs=1e-9)

    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"metric oracle suite took {elapsed:.1f}s"
    print(f"{PASS}: metric oracle equivalence (ROUGE-L exact, BLEU clip 1e-9, METEOR 1e-9; {elapsed:.2f}s)")


# --- criterion 2: metric identity and bounds ------------------------------------


def test_criterion_metric_identity_and_bounds():
    texts = [
        "twin prime",
        "a twin prime is a prime number near another prime",
        "wear leveling spreads writes across cells",
    ]
    for text in texts:
        m = len(evaluator.metric_tokenize(text))
        assert evaluator.rouge_l(text, text) == 100.0
        assert evaluator.meteor(text, text) == pytest.approx(100.0 * (1 - 0.5 / m**3), abs=1e-12)
    assert evaluator.bleu_corpus(texts, list(texts)) == pytest.approx(100.0)

    rng = random.Random(202)
    vocab = ["a", "b", "c", "d", "e", "prime", "12", "-"]
    for _ in range(10000):
        hyp = " ".join(rng.choices(vocab, k=rng.randint(0, 10)))
        ref = " ".join(rng.choices(vocab, k=rng.randint(0, 10)))
        r = evaluator.rouge_l(hyp, ref)
        mt = evaluator.meteor(hyp, ref)
        assert 0.0 <= r <= 100.0 and 0.0 <= mt <= 100.0
        if hyp.strip() or ref.strip():
            b = evaluator.bleu_corpus([hyp], [ref]) if hyp or ref else 0.0
            assert 0.0 <= b <= 100.0
    print(f"{PASS}: metric identity values and [0,100] bounds on 10,000 fuzzed pairs")


# --- criterion 3: BM25 brute-force equivalence -----------------------------------


def test_criterion_bm25_brute_force_equivalence():
    start = time.monotonic()
    rng = random.Random(303)
    vocab = [f"tok{i}" for i in range(18)]

    def oracle_rank(entries, query, k1, b, exclude, target_norm):
        token_lists = [list(e.doc_tokens) for e in entries]
        n = len(entries)
        lengths = [len(t) for t in token_lists]
        avgdl = sum(lengths) / n
        rows = []
        for eid, entry in enumerate(entries):
            if exclude and entry.term.normalized == target_norm:
                continue
            score = 0.0
            for token in query:
                tf = token_lists[eid].count(token)
                if tf == 0:
                    continue
                df = sum(1 for t in token_lists if token in t)
                idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
                score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * lengths[eid] / avgdl))
            rows.append((score, entry.term.normalized))
        rows.sort(key=lambda x: (-x[0], x[1]))
        return [name for _, name in rows]

    for trial in range(100):
        n_docs = rng.randint(1, 50)
        entries = [
            retriever.CoreTermEntry.build(
                Term.from_surface(f"term{i} {rng.choice(vocab)}"),
                " ".join(rng.choices(vocab, k=rng.randint(1, 14))),
            )
            for i in range(n_docs)
        ]
        k1 = rng.choice([0.8, 1.2, 2.0])
        b = rng.choice([0.0, 0.4, 0.75, 1.0])
        index = retriever.build_index(entries, k1=k1, b=b)
        target = Term.from_surface(f"term{rng.randrange(n_docs)} {rng.choice(vocab)} {rng.choice(vocab)}")
        exclude = rng.random() < 0.5
        kprime = rng.randint(0, n_docs + 2)
        got = [
            r.term.normalized
            for r in retriever.retrieve_related(index, target, kprime, exclude_self=exclude)
        ]
        from defpipe.textnorm import tokenize

        want = oracle_rank(entries, tokenize(target.surface), k1, b, exclude, target.normalized)[:kprime]
        assert got == want, f"trial {trial}: ordering diverged from oracle"

    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"BM25 equivalence took {elapsed:.1f}s"
    print(f"{PASS}: BM25 ordering matches independent-formula oracle on 100 random indexes ({elapsed:.2f}s)")


# --- criterion 4: P/R/F1 harmonic mean --------------------------------------------


def test_criterion_prf1_harmonic_mean():
    f1 = evaluator.f1_score(91.84, 90.66)
    assert f1 == pytest.approx(91.25, abs=0.01)
    gold = [Label.POSITIVE] * 4 + [Label.NEGATIVE] * 4
    preds = [Label.POSITIVE] * 3 + [Label.NEGATIVE] + [Label.POSITIVE] + [Label.NEGATIVE] * 3
    assert evaluator.prf1(preds, gold) == (75.0, 75.0, 75.0)
    print(f"{PASS}: F1(91.84, 90.66) = {f1:.4f} within 0.01 of 91.25")


# --- criterion 5: ranking invariants ------------------------------------------------


def test_criterion_ranking_invariants():
    rng = random.Random(404)
    term = Term.from_surface("gadget")
    for _ in range(1000):
        n = rng.randint(0, 12)
        cands = [_record(f"sentence {i} {'pad' * rng.randint(0, 3)}") for i in range(n)]
        table = {c.text: rng.uniform(0.0, 0.6) for c in cands}
        base = lambda t, s: table[s.text]
        shifted = lambda t, s: table[s.text] + 0.3

        full = extractor.rank_sdi(term, cands, n, base)
        for k in range(n + 1):
            top_k = extractor.rank_sdi(term, cands, k, base)
            assert [s.sentence.text for s in top_k] == [s.sentence.text for s in full][:k]

        shifted_order = [s.sentence.text for s in extractor.rank_sdi(term, cands, n, shifted)]
        assert shifted_order == [s.sentence.text for s in full]
    print(f"{PASS}: top-k prefix monotonicity and confidence-shift invariance on 1,000 fuzzed rankings")


# --- criterion 6: encoding round-trip -------------------------------------------------


def test_criterion_encoding_round_trip():
    rng = random.Random(505)
    words = ["alpha", "beta", "gamma", "delta", "mu", "nu", "prime", "12"]

    def sentence():
        return " ".join(rng.choices(words, k=rng.randint(1, 8)))

    for _ in range(1000):
        surface = " ".join(rng.choices(words, k=rng.randint(1, 3)))
        term = Term.from_surface(surface)
        k = rng.randint(0, 4)
        kprime = rng.randint(0, 4)
        sdi_texts = [sentence() for _ in range(rng.randint(0, 5))]
        cdi_texts = [sentence() for _ in range(rng.randint(0, 5))]
        budget = rng.randint(6, 60)
        config = generator.PipelineConfig(k=k, kprime=kprime, token_budget=budget)
        sdi = [
            extractor.ScoredSentence(sentence=_record(t), confidence=1.0 - i / 10)
            for i, t in enumerate(sdi_texts)
        ]
        cdi = [
            retriever.RelatedDefinition(term=Term.from_surface(f"rel{i}"), definition=t, relevance=1.0)
            for i, t in enumerate(cdi_texts)
        ]
        enc = generator.encode_for_generator(term, sdi, cdi, config)

        # budget safety: never more than one whole sentence over budget
        longest = max([len(t.split()) for t in sdi_texts + cdi_texts], default=0)
        assert len(enc.text.split()) <= budget + longest
        assert enc.k_used <= k and enc.kprime_used <= kprime
        assert enc.text.startswith(term.surface)

        got_surface, got_context, got_sdi, got_cdi = generator.parse_encoded(enc)
        assert got_surface == term.surface
        assert got_context is None
        assert got_sdi == sdi_texts[: enc.k_used]
        assert got_cdi == cdi_texts[: enc.kprime_used]
    print(f"{PASS}: encode/parse round-trip and budget safety on 1,000 fuzzed inputs")


# --- criterion 7: built-in scorer sanity ------------------------------------------------


def test_criterion_builtin_scorer_sanity():
    start = time.monotonic()
    examples = make_definitional_dataset(500, seed=606)
    train = [ex for ex in examples if ex.split == Split.TRAIN]
    test = [ex for ex in examples if ex.split == Split.TEST]
    assert len(examples) == 500 and train and test

    model = extractor.train_scorer(train, seed=606)
    losses = model.training_meta["epoch_losses"]
    assert losses[-1] <= losses[0] + 1e-6, "training loss increased first-to-last"
    assert all(b <= a + 1e-6 for a, b in zip(losses, losses[1:]))

    precision, recall, f1 = extractor.evaluate_scorer(model, test)
    assert f1 >= 90.0, f"synthetic F1 {f1:.2f} below 90"
    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"scorer sanity took {elapsed:.1f}s"
    print(f"{PASS}: built-in scorer F1 {f1:.2f} >= 90 on held-out synthetic split, loss non-increasing ({elapsed:.2f}s)")


# --- criteria 8 and 9: end-to-end determinism and leakage audit ---------------------------


@pytest.fixture(scope="module")
def pipeline_workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    docs = []
    terms = []
    rng = random.Random(808)
    nouns = ["filter", "query", "router", "sensor", "ledger", "parser", "cache", "marker"]
    for i in range(8):
        name = f"{nouns[i]} unit {i}"
        docs.append(
            {
                "doc_id": f"enc-{i}",
                "title": name.title(),
                "source": "encyclopedia",
                "url": None,
                "sections": [
                    {"name": "summary",
                     "text": f"A {name} is a component that manages {nouns[(i + 1) % 8]} flows. It is widely deployed."},
                    {"name": "usage",
                     "text": f"Plants install the {name} in racks. Additional notes describe the {name} at length. "
                             f"Crews replace the {name} yearly."},
                ],
            }
        )
        terms.append({"surface": name, "field": "cs"})
    web_docs = []
    for i in range(8):
        name = f"{nouns[i]} unit {i}"
        sentences = [
            f"A {name} is a component that manages {nouns[(i + 1) % 8]} flows smoothly.",
            f"Workers mentioned the {name} during {rng.randint(3, 40)} meetings.",
            f"The {name} is a device that controls {nouns[(i + 2) % 8]} routing.",
        ]
        web_docs.append(
            {
                "doc_id": f"web-{i}",
                "title": f"page {i}",
                "source": "web",
                "url": f"http://example.test/{i}",
                "sections": [{"name": "body", "text": " ".join(sentences)}],
            }
        )
    (root / "enc.jsonl").write_text("".join(json.dumps(d) + "\n" for d in docs), encoding="utf-8")
    (root / "web.jsonl").write_text("".join(json.dumps(d) + "\n" for d in web_docs), encoding="utf-8")
    (root / "terms.jsonl").write_text("".join(json.dumps(t) + "\n" for t in terms), encoding="utf-8")
    return root


def _run_chain(root):
    def run(*argv):
        code = cli.main([str(a) for a in argv])
        assert code == 0, f"command failed: {argv}"

    run("--seed", 99, "build-dataset", "--kind", "extraction", "--encyclopedia", root / "enc.jsonl",
        "--terms", root / "terms.jsonl", "--out", root / "extraction.jsonl")
    run("--seed", 99, "build-dataset", "--kind", "generation", "--encyclopedia", root / "enc.jsonl",
        "--web", root / "web.jsonl", "--terms", root / "terms.jsonl", "--out", root / "generation.jsonl")
    run("--seed", 99, "train-scorer", "--dataset", root / "extraction.jsonl", "--out", root / "model.json")
    run("--seed", 99, "build-index", "--encyclopedia", root / "enc.jsonl", "--out", root / "index.json")
    run("--seed", 99, "extract", "--batch", root / "terms.jsonl", "--web", root / "web.jsonl",
        "--model", root / "model.json", "--k", 5, "--out", root / "sdi.jsonl")
    run("--seed", 99, "generate", "--batch", root / "terms.jsonl", "--web", root / "web.jsonl",
        "--model", root / "model.json", "--index", root / "index.json", "--k", 5, "--kprime", 5,
        "--backend", "extractive", "--workers", 1, "--out", root / "generated.jsonl")
    hyp_lines = []
    for rec in ingest.read_jsonl(root / "generated.jsonl"):
        if rec["definition"] is not None:
            hyp_lines.append(json.dumps({"term": rec["term"], "definition": rec["definition"]}))
    (root / "hyp.jsonl").write_text("".join(line + "\n" for line in hyp_lines), encoding="utf-8")
    run("--seed", 99, "evaluate", "--hyp", root / "hyp.jsonl", "--dataset", root / "generation.jsonl",
        "--bucket-edges", "2,5", "--out", root / "report.json")
    return [
        root / "extraction.jsonl", root / "generation.jsonl", root / "model.json",
        root / "index.json", root / "sdi.jsonl", root / "generated.jsonl", root / "report.json",
    ]


def test_criterion_end_to_end_determinism(pipeline_workspace, capsys):
    artifacts = _run_chain(pipeline_workspace)
    first = {p.name: p.read_bytes() for p in artifacts}
    artifacts = _run_chain(pipeline_workspace)
    second = {p.name: p.read_bytes() for p in artifacts}
    capsys.readouterr()
    assert first == second, "rerun with identical seed must be byte-identical"

    # extractive output equals the argmax-confidence candidate under the saved scorer
    model = extractor.load_model(pipeline_workspace / "model.json")
    scorer = extractor.make_scorer(model)
    web = ingest.load_corpus(pipeline_workspace / "web.jsonl", Source.WEB).documents
    terms = ingest.load_terms(pipeline_workspace / "terms.jsonl")
    generated = {rec["term"]: rec for rec in ingest.read_jsonl(pipeline_workspace / "generated.jsonl")}
    checked = 0
    for term in terms:
        candidates = extractor.collect_candidates(term, web)
        if not candidates:
            continue
        best = extractor.rank_sdi(term, candidates, 1, scorer)[0]
        assert generated[term.surface]["definition"] == best.sentence.text
        checked += 1
    assert checked > 0
    print(f"{PASS}: end-to-end rerun byte-identical; extractive output is the argmax candidate for {checked} terms")


def test_criterion_no_leakage_audit(pipeline_workspace, capsys):
    if not (pipeline_workspace / "generation.jsonl").exists():
        _run_chain(pipeline_workspace)
        capsys.readouterr()
    examples = ingest.load_generation_dataset(pipeline_workspace / "generation.jsonl")
    assert examples
    candidates = 0
    for ex in examples:
        for cand in ex.candidate_sentences:
            candidates += 1
            assert cand.source != Source.ENCYCLOPEDIA, "encyclopedia sentence leaked into candidates"
            assert cand.text != ex.gold_definition, "gold definition leaked into candidates"
    assert candidates > 0
    print(f"{PASS}: no-leakage audit over {candidates} candidate sentences in the fixture dataset")
