"""Command-line entry point wiring the pipeline into reproducible runs.

Every command reads an optional TOML/JSON config file, lets flags override it,
writes artifacts atomically (temp file + rename), and stamps each artifact
with a provenance header {config_hash, seed, tool_version} so identical runs
are byte-identical.

Exit codes: 0 success, 2 missing inputs, 3 backend unavailable, 4 internal
error. Failures print a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import logging
import os
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator

from . import __version__, evaluator, extractor, generator, ingest, retriever
from .errors import BackendUnavailable, IngestError, NoCandidates, PipelineError
from .textnorm import normalize_surface
from .types import Source, Split, Term

logger = logging.getLogger(__name__)

ENDPOINT_ENV_VAR = "DEFPIPE_ENDPOINT"

EXIT_OK = 0
EXIT_MISSING_INPUT = 2
EXIT_BACKEND = 3
EXIT_INTERNAL = 4


# --- config handling ----------------------------------------------------------


def load_config(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    if path.suffix == ".json":
        return json.loads(path.read_text(encoding="utf-8"))
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


class Run:
    """Resolved settings for one command invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.cfg: dict[str, Any] = load_config(args.config) if args.config else {}
        self.seed = self._get("seed", None, "seed", default=0)
        self._params: dict[str, Any] = {"command": args.command, "seed": self.seed}

    def _get(self, flag: str, section: str | None, key: str, default: Any = None) -> Any:
        value = getattr(self.args, flag, None)
        if value is None:
            scope = self.cfg.get(section, {}) if section else self.cfg
            value = scope.get(key, default) if isinstance(scope, dict) else default
        return value

    def get(self, flag: str, section: str | None = None, key: str | None = None, default: Any = None) -> Any:
        value = self._get(flag, section, key or flag, default)
        self._params[flag] = value
        return value

    def path(self, flag: str, required: bool = True, must_exist: bool = True) -> Path | None:
        value = self.get(flag, section="paths")
        if value is None:
            if required:
                raise FileNotFoundError(f"missing required input: --{flag.replace('_', '-')}")
            return None
        p = Path(value)
        if must_exist and not p.exists():
            raise FileNotFoundError(f"input path does not exist: {p}")
        return p

    def header(self) -> dict[str, Any]:
        canonical = json.dumps(self._params, sort_keys=True, default=str)
        return {
            "config_hash": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
            "seed": self.seed,
            "tool_version": __version__,
        }


@contextmanager
def atomic_write(path: str | Path) -> Iterator[Any]:
    """Open a temp file for writing and rename it over `path` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".part")
    fh = os.fdopen(fd, "w", encoding="utf-8", newline="\n")
    try:
        yield fh
        fh.close()
        os.replace(tmp, path)
    except BaseException:
        fh.close()
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_jsonl(fh: Any, header: dict[str, Any], records: Iterator[dict[str, Any]]) -> int:
    fh.write(json.dumps({"_header": header}, sort_keys=True) + "\n")
    count = 0
    for rec in records:
        fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
        count += 1
    return count


def _parse_ratios(value: Any) -> tuple[float, float, float]:
    parts = [float(x) for x in value] if isinstance(value, (list, tuple)) else [
        float(x) for x in str(value).split(",")
    ]
    if len(parts) != 3:
        raise ValueError(f"ratios must be three comma-separated numbers, got {value!r}")
    return parts[0], parts[1], parts[2]


def _parse_edges(value: Any) -> list[int]:
    if isinstance(value, (list, tuple)):
        return [int(x) for x in value]
    text = str(value).strip()
    if not text:
        return []
    return [int(x) for x in text.split(",")]


# --- commands -------------------------------------------------------------------


def cmd_build_corpus(run: Run) -> int:
    source = Source(run.get("source", default="encyclopedia"))
    in_path = run.path("in_file")
    out = run.get("out")
    if out is None:
        raise FileNotFoundError("missing required output: --out")
    result = ingest.load_corpus(in_path, source)
    with atomic_write(out) as fh:
        _write_jsonl(fh, run.header(), (doc.to_dict() for doc in result.documents))
    print(json.dumps({"documents": len(result.documents), "skipped": result.skipped, "out": str(out)}))
    return EXIT_OK


def _load_terms_with_freq(run: Run) -> list[Term]:
    terms = ingest.load_terms(run.path("terms"))
    ref_path = run.path("ref_corpus", required=False)
    if ref_path is not None:
        ref = ingest.load_corpus(ref_path, Source(run.get("ref_source", default="web"))).documents
        terms = ingest.with_frequencies(terms, ref)
    return terms


def cmd_build_dataset(run: Run) -> int:
    kind = run.get("kind", default="extraction")
    out = run.get("out")
    if out is None:
        raise FileNotFoundError("missing required output: --out")
    ratios = _parse_ratios(run.get("ratios", section="pipeline", default="0.8,0.1,0.1"))
    terms = _load_terms_with_freq(run)
    encyclopedia = ingest.load_corpus(run.path("encyclopedia"), Source.ENCYCLOPEDIA).documents
    if kind == "extraction":
        examples = ingest.build_extraction_dataset(
            encyclopedia,
            terms,
            min_freq=int(run.get("min_freq", default=0)),
            max_negatives=int(run.get("max_negatives", default=ingest.DEFAULT_MAX_NEGATIVES)),
            split_ratios=ratios,
            seed=run.seed,
        )
    elif kind == "generation":
        web = ingest.load_corpus(run.path("web"), Source.WEB).documents
        examples = ingest.build_generation_dataset(encyclopedia, web, terms, split_ratios=ratios, seed=run.seed)
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    with atomic_write(out) as fh:
        count = _write_jsonl(fh, run.header(), (ex.to_dict() for ex in examples))
    print(json.dumps({"kind": kind, "examples": count, "out": str(out)}))
    return EXIT_OK


def cmd_train_scorer(run: Run) -> int:
    out = run.get("out")
    if out is None:
        raise FileNotFoundError("missing required output: --out")
    examples = ingest.load_extraction_dataset(run.path("dataset"))
    train = [ex for ex in examples if ex.split == Split.TRAIN]
    model = extractor.train_scorer(
        train,
        learning_rate=float(run.get("lr", default=0.1)),
        epochs=int(run.get("epochs", default=20)),
        seed=run.seed,
    )
    with atomic_write(out) as fh:
        doc = {
            "_header": run.header(),
            "feature_spec_version": model.feature_spec_version,
            "weights": [float(v) for v in model.weights],
            "bias": float(model.bias),
            "training_meta": model.training_meta,
        }
        fh.write(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    losses = model.training_meta["epoch_losses"]
    print(json.dumps({"trained_on": len(train), "initial_loss": losses[0], "final_loss": losses[-1], "out": str(out)}))
    return EXIT_OK


def cmd_build_index(run: Run) -> int:
    out = run.get("out")
    if out is None:
        raise FileNotFoundError("missing required output: --out")
    core_path = run.path("core_terms", required=False)
    if core_path is not None:
        entries = retriever.load_core_terms(core_path)
    else:
        encyclopedia = ingest.load_corpus(run.path("encyclopedia"), Source.ENCYCLOPEDIA).documents
        entries = retriever.entries_from_corpus(encyclopedia)
    index = retriever.build_index(
        entries,
        k1=float(run.get("k1", section="pipeline", default=retriever.DEFAULT_K1)),
        b=float(run.get("b", section="pipeline", default=retriever.DEFAULT_B)),
    )
    with atomic_write(out) as fh:
        fh.write(_index_json(index, run.header()))
    print(json.dumps({"entries": index.n_docs, "out": str(out)}))
    return EXIT_OK


def _index_json(index: retriever.Bm25Index, header: dict[str, Any]) -> str:
    doc = {
        "_header": header,
        "format": retriever.INDEX_FORMAT,
        "version": retriever.INDEX_VERSION,
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
    return json.dumps(doc, sort_keys=True) + "\n"


def _batch_terms(run: Run) -> list[Term]:
    term = run.get("term")
    if term is not None:
        return [Term.from_surface(term)]
    batch = run.path("batch", required=False)
    if batch is None:
        raise FileNotFoundError("missing input: provide --term or --batch")
    return ingest.load_terms(batch)


def _resolve_scorer(run: Run, required: bool) -> extractor.ScorerFn | None:
    scorer_endpoint = run.get("scorer_endpoint", section="backend", key="scorer_endpoint")
    if scorer_endpoint:
        return extractor.ExternalScorer(scorer_endpoint)
    model_path = run.path("model", required=required)
    if model_path is None:
        return None
    return extractor.make_scorer(extractor.load_model(model_path))


def cmd_extract(run: Run) -> int:
    out = run.get("out")
    if out is None:
        raise FileNotFoundError("missing required output: --out")
    k = int(run.get("k", section="pipeline", default=5))
    scorer = _resolve_scorer(run, required=True)
    web = ingest.load_corpus(run.path("web"), Source.WEB).documents
    terms = _batch_terms(run)

    def records() -> Iterator[dict[str, Any]]:
        for term in terms:
            candidates = extractor.collect_candidates(term, web)
            for rank, scored in enumerate(extractor.rank_sdi(term, candidates, k, scorer)):
                yield {
                    "term": term.surface,
                    "rank": rank,
                    "confidence": scored.confidence,
                    "text": scored.sentence.text,
                    "doc_id": scored.sentence.doc_id,
                    "section": scored.sentence.section,
                }

    with atomic_write(out) as fh:
        count = _write_jsonl(fh, run.header(), records())
    print(json.dumps({"terms": len(terms), "sentences": count, "out": str(out)}))
    return EXIT_OK


def cmd_generate(run: Run) -> int:
    out = run.get("out")
    if out is None:
        raise FileNotFoundError("missing required output: --out")
    backend = generator.Backend(run.get("backend", section="pipeline", default="extractive"))
    config = generator.PipelineConfig(
        k=int(run.get("k", section="pipeline", default=5)),
        kprime=int(run.get("kprime", section="pipeline", default=5)),
        token_budget=int(run.get("token_budget", section="pipeline", default=generator.DEFAULT_TOKEN_BUDGET)),
        backend=backend,
        context=run.get("context", section="pipeline"),
    )
    resources = generator.PipelineResources(exclude_self=bool(run.get("exclude_self", section="pipeline", default=False)))
    if config.k > 0:
        resources.web_corpus = ingest.load_corpus(run.path("web"), Source.WEB).documents
        resources.scorer = _resolve_scorer(run, required=True)
    if config.kprime > 0:
        resources.index = retriever.load_index(run.path("index"))
    if backend == generator.Backend.EXTERNAL:
        endpoint = run.get("endpoint", section="backend") or os.environ.get(ENDPOINT_ENV_VAR)
        if not endpoint:
            raise FileNotFoundError(f"missing input: --endpoint or ${ENDPOINT_ENV_VAR} required for external backend")
        resources.backend = generator.ExternalBackend(
            endpoint,
            max_len=int(run.get("max_len", section="backend", default=generator.DEFAULT_MAX_LEN)),
            beam_size=int(run.get("beam_size", section="backend", default=generator.DEFAULT_BEAM_SIZE)),
        )
    terms = _batch_terms(run)
    workers = int(run.get("workers", default=4))

    def one(term: Term) -> dict[str, Any]:
        try:
            result = generator.cdm_generate(term, resources, config)
        except NoCandidates:
            return {
                "term": term.surface,
                "definition": None,
                "backend_id": backend.value,
                "k_used": 0,
                "kprime_used": 0,
                "truncated": False,
                "error": "no definition found",
            }
        return {
            "term": term.surface,
            "definition": result.definition.text,
            "backend_id": result.definition.backend_id,
            "k_used": result.encoded.k_used,
            "kprime_used": result.encoded.kprime_used,
            "truncated": result.encoded.truncated,
        }

    with atomic_write(out) as fh:
        if workers > 1 and len(terms) > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
                count = _write_jsonl(fh, run.header(), iter(pool.map(one, terms)))
        else:
            count = _write_jsonl(fh, run.header(), (one(t) for t in terms))
    print(json.dumps({"terms": count, "out": str(out)}))
    return EXIT_OK


def cmd_evaluate(run: Run) -> int:
    out = run.get("out")
    if out is None:
        raise FileNotFoundError("missing required output: --out")
    hyp_records = list(ingest.read_jsonl(run.path("hyp")))
    examples = ingest.load_generation_dataset(run.path("dataset"))
    gold = {ex.term.normalized: ex for ex in examples}
    pairs = []
    skipped = 0
    for rec in hyp_records:
        definition = rec.get("definition")
        example = gold.get(normalize_surface(rec.get("term", "")))
        if definition is None or example is None:
            skipped += 1
            continue
        pairs.append((example.term, definition, example.gold_definition))
    if skipped:
        logger.warning("evaluate: skipped %d hypothesis record(s) without gold or definition", skipped)
    human_path = run.path("human", required=False)
    human = evaluator.load_human_ratings(human_path) if human_path else None
    edges = _parse_edges(run.get("bucket_edges", section="metrics", default=""))
    report = evaluator.build_report(pairs, bucket_edges=edges, human=human)
    with atomic_write(out) as fh:
        doc = report.to_dict()
        doc["_header"] = run.header()
        fh.write(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    tsv_out = run.get("tsv")
    if tsv_out:
        with atomic_write(tsv_out) as fh:
            fh.write("# " + json.dumps(run.header(), sort_keys=True) + "\n")
            fh.write(evaluator.report_tsv(report))
    print(json.dumps({"pairs": len(pairs), "skipped": skipped, "bleu": report.corpus["bleu"], "out": str(out)}))
    return EXIT_OK


def cmd_report(run: Run) -> int:
    out = run.get("out")
    if out is None:
        raise FileNotFoundError("missing required output: --out")
    doc = json.loads(Path(run.path("report")).read_text(encoding="utf-8"))
    report = evaluator.EvalReport(
        corpus=doc["corpus"],
        per_term=doc["per_term"],
        buckets=[],
        human=doc.get("human"),
        n_items=doc["n_items"],
    )
    with atomic_write(out) as fh:
        fh.write("# " + json.dumps(run.header(), sort_keys=True) + "\n")
        fh.write(evaluator.report_tsv(report))
    print(json.dumps({"out": str(out)}))
    return EXIT_OK


# --- argument parsing -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="defpipe", description=__doc__)
    parser.add_argument("--config", help="TOML or JSON config file")
    parser.add_argument("--seed", type=int, help="run seed recorded in artifact headers")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-corpus", help="parse and canonicalize a raw JSONL corpus")
    p.add_argument("--in", dest="in_file", help="raw JSONL archive")
    p.add_argument("--source", choices=["encyclopedia", "web"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_build_corpus)

    p = sub.add_parser("build-dataset", help="build the extraction or generation dataset")
    p.add_argument("--kind", choices=["extraction", "generation"])
    p.add_argument("--encyclopedia")
    p.add_argument("--web")
    p.add_argument("--terms")
    p.add_argument("--ref-corpus", dest="ref_corpus")
    p.add_argument("--ref-source", dest="ref_source", choices=["encyclopedia", "web"])
    p.add_argument("--min-freq", dest="min_freq", type=int)
    p.add_argument("--max-negatives", dest="max_negatives", type=int)
    p.add_argument("--ratios")
    p.add_argument("--out")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train-scorer", help="train the built-in sentence scorer")
    p.add_argument("--dataset")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train_scorer)

    p = sub.add_parser("build-index", help="build the related-term BM25 index")
    p.add_argument("--core-terms", dest="core_terms")
    p.add_argument("--encyclopedia")
    p.add_argument("--k1", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("extract", help="rank definitional sentences for terms")
    p.add_argument("--term")
    p.add_argument("--batch")
    p.add_argument("--web")
    p.add_argument("--model")
    p.add_argument("--scorer-endpoint", dest="scorer_endpoint")
    p.add_argument("--k", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("generate", help="generate definitions for terms")
    p.add_argument("--term")
    p.add_argument("--batch")
    p.add_argument("--web")
    p.add_argument("--model")
    p.add_argument("--scorer-endpoint", dest="scorer_endpoint")
    p.add_argument("--index")
    p.add_argument("--k", type=int)
    p.add_argument("--kprime", type=int)
    p.add_argument("--token-budget", dest="token_budget", type=int)
    p.add_argument("--backend", choices=["extractive", "external"])
    p.add_argument("--endpoint")
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--beam-size", dest="beam_size", type=int)
    p.add_argument("--context")
    p.add_argument("--exclude-self", dest="exclude_self", action="store_const", const=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generated definitions against golds")
    p.add_argument("--hyp")
    p.add_argument("--dataset")
    p.add_argument("--human")
    p.add_argument("--bucket-edges", dest="bucket_edges")
    p.add_argument("--tsv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render a report JSON as a TSV summary")
    p.add_argument("--report")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def _fail(code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(Run(args))
    except (FileNotFoundError, IngestError) as exc:
        return _fail(EXIT_MISSING_INPUT, exc)
    except BackendUnavailable as exc:
        return _fail(EXIT_BACKEND, exc)
    except (PipelineError, ValueError, KeyError, OSError) as exc:
        return _fail(EXIT_INTERNAL, exc)


if __name__ == "__main__":
    sys.exit(main())
