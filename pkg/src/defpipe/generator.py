"""Composition of ranked definitional knowledge into generator input, plus backends.

The encoding scheme lays out the term surface, the top-k ranked term-bearing
sentences, and the top-k' related-term definitions in one marker-delimited
string:

    surface [DEF] s1 [SEP] s2 ... [SEP] sk [DEF] c1 [SEP] c2 ... [SEP] ck'

A segment that ends up empty is omitted together with its [DEF] marker, so the
string degrades gracefully down to the bare surface. Sentences are packed
whole, in rank order, until the whitespace-token budget would be exceeded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

import requests

from . import httpclient
from .errors import NoCandidates, ProtocolViolation
from .extractor import ScoredSentence, ScorerFn, collect_candidates, rank_sdi
from .retriever import Bm25Index, RelatedDefinition, retrieve_related
from .types import Document, Term

logger = logging.getLogger(__name__)

DEF_MARKER = "[DEF]"
SEP_MARKER = "[SEP]"
DEFAULT_TOKEN_BUDGET = 480
DEFAULT_MAX_LEN = 96
DEFAULT_BEAM_SIZE = 4


class Backend(str, Enum):
    EXTRACTIVE = "extractive"
    EXTERNAL = "external"


@dataclass
class PipelineConfig:
    k: int = 5
    kprime: int = 5
    token_budget: int = DEFAULT_TOKEN_BUDGET
    backend: Backend = Backend.EXTRACTIVE
    context: str | None = None

    def __post_init__(self) -> None:
        if self.k < 0 or self.kprime < 0:
            raise ValueError("k and kprime must be >= 0")
        if self.token_budget <= 0:
            raise ValueError("token_budget must be > 0")


@dataclass(frozen=True)
class EncodedInput:
    text: str
    k_used: int
    kprime_used: int
    truncated: bool


@dataclass(frozen=True)
class GeneratedDefinition:
    term: Term
    text: str
    backend_id: str
    token_logprobs: list[float] | None = None


@dataclass(frozen=True)
class CdmResult:
    """A generated definition plus the encoding provenance it came from."""

    definition: GeneratedDefinition
    encoded: EncodedInput


def sanitize_segment(text: str) -> str:
    """Neutralize literal marker strings inside free text so the grammar survives."""
    return text.replace(DEF_MARKER, "(DEF)").replace(SEP_MARKER, "(SEP)")


def _pack(surface: str, context: str | None, sdi_texts: list[str], cdi_texts: list[str], budget: int) -> EncodedInput:
    text = surface
    if context:
        text += f" {SEP_MARKER} " + sanitize_segment(context)
    used = [0, 0]
    truncated = False
    for seg_idx, sentences in enumerate((sdi_texts, cdi_texts)):
        for pos, sentence in enumerate(sentences):
            marker = DEF_MARKER if pos == 0 else SEP_MARKER
            candidate = f"{text} {marker} " + sanitize_segment(sentence)
            if len(candidate.split()) > budget:
                truncated = True
                return EncodedInput(text=text, k_used=used[0], kprime_used=used[1], truncated=truncated)
            text = candidate
            used[seg_idx] += 1
    return EncodedInput(text=text, k_used=used[0], kprime_used=used[1], truncated=truncated)


def encode_for_generator(
    term: Term,
    sdi: Sequence[ScoredSentence],
    cdi: Sequence[RelatedDefinition],
    config: PipelineConfig,
) -> EncodedInput:
    """Encode (term, ranked SDI, ranked CDI) into the generator input string."""
    sdi_texts = [s.sentence.text for s in sdi[: config.k]]
    cdi_texts = [c.definition for c in cdi[: config.kprime]]
    return _pack(term.surface, None, sdi_texts, cdi_texts, config.token_budget)


def encode_context_variant(
    term: Term,
    context: str | None,
    sdi: Sequence[ScoredSentence],
    cdi: Sequence[RelatedDefinition],
    config: PipelineConfig,
) -> EncodedInput:
    """Context-aware variant: the usage context rides between the surface and the knowledge segments."""
    if not context:
        return encode_for_generator(term, sdi, cdi, config)
    sdi_texts = [s.sentence.text for s in sdi[: config.k]]
    cdi_texts = [c.definition for c in cdi[: config.kprime]]
    return _pack(term.surface, context, sdi_texts, cdi_texts, config.token_budget)


def parse_encoded(encoded: EncodedInput) -> tuple[str, str | None, list[str], list[str]]:
    """Invert the encoding grammar: (surface, context, sdi_texts, cdi_texts).

    Only valid for inputs whose surface and sentences contain no literal
    marker strings (encoding sanitized the sentences; the surface is the
    caller's responsibility). A lone knowledge segment is attributed to SDI or
    CDI from the recorded k_used/kprime_used counts, since the degraded
    single-marker form is otherwise ambiguous.
    """
    blocks = encoded.text.split(f" {DEF_MARKER} ")
    head = blocks[0]
    if f" {SEP_MARKER} " in head:
        surface, context = head.split(f" {SEP_MARKER} ", 1)
    else:
        surface, context = head, None
    segments = [block.split(f" {SEP_MARKER} ") for block in blocks[1:]]
    if len(segments) > 2:
        raise ValueError("malformed encoding: more than two knowledge segments")
    if len(segments) == 2:
        return surface, context, segments[0], segments[1]
    if len(segments) == 1:
        if encoded.k_used > 0:
            return surface, context, segments[0], []
        return surface, context, [], segments[0]
    return surface, context, [], []


def generate_extractive(term: Term, sdi: Sequence[ScoredSentence]) -> GeneratedDefinition:
    """Extractive baseline: emit the top-confidence candidate sentence verbatim."""
    if not sdi:
        raise NoCandidates(f"no candidates: cannot extract a definition for {term.surface!r}")
    return GeneratedDefinition(term=term, text=sdi[0].sentence.text, backend_id="extractive")


class ExternalBackend:
    """Client for the remote generator protocol (POST /generate)."""

    def __init__(
        self,
        endpoint: str,
        max_len: int = DEFAULT_MAX_LEN,
        beam_size: int = DEFAULT_BEAM_SIZE,
        timeout: float = 60.0,
        retries: int = 2,
        backoff: float = 0.5,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.max_len = max_len
        self.beam_size = beam_size
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()

    def generate_raw(self, input_text: str, max_len: int | None = None, beam_size: int | None = None) -> dict[str, Any]:
        payload = {
            "input": input_text,
            "max_len": max_len if max_len is not None else self.max_len,
            "beam_size": beam_size if beam_size is not None else self.beam_size,
        }
        return httpclient.post_json(
            self.session,
            self.endpoint + "/generate",
            payload,
            timeout=self.timeout,
            retries=self.retries,
            backoff=self.backoff,
        )


def generate_external(
    encoded: EncodedInput,
    backend: ExternalBackend,
    term: Term,
    max_len: int | None = None,
    beam_size: int | None = None,
) -> GeneratedDefinition:
    """Send the encoded input to the remote generator and validate the reply."""
    data = backend.generate_raw(encoded.text, max_len=max_len, beam_size=beam_size)
    definition = data.get("definition")
    if not isinstance(definition, str) or not definition:
        raise ProtocolViolation("generate response must carry a nonempty 'definition' string")
    backend_id = data.get("backend_id")
    if not isinstance(backend_id, str) or not backend_id:
        raise ProtocolViolation("generate response must carry a 'backend_id' string")
    logprobs = data.get("token_logprobs")
    if logprobs is not None:
        if not isinstance(logprobs, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in logprobs):
            raise ProtocolViolation("token_logprobs must be null or a list of numbers")
        if any(v > 0 for v in logprobs):
            raise ProtocolViolation("token_logprobs must all be <= 0")
        logprobs = [float(v) for v in logprobs]
    return GeneratedDefinition(term=term, text=definition, backend_id=backend_id, token_logprobs=logprobs)


@dataclass
class PipelineResources:
    """Read-only state shared by generation runs over many terms."""

    web_corpus: Sequence[Document] = field(default_factory=tuple)
    scorer: ScorerFn | None = None
    index: Bm25Index | None = None
    backend: ExternalBackend | None = None
    exclude_self: bool = False


def cdm_generate(term: Term, resources: PipelineResources, config: PipelineConfig) -> CdmResult:
    """Run the full per-term pipeline: collect, rank, retrieve, encode, generate."""
    sdi: list[ScoredSentence] = []
    if config.k > 0:
        if resources.scorer is None:
            raise ValueError("scorer required when k > 0")
        candidates = collect_candidates(term, resources.web_corpus)
        sdi = rank_sdi(term, candidates, config.k, resources.scorer)

    cdi: list[RelatedDefinition] = []
    if config.kprime > 0:
        if resources.index is None:
            raise ValueError("index required when kprime > 0")
        cdi = retrieve_related(resources.index, term, config.kprime, exclude_self=resources.exclude_self)

    if config.context:
        encoded = encode_context_variant(term, config.context, sdi, cdi, config)
    else:
        encoded = encode_for_generator(term, sdi, cdi, config)

    if config.backend == Backend.EXTRACTIVE:
        definition = generate_extractive(term, sdi)
    else:
        if resources.backend is None:
            raise ValueError("external backend required for backend=external")
        definition = generate_external(encoded, resources.backend, term)
    return CdmResult(definition=definition, encoded=encoded)
