"""Wire-protocol contract checks for scorer/generator backends.

Any server claiming to implement the backend protocol must pass check_all
against its base URL. The checks exercise every endpoint, the error shape for
malformed requests, and the sign constraint on token log-probabilities.
"""

from __future__ import annotations

import math
from typing import Any

import requests

from .errors import ProtocolViolation
from .extractor import ExternalScorer
from .generator import ExternalBackend
from .httpclient import get_json

FIXTURE_JARGON = "twin prime"
FIXTURE_SENTENCE = "A twin prime is a prime number that is either 2 less or 2 more than another prime number."
FIXTURE_NON_DEFINITION = "The conjecture has resisted proof for well over a century."
FIXTURE_INPUT = f"{FIXTURE_JARGON} [DEF] {FIXTURE_SENTENCE}"


def check_health(endpoint: str, session: requests.Session | None = None) -> dict[str, Any]:
    data = get_json(session or requests.Session(), endpoint.rstrip("/") + "/health")
    for key in ("scorer", "generator"):
        if not isinstance(data.get(key), str) or not data[key]:
            raise ProtocolViolation(f"/health must report a nonempty {key!r} model identifier")
    return data


def check_score(endpoint: str, session: requests.Session | None = None) -> float:
    client = ExternalScorer(endpoint, session=session)
    confidence = client.score(FIXTURE_JARGON, FIXTURE_SENTENCE)
    if not 0.0 < confidence < 1.0:
        raise ProtocolViolation(f"/score confidence must lie strictly inside (0, 1), got {confidence}")
    return confidence


def check_score_batch(endpoint: str, session: requests.Session | None = None) -> list[float]:
    client = ExternalScorer(endpoint, session=session)
    jargons = [FIXTURE_JARGON, FIXTURE_JARGON]
    sentences = [FIXTURE_SENTENCE, FIXTURE_NON_DEFINITION]
    confidences = client.score_batch(jargons, sentences)
    if len(confidences) != 2:
        raise ProtocolViolation("/score_batch must return one confidence per input pair")
    single = client.score(FIXTURE_JARGON, FIXTURE_SENTENCE)
    if not math.isclose(confidences[0], single, abs_tol=1e-4):
        raise ProtocolViolation("/score_batch must agree with /score on identical input")
    return confidences


def check_generate(endpoint: str, session: requests.Session | None = None) -> dict[str, Any]:
    client = ExternalBackend(endpoint, session=session)
    data = client.generate_raw(FIXTURE_INPUT, max_len=96, beam_size=1)
    definition = data.get("definition")
    if not isinstance(definition, str) or not definition:
        raise ProtocolViolation("/generate must return a nonempty 'definition' string")
    if not isinstance(data.get("backend_id"), str) or not data["backend_id"]:
        raise ProtocolViolation("/generate must return a 'backend_id' string")
    logprobs = data.get("token_logprobs")
    if logprobs is not None:
        if not isinstance(logprobs, list):
            raise ProtocolViolation("token_logprobs must be null or a list")
        if any(not isinstance(v, (int, float)) or isinstance(v, bool) or v > 0 for v in logprobs):
            raise ProtocolViolation("token_logprobs must be numbers <= 0")
    return data


def check_error_shape(endpoint: str, session: requests.Session | None = None) -> None:
    """A malformed request must yield a 4xx status with a JSON object body."""
    sess = session or requests.Session()
    resp = sess.post(endpoint.rstrip("/") + "/score", json={"sentence_only": True}, timeout=30)
    if not 400 <= resp.status_code < 500:
        raise ProtocolViolation(f"malformed /score request must yield 4xx, got {resp.status_code}")
    try:
        body = resp.json()
    except ValueError as exc:
        raise ProtocolViolation("error responses must carry a JSON body") from exc
    if not isinstance(body, dict):
        raise ProtocolViolation("error responses must carry a JSON object body")


def check_all(endpoint: str, session: requests.Session | None = None) -> dict[str, Any]:
    """Run every conformance check; raises on the first violation."""
    results = {
        "health": check_health(endpoint, session),
        "score": check_score(endpoint, session),
        "score_batch": check_score_batch(endpoint, session),
        "generate": check_generate(endpoint, session),
    }
    check_error_shape(endpoint, session)
    return results
