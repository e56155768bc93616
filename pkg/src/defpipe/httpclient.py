"""Small JSON-over-HTTP helpers with bounded retry.

Connection failures and 5xx responses are retried; anything else that breaks
the wire contract surfaces immediately as a ProtocolViolation.
"""

from __future__ import annotations

import time
from typing import Any

import requests

from .errors import BackendUnavailable, ProtocolViolation


def post_json(
    session: requests.Session,
    url: str,
    payload: dict[str, Any],
    timeout: float = 30.0,
    retries: int = 2,
    backoff: float = 0.5,
) -> dict[str, Any]:
    """POST a JSON payload, returning the decoded JSON object.

    Makes at most retries + 1 attempts. 4xx responses and malformed bodies are
    protocol violations and are not retried.
    """
    attempts = retries + 1
    last_exc: Exception | None = None
    for attempt in range(attempts):
        try:
            resp = session.post(url, json=payload, timeout=timeout)
        except requests.RequestException as exc:
            last_exc = exc
            if attempt < attempts - 1 and backoff > 0:
                time.sleep(backoff * (2**attempt))
            continue
        if resp.status_code >= 500:
            last_exc = ProtocolViolation(f"{url} returned HTTP {resp.status_code}")
            if attempt < attempts - 1 and backoff > 0:
                time.sleep(backoff * (2**attempt))
            continue
        if resp.status_code != 200:
            raise ProtocolViolation(f"{url} returned HTTP {resp.status_code}")
        return _decode_object(resp, url)
    raise BackendUnavailable(f"backend unavailable after {attempts} attempt(s) to {url}: {last_exc}")


def get_json(session: requests.Session, url: str, timeout: float = 30.0) -> dict[str, Any]:
    try:
        resp = session.get(url, timeout=timeout)
    except requests.RequestException as exc:
        raise BackendUnavailable(f"backend unavailable: {exc}") from exc
    if resp.status_code != 200:
        raise ProtocolViolation(f"{url} returned HTTP {resp.status_code}")
    return _decode_object(resp, url)


def _decode_object(resp: requests.Response, url: str) -> dict[str, Any]:
    try:
        data = resp.json()
    except ValueError as exc:
        raise ProtocolViolation(f"{url} returned non-JSON body") from exc
    if not isinstance(data, dict):
        raise ProtocolViolation(f"{url} returned a non-object JSON body")
    return data
