"""Minimal HTTP JSON transport with bounded retries, shared by the remote
scorer and LLM backends."""

from __future__ import annotations

import time

import requests


class TransportError(RuntimeError):
    """The remote endpoint could not be reached or returned garbage."""


def post_json(endpoint: str, payload: dict, timeout: float, retries: int) -> dict:
    """POST a JSON payload; retry connection failures and 5xx responses.

    Raises TransportError after the retry budget is exhausted or on any
    non-retryable failure (4xx, malformed reply).
    """
    last: Exception | None = None
    for attempt in range(retries + 1):
        try:
            resp = requests.post(endpoint, json=payload, timeout=timeout)
        except requests.RequestException as exc:
            last = exc
            time.sleep(0.05 * (attempt + 1))
            continue
        if resp.status_code >= 500:
            last = TransportError(f"{endpoint} returned {resp.status_code}")
            time.sleep(0.05 * (attempt + 1))
            continue
        if resp.status_code != 200:
            raise TransportError(f"{endpoint} returned {resp.status_code}")
        try:
            doc = resp.json()
        except ValueError as exc:
            raise TransportError(f"{endpoint} returned non-JSON body") from exc
        if not isinstance(doc, dict):
            raise TransportError(f"{endpoint} returned non-object JSON")
        return doc
    raise TransportError(f"{endpoint} unreachable after {retries + 1} attempts: {last}")
