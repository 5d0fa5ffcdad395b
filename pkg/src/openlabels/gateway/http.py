"""HTTP backends for chat-completion, embedding, and entailment services.

Transport policy: up to 3 attempts with exponential backoff on 5xx and
timeouts; 4xx responses are never retried. Responses that violate the
capability contract (wrong shape, out-of-range scores) raise immediately.
"""

from __future__ import annotations

import os
import time
from typing import Any, Callable

import requests

from openlabels.errors import (
    ContractViolationError,
    GatewayError,
    TruncatedResponseError,
)

MAX_ATTEMPTS = 3
BACKOFF_BASE_SECONDS = 0.5
DEFAULT_TIMEOUT = 60.0


def _auth_headers(auth_env: str) -> dict[str, str]:
    if not auth_env:
        return {}
    token = os.environ.get(auth_env, "")
    if not token:
        return {}
    return {"Authorization": f"Bearer {token}"}


def request_json(
    session: requests.Session,
    method: str,
    url: str,
    body: dict[str, Any],
    headers: dict[str, str],
    timeout: float = DEFAULT_TIMEOUT,
    sleep: Callable[[float], None] = time.sleep,
) -> dict[str, Any]:
    """POST/GET JSON with retry on 5xx and timeouts; 4xx fails immediately."""
    last_error: Exception | None = None
    for attempt in range(MAX_ATTEMPTS):
        try:
            resp = session.request(method, url, json=body, headers=headers, timeout=timeout)
        except (requests.Timeout, requests.ConnectionError) as exc:
            last_error = exc
            if attempt < MAX_ATTEMPTS - 1:
                sleep(BACKOFF_BASE_SECONDS * (2**attempt))
            continue
        if 400 <= resp.status_code < 500:
            raise GatewayError(f"{url} returned {resp.status_code}: {resp.text[:500]}")
        if resp.status_code >= 500:
            last_error = GatewayError(f"{url} returned {resp.status_code}")
            if attempt < MAX_ATTEMPTS - 1:
                sleep(BACKOFF_BASE_SECONDS * (2**attempt))
            continue
        try:
            return resp.json()
        except ValueError as exc:
            raise ContractViolationError(f"{url} returned non-JSON body") from exc
    raise GatewayError(f"{url} failed after {MAX_ATTEMPTS} attempts: {last_error}")


class HttpGenerationBackend:
    """Chat-completion endpoint speaking the common messages schema."""

    def __init__(self, base_url: str, model: str, auth_env: str = "",
                 session: requests.Session | None = None, timeout: float = DEFAULT_TIMEOUT):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.auth_env = auth_env
        self.session = session or requests.Session()
        self.timeout = timeout

    @property
    def id(self) -> str:
        return f"http-gen:{self.base_url}:{self.model}"

    def generate(self, system_prompt: str, user_prompt: str,
                 max_tokens: int = 256, temperature: float = 0.0) -> str:
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
            "max_tokens": max_tokens,
            "temperature": temperature,
        }
        data = request_json(
            self.session, "POST", f"{self.base_url}/chat/completions",
            body, _auth_headers(self.auth_env), self.timeout,
        )
        try:
            choice = data["choices"][0]
            content = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ContractViolationError(f"malformed completion payload: {data!r:.500}") from exc
        if choice.get("finish_reason") == "length":
            raise TruncatedResponseError("completion truncated by max_tokens")
        if not isinstance(content, str):
            raise ContractViolationError("completion content is not a string")
        return content


class HttpEmbeddingBackend:
    """Embedding endpoint: {model, input: [...]} -> {data: [{embedding}]}."""

    def __init__(self, base_url: str, model: str, auth_env: str = "",
                 session: requests.Session | None = None, timeout: float = DEFAULT_TIMEOUT):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.auth_env = auth_env
        self.session = session or requests.Session()
        self.timeout = timeout

    @property
    def id(self) -> str:
        return f"http-emb:{self.base_url}:{self.model}"

    def embed(self, texts: list[str]) -> list[list[float]]:
        body = {"model": self.model, "input": list(texts)}
        data = request_json(
            self.session, "POST", f"{self.base_url}/embeddings",
            body, _auth_headers(self.auth_env), self.timeout,
        )
        try:
            rows = [item["embedding"] for item in data["data"]]
        except (KeyError, TypeError) as exc:
            raise ContractViolationError(f"malformed embedding payload: {data!r:.500}") from exc
        if len(rows) != len(texts):
            raise ContractViolationError(
                f"embedding count mismatch: sent {len(texts)}, got {len(rows)}"
            )
        return [[float(v) for v in row] for row in rows]


class HttpEntailmentBackend:
    """Entailment endpoint: {premise, hypothesis} -> {entailment: float}."""

    def __init__(self, url: str, auth_env: str = "",
                 session: requests.Session | None = None, timeout: float = DEFAULT_TIMEOUT):
        self.url = url
        self.auth_env = auth_env
        self.session = session or requests.Session()
        self.timeout = timeout

    @property
    def id(self) -> str:
        return f"http-nli:{self.url}"

    def entail(self, premise: str, hypothesis: str) -> float:
        body = {"premise": premise, "hypothesis": hypothesis}
        data = request_json(
            self.session, "POST", self.url, body,
            _auth_headers(self.auth_env), self.timeout,
        )
        if "entailment" not in data:
            raise ContractViolationError(f"missing 'entailment' in payload: {data!r:.500}")
        return float(data["entailment"])
