"""Model gateway: per-role backends behind a content-addressed cache.

Roles map pipeline stages to backends. ``generation`` drives keyphrase and
label prompts, ``judge`` answers yes/no pair questions, ``embedding`` feeds
clustering, ``similarity`` scores label/keyphrase closeness, and
``eval_similarity`` is configured independently so evaluation can use a
different embedder than the pipeline. ``nli`` scores entailment.

Every call is cached by (backend id, capability, canonical request). Cache
hits never touch the backend, so warm reruns are free and reproducible;
counters make that checkable from tests.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Protocol, Sequence, TypeVar

from openlabels.errors import ConfigError, ContractViolationError
from openlabels.gateway.cache import ResponseCache, cache_key
from openlabels.gateway.mock import MockModelBackend

ROLES = ("generation", "judge", "embedding", "similarity", "eval_similarity", "nli")
CAPABILITIES = ("generate", "embed", "entail")

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class GenerationRequest:
    """One chat-style prompt. Temperature must be 0 under the determinism flag."""

    system_prompt: str
    user_prompt: str
    max_tokens: int = 256
    temperature: float = 0.0


class GenerationBackend(Protocol):
    id: str

    def generate(self, system_prompt: str, user_prompt: str,
                 max_tokens: int, temperature: float) -> str: ...


class EmbeddingBackend(Protocol):
    id: str

    def embed(self, texts: list[str]) -> list[list[float]]: ...


class EntailmentBackend(Protocol):
    id: str

    def entail(self, premise: str, hypothesis: str) -> float: ...


def _check_vector(vec: Sequence[float], role: str) -> None:
    for v in vec:
        if not isinstance(v, (int, float)) or v != v or v in (float("inf"), float("-inf")):
            raise ContractViolationError(f"non-finite embedding component from role {role!r}")


class Gateway:
    """Cached, counted access to the configured backends."""

    def __init__(
        self,
        backends: dict[str, Any],
        cache: ResponseCache,
        deterministic: bool = True,
        max_in_flight: int = 1,
    ):
        for role in backends:
            if role not in ROLES:
                raise ConfigError(f"unknown gateway role {role!r}; valid: {ROLES}")
        missing = [r for r in ROLES if r not in backends]
        if missing:
            raise ConfigError(f"missing gateway roles: {missing}")
        if max_in_flight < 1:
            raise ConfigError(f"max_in_flight must be >= 1, got {max_in_flight}")
        self.backends = dict(backends)
        self.cache = cache
        self.deterministic = deterministic
        # Parallel dispatch would scramble the append order of the cache
        # index, which must be stable when runs are byte-compared.
        self.max_in_flight = 1 if deterministic else max_in_flight
        self._stats_lock = threading.Lock()
        self._inflight_lock = threading.Lock()
        self._inflight: dict[str, threading.Event] = {}
        self._dims: dict[str, int] = {}
        self.stats: dict[str, dict[str, int]] = {
            cap: {"backend_calls": 0, "cache_hits": 0} for cap in CAPABILITIES
        }

    @classmethod
    def mock(cls, cache_dir, seed: int = 0, fixtures: dict[str, str] | None = None,
             deterministic: bool = True, max_in_flight: int = 1) -> "Gateway":
        """All six roles served by one seeded mock backend."""
        backend = MockModelBackend(seed=seed, fixtures=fixtures)
        return cls(
            backends={role: backend for role in ROLES},
            cache=ResponseCache(cache_dir),
            deterministic=deterministic,
            max_in_flight=max_in_flight,
        )

    # -- statistics ------------------------------------------------------

    def _count(self, capability: str, field: str, amount: int = 1) -> None:
        with self._stats_lock:
            self.stats[capability][field] += amount

    def stats_snapshot(self) -> dict[str, dict[str, int]]:
        with self._stats_lock:
            return {cap: dict(vals) for cap, vals in self.stats.items()}

    def total_backend_calls(self) -> int:
        with self._stats_lock:
            return sum(v["backend_calls"] for v in self.stats.values())

    def reset_stats(self) -> None:
        with self._stats_lock:
            for cap in self.stats:
                self.stats[cap] = {"backend_calls": 0, "cache_hits": 0}

    # -- cached dispatch --------------------------------------------------

    def _cached_call(self, capability: str, backend_id: str,
                     payload: dict[str, Any], compute: Callable[[], Any]) -> Any:
        digest = cache_key(backend_id, capability, payload)
        while True:
            value = self.cache.get(digest)
            if not ResponseCache.is_miss(value):
                self._count(capability, "cache_hits")
                return value
            # Coalesce identical concurrent requests onto one backend call.
            with self._inflight_lock:
                event = self._inflight.get(digest)
                if event is None:
                    self._inflight[digest] = threading.Event()
                    break
            event.wait()
        try:
            value = compute()
            self._count(capability, "backend_calls")
            self.cache.put(digest, capability, value)
            return value
        finally:
            with self._inflight_lock:
                self._inflight.pop(digest).set()

    # -- capabilities -----------------------------------------------------

    def generate(self, request: GenerationRequest, role: str = "generation") -> str:
        backend = self._backend(role)
        if self.deterministic and request.temperature != 0.0:
            raise ConfigError(
                f"temperature must be 0 under deterministic mode, got {request.temperature}"
            )
        payload = {
            "system_prompt": request.system_prompt,
            "user_prompt": request.user_prompt,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }

        def compute() -> str:
            out = backend.generate(
                request.system_prompt, request.user_prompt,
                request.max_tokens, request.temperature,
            )
            if not isinstance(out, str):
                raise ContractViolationError(f"generation returned {type(out).__name__}")
            return out

        return self._cached_call("generate", backend.id, payload, compute)

    def embed(self, texts: Sequence[str], role: str = "embedding") -> list[list[float]]:
        """Embed texts; each text is cached individually so batches compose."""
        backend = self._backend(role)
        digests = [cache_key(backend.id, "embed", {"text": t}) for t in texts]
        out: list[list[float] | None] = []
        missing: list[int] = []
        for i, digest in enumerate(digests):
            value = self.cache.get(digest)
            if ResponseCache.is_miss(value):
                out.append(None)
                missing.append(i)
            else:
                self._count("embed", "cache_hits")
                out.append(value)
        if missing:
            fresh = backend.embed([texts[i] for i in missing])
            if len(fresh) != len(missing):
                raise ContractViolationError(
                    f"embedding batch mismatch: {len(missing)} sent, {len(fresh)} returned"
                )
            self._count("embed", "backend_calls")
            for i, vec in zip(missing, fresh):
                vec = [float(v) for v in vec]
                _check_vector(vec, role)
                self._check_dim(backend.id, len(vec))
                self.cache.put(digests[i], "embed", vec)
                out[i] = vec
        return [list(v) for v in out]  # type: ignore[arg-type]

    def embed_one(self, text: str, role: str = "embedding") -> list[float]:
        return self.embed([text], role=role)[0]

    def entail(self, premise: str, hypothesis: str, role: str = "nli") -> float:
        backend = self._backend(role)
        payload = {"premise": premise, "hypothesis": hypothesis}

        def compute() -> float:
            score = float(backend.entail(premise, hypothesis))
            if score != score or not (0.0 <= score <= 1.0):
                raise ContractViolationError(f"entailment score {score!r} outside [0, 1]")
            return score

        return float(self._cached_call("entail", backend.id, payload, compute))

    def flush_cache(self, scope: str = "all") -> int:
        if scope not in ("all",) + CAPABILITIES:
            raise ConfigError(f"unknown flush scope {scope!r}")
        return self.cache.flush(scope)

    # -- helpers ----------------------------------------------------------

    def _backend(self, role: str) -> Any:
        if role not in self.backends:
            raise ConfigError(f"no backend configured for role {role!r}")
        return self.backends[role]

    def _check_dim(self, backend_id: str, dim: int) -> None:
        known = self._dims.get(backend_id)
        if known is None:
            self._dims[backend_id] = dim
        elif known != dim:
            raise ContractViolationError(
                f"embedding dimension changed for {backend_id}: {known} -> {dim}"
            )

    def map_calls(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        """Apply fn over items, bounded by max_in_flight; output order is input order."""
        items = list(items)
        if self.max_in_flight == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(fn, items))


__all__ = [
    "Gateway",
    "GenerationRequest",
    "GenerationBackend",
    "EmbeddingBackend",
    "EntailmentBackend",
    "MockModelBackend",
    "ResponseCache",
    "cache_key",
    "ROLES",
]
