"""Content-addressed response cache.

Layout: one JSON file per entry named by the request digest, plus an
append-only ``index.jsonl`` recording digest and capability for flushing.
Values round-trip byte-identically for strings; vectors and scores are
stored as JSON numbers.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path
from typing import Any

from openlabels.errors import CacheError

_MISS = object()


def _normalize_ws(value: str) -> str:
    return " ".join(value.split())


def canonical_payload(capability: str, payload: dict[str, Any]) -> str:
    """Serialize a request for hashing: sorted keys, prompt whitespace collapsed."""
    normalized = {}
    for key, value in payload.items():
        if isinstance(value, str):
            normalized[key] = _normalize_ws(value)
        else:
            normalized[key] = value
    body = {"capability": capability, "payload": normalized}
    return json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def cache_key(backend_id: str, capability: str, payload: dict[str, Any]) -> str:
    """Digest identifying one request against one backend."""
    canonical = canonical_payload(capability, payload)
    material = f"{backend_id}|{canonical}".encode("utf-8")
    return hashlib.sha256(material).hexdigest()


class ResponseCache:
    """Append-only disk cache keyed by request digest, with a read-through memo."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.index_path = self.directory / "index.jsonl"
        self._lock = threading.Lock()
        self._mem: dict[str, Any] = {}
        self._index: dict[str, str] = {}
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            if self.index_path.exists():
                with self.index_path.open("r", encoding="utf-8") as fh:
                    for line in fh:
                        line = line.strip()
                        if not line:
                            continue
                        rec = json.loads(line)
                        self._index[rec["digest"]] = rec["capability"]
        except OSError as exc:
            raise CacheError(f"cannot open cache at {self.directory}: {exc}") from exc
        except (json.JSONDecodeError, KeyError) as exc:
            raise CacheError(f"corrupt cache index {self.index_path}: {exc}") from exc

    def __len__(self) -> int:
        return len(self._index)

    def _entry_path(self, digest: str) -> Path:
        return self.directory / f"{digest}.json"

    def get(self, digest: str) -> Any:
        """Return the stored response or the module-level miss sentinel."""
        with self._lock:
            if digest in self._mem:
                return self._mem[digest]
            if digest not in self._index:
                return _MISS
        path = self._entry_path(digest)
        try:
            with path.open("r", encoding="utf-8") as fh:
                entry = json.load(fh)
        except FileNotFoundError:
            return _MISS
        except (OSError, json.JSONDecodeError) as exc:
            raise CacheError(f"cannot read cache entry {path}: {exc}") from exc
        value = entry["response"]
        with self._lock:
            self._mem[digest] = value
        return value

    @staticmethod
    def is_miss(value: Any) -> bool:
        return value is _MISS

    def put(self, digest: str, capability: str, response: Any) -> None:
        path = self._entry_path(digest)
        entry = {"capability": capability, "response": response}
        tmp = path.with_suffix(".tmp")
        try:
            with tmp.open("w", encoding="utf-8") as fh:
                json.dump(entry, fh, sort_keys=True, ensure_ascii=False)
            os.replace(tmp, path)
            with self._lock:
                already = digest in self._index
                self._index[digest] = capability
                self._mem[digest] = response
            if not already:
                with self.index_path.open("a", encoding="utf-8") as fh:
                    fh.write(
                        json.dumps(
                            {"digest": digest, "capability": capability},
                            sort_keys=True,
                        )
                        + "\n"
                    )
        except OSError as exc:
            raise CacheError(f"cannot write cache entry {path}: {exc}") from exc

    def flush(self, scope: str = "all") -> int:
        """Drop entries. ``scope`` is 'all' or a capability name. Returns count dropped."""
        with self._lock:
            if scope == "all":
                doomed = list(self._index.keys())
            else:
                doomed = [d for d, cap in self._index.items() if cap == scope]
            for digest in doomed:
                self._index.pop(digest, None)
                self._mem.pop(digest, None)
            survivors = dict(self._index)
        try:
            for digest in doomed:
                path = self._entry_path(digest)
                if path.exists():
                    path.unlink()
            tmp = self.index_path.with_suffix(".tmp")
            with tmp.open("w", encoding="utf-8") as fh:
                for digest, cap in survivors.items():
                    fh.write(
                        json.dumps({"digest": digest, "capability": cap}, sort_keys=True) + "\n"
                    )
            os.replace(tmp, self.index_path)
        except OSError as exc:
            raise CacheError(f"cache flush failed: {exc}") from exc
        return len(doomed)
