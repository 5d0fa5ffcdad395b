"""Corpus ingestion, fixed-size token chunking, and seeded subsetting."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from openlabels.errors import (
    ConfigError,
    EmptyDocumentError,
    ParseError,
    ValidationError,
)
from openlabels.tokens import tokenize

VALID_SPLITS = ("train", "test")
DEFAULT_CHUNK_SIZE = 50


@dataclass(frozen=True)
class Document:
    """One text record. ``gold_labels`` is None when the record is unlabeled."""

    id: str
    text: str
    gold_labels: tuple[str, ...] | None = None
    split: str = "train"


@dataclass(frozen=True)
class Chunk:
    """A contiguous token window of a document.

    Only the final chunk of a document may hold fewer than ``chunk_size``
    tokens; ``text`` is the window's tokens joined by single spaces.
    """

    doc_id: str
    index: int
    text: str
    token_count: int

    @property
    def instance_id(self) -> str:
        return f"c::{self.doc_id}::{self.index}"


@dataclass(frozen=True)
class CorpusSubset:
    """Seeded, prefix-stable sample of document ids."""

    ids: tuple[str, ...]
    seed: int
    size: int


class Corpus:
    """Ordered collection of documents with unique ids."""

    def __init__(self, documents: Sequence[Document]):
        self._docs: list[Document] = list(documents)
        self._by_id: dict[str, Document] = {}
        for doc in self._docs:
            if doc.id in self._by_id:
                raise ValidationError(f"duplicate document id {doc.id!r}")
            self._by_id[doc.id] = doc

    def __len__(self) -> int:
        return len(self._docs)

    def __iter__(self) -> Iterator[Document]:
        return iter(self._docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    @property
    def docs(self) -> list[Document]:
        return list(self._docs)

    @property
    def ids(self) -> list[str]:
        return [d.id for d in self._docs]

    def get(self, doc_id: str) -> Document:
        if doc_id not in self._by_id:
            raise ValidationError(f"unknown document id {doc_id!r}")
        return self._by_id[doc_id]

    def select(self, doc_ids: Iterable[str]) -> list[Document]:
        return [self.get(i) for i in doc_ids]

    def labeled(self) -> list[Document]:
        return [d for d in self._docs if d.gold_labels is not None]


def _parse_record(raw: dict, line_no: int) -> Document:
    if "id" not in raw:
        raise ParseError(f"record {line_no}: missing 'id' field")
    if "text" not in raw:
        raise ParseError(f"record {line_no}: missing 'text' field")
    doc_id = raw["id"]
    text = raw["text"]
    if not isinstance(doc_id, str) or not doc_id:
        raise ParseError(f"record {line_no}: 'id' must be a non-empty string")
    if not isinstance(text, str):
        raise ParseError(f"record {line_no}: 'text' must be a string")
    if not text.strip():
        raise ValidationError(f"record {line_no}: document {doc_id!r} has empty text")

    labels: tuple[str, ...] | None = None
    if "labels" in raw and raw["labels"] is not None:
        raw_labels = raw["labels"]
        if not isinstance(raw_labels, list) or not all(isinstance(x, str) for x in raw_labels):
            raise ParseError(f"record {line_no}: 'labels' must be a list of strings")
        labels = tuple(raw_labels)

    split = raw.get("split", "train")
    if split not in VALID_SPLITS:
        raise ValidationError(
            f"record {line_no}: split {split!r} not in {VALID_SPLITS}"
        )
    return Document(id=doc_id, text=text, gold_labels=labels, split=split)


def ingest(path: str | Path, format: str = "jsonl") -> Corpus:
    """Load a corpus file. Raises ParseError/ValidationError with the record number."""
    if format != "jsonl":
        raise ConfigError(f"unsupported corpus format {format!r}; expected 'jsonl'")
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"corpus file not found: {path}")

    docs: list[Document] = []
    seen: dict[str, int] = {}
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"record {line_no}: invalid JSON: {exc.msg}") from exc
            if not isinstance(raw, dict):
                raise ParseError(f"record {line_no}: expected a JSON object")
            doc = _parse_record(raw, line_no)
            if doc.id in seen:
                raise ValidationError(
                    f"duplicate document id {doc.id!r} at record {line_no} "
                    f"(first seen at record {seen[doc.id]})"
                )
            seen[doc.id] = line_no
            docs.append(doc)
    return Corpus(docs)


def write_jsonl(docs: Iterable[Document], path: str | Path) -> None:
    """Serialize documents back to the ingestion format."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for doc in docs:
            rec: dict = {"id": doc.id, "text": doc.text}
            if doc.gold_labels is not None:
                rec["labels"] = list(doc.gold_labels)
            if doc.split != "train":
                rec["split"] = doc.split
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def chunk_document(doc: Document, chunk_size: int = DEFAULT_CHUNK_SIZE) -> list[Chunk]:
    """Split a document into consecutive token windows.

    Every chunk except the last holds exactly ``chunk_size`` tokens; joining
    chunk texts in order with single spaces reproduces the token sequence.
    """
    if chunk_size < 1:
        raise ConfigError(f"chunk_size must be >= 1, got {chunk_size}")
    toks = tokenize(doc.text)
    if not toks:
        raise EmptyDocumentError(f"document {doc.id!r} has no tokens")
    chunks = []
    for idx, start in enumerate(range(0, len(toks), chunk_size)):
        window = toks[start : start + chunk_size]
        chunks.append(
            Chunk(doc_id=doc.id, index=idx, text=" ".join(window), token_count=len(window))
        )
    return chunks


def chunk_corpus(docs: Iterable[Document], chunk_size: int = DEFAULT_CHUNK_SIZE) -> list[Chunk]:
    """Chunk documents in order; chunk order is (document order, chunk index)."""
    out: list[Chunk] = []
    for doc in docs:
        out.extend(chunk_document(doc, chunk_size))
    return out


def sample_subset(corpus: Corpus, seed: int, size: int) -> CorpusSubset:
    """Deterministic sample: shuffle ids by seed, take the prefix.

    Growing ``size`` with the same seed keeps the smaller sample as a prefix,
    so incremental subset growth never resamples earlier documents.
    """
    n = len(corpus)
    if size < 0 or size > n:
        raise ValidationError(f"subset size {size} out of range [0, {n}]")
    ids = corpus.ids
    rng = random.Random(seed)
    rng.shuffle(ids)
    return CorpusSubset(ids=tuple(ids[:size]), seed=seed, size=size)
