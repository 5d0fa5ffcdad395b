"""Keyphrase prompting, response parsing, and frequency bookkeeping.

One prompt per chunk asks the generation backend for two coarse and two fine
keyphrases. Responses arrive in several shapes in practice, so the parser
accepts marker-delimited segments, enumerations, and plain comma/newline
lists. A chunk whose response yields nothing is recorded as a failure and the
pipeline moves on; only a majority of failures aborts the stage.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from openlabels.corpus import Chunk, Document
from openlabels.errors import ExtractionError, ParseError, ValidationError
from openlabels.gateway import Gateway, GenerationRequest
from openlabels.prompting import PromptTemplate, load_template
from openlabels.tokens import tokenize

log = logging.getLogger(__name__)

MAX_PHRASES_PER_CHUNK = 4
MAX_PHRASE_TOKENS = 10
GRANULARITIES = ("coarse", "fine", "unspecified")

_MARKER_SEGMENT = re.compile(r"\[keyphrase\](.*?)\[/keyphrase\]", re.DOTALL | re.IGNORECASE)
_ENUM_PREFIX = re.compile(r"^\s*(?:\d+[.)]|[-*•])\s*")
_GRANULARITY_PREFIX = re.compile(r"^\s*(coarse|fine)(?:-grained)?\s*(?:keyphrases?)?\s*:\s*(.*)$", re.IGNORECASE)


@dataclass(frozen=True)
class Keyphrase:
    """A normalized phrase plus where it came from."""

    text: str
    doc_id: str
    chunk_index: int
    granularity: str = "unspecified"

    @property
    def source(self) -> tuple[str, int]:
        return (self.doc_id, self.chunk_index)

    def instance_id(self, slot: int) -> str:
        return f"k::{self.doc_id}::{self.chunk_index}::{slot}"


@dataclass(frozen=True)
class ObjectiveDescription:
    """Free-text statement of what the labels should capture."""

    text: str
    demonstrations: tuple[tuple[str, str], ...] = ()

    def render(self) -> str:
        if not self.demonstrations:
            return self.text
        shown = "; ".join(
            f"coarse-grained like {c!r}, fine-grained like {f!r}" for c, f in self.demonstrations
        )
        return f"{self.text} For example: {shown}."


@dataclass
class ExtractionFailure:
    doc_id: str
    chunk_index: int
    reason: str


@dataclass
class KeyphraseSet:
    """All keyphrases extracted from a chunk collection, in extraction order."""

    entries: list[Keyphrase] = field(default_factory=list)
    failures: list[ExtractionFailure] = field(default_factory=list)
    chunks_processed: int = 0
    subset_ids: tuple[str, ...] = ()

    @property
    def frequency(self) -> Counter[str]:
        return Counter(k.text for k in self.entries)

    @property
    def total(self) -> int:
        return len(self.entries)

    def unique_count(self) -> int:
        return len({k.text for k in self.entries})

    def by_doc(self) -> dict[str, list[Keyphrase]]:
        grouped: dict[str, list[Keyphrase]] = {}
        for k in self.entries:
            grouped.setdefault(k.doc_id, []).append(k)
        return grouped

    def to_dict(self) -> dict:
        return {
            "chunks_processed": self.chunks_processed,
            "subset_ids": list(self.subset_ids),
            "entries": [
                {
                    "text": k.text,
                    "doc_id": k.doc_id,
                    "chunk_index": k.chunk_index,
                    "granularity": k.granularity,
                }
                for k in self.entries
            ],
            "failures": [
                {"doc_id": f.doc_id, "chunk_index": f.chunk_index, "reason": f.reason}
                for f in self.failures
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "KeyphraseSet":
        return cls(
            entries=[
                Keyphrase(
                    text=e["text"],
                    doc_id=e["doc_id"],
                    chunk_index=e["chunk_index"],
                    granularity=e.get("granularity", "unspecified"),
                )
                for e in raw.get("entries", [])
            ],
            failures=[
                ExtractionFailure(f["doc_id"], f["chunk_index"], f["reason"])
                for f in raw.get("failures", [])
            ],
            chunks_processed=raw.get("chunks_processed", 0),
            subset_ids=tuple(raw.get("subset_ids", [])),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "KeyphraseSet":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def normalize_phrase(text: str) -> str:
    """Lowercase, trim, collapse inner whitespace. Idempotent."""
    return " ".join(text.lower().split())


def _clean_candidate(text: str) -> str:
    text = _ENUM_PREFIX.sub("", text)
    return normalize_phrase(text.strip().strip("\"'`.,;:"))


def _split_segment(segment: str) -> list[str]:
    parts = re.split(r",|\n|\band\b", segment)
    return [p for p in (part.strip() for part in parts) if p]


def parse_keyphrase_response(response: str) -> list[tuple[str, str]]:
    """Return up to 4 (phrase, granularity) pairs from a raw model response.

    Malformed segments are dropped silently; an entirely unusable response
    returns an empty list so the caller can record a per-chunk failure.
    """
    candidates: list[tuple[str, str]] = []

    segments = _MARKER_SEGMENT.findall(response)
    if segments:
        for seg in segments:
            for part in _split_segment(seg):
                candidates.append((part, "unspecified"))
    else:
        for line in response.splitlines():
            line = line.strip()
            if not line:
                continue
            gmatch = _GRANULARITY_PREFIX.match(line)
            granularity = "unspecified"
            if gmatch:
                granularity = gmatch.group(1).lower()
                line = gmatch.group(2)
            for part in _split_segment(line):
                candidates.append((part, granularity))

    out: list[tuple[str, str]] = []
    seen: set[str] = set()
    for raw, granularity in candidates:
        phrase = _clean_candidate(raw)
        if not phrase:
            continue
        if len(tokenize(phrase)) > MAX_PHRASE_TOKENS:
            continue
        if phrase in seen:
            continue
        seen.add(phrase)
        out.append((phrase, granularity))
        if len(out) >= MAX_PHRASES_PER_CHUNK:
            break
    return out


def extract_keyphrases(
    chunk: Chunk,
    objective: ObjectiveDescription,
    gateway: Gateway,
    template: PromptTemplate | None = None,
) -> list[Keyphrase]:
    """Prompt for one chunk. Raises ParseError when nothing can be salvaged."""
    template = template or load_template("keyphrase_extraction")
    prompt = template.render(objective=objective.render(), chunk=chunk.text)
    response = gateway.generate(GenerationRequest(template.system, prompt))
    pairs = parse_keyphrase_response(response)
    if not pairs:
        raise ParseError(
            f"chunk {chunk.doc_id}#{chunk.index}: unparseable keyphrase response: "
            f"{response[:200]!r}"
        )
    return [
        Keyphrase(text=p, doc_id=chunk.doc_id, chunk_index=chunk.index, granularity=g)
        for p, g in pairs
    ]


def build_keyphrase_set(
    chunks: list[Chunk],
    objective: ObjectiveDescription,
    gateway: Gateway,
    template: PromptTemplate | None = None,
    subset_ids: tuple[str, ...] = (),
) -> KeyphraseSet:
    """Extract keyphrases for every chunk; abort if more than half fail."""
    template = template or load_template("keyphrase_extraction")
    kset = KeyphraseSet(subset_ids=subset_ids)

    def one(chunk: Chunk) -> tuple[Chunk, list[Keyphrase] | None, str | None]:
        try:
            return chunk, extract_keyphrases(chunk, objective, gateway, template), None
        except ParseError as exc:
            return chunk, None, str(exc)

    for chunk, phrases, failure in gateway.map_calls(one, chunks):
        kset.chunks_processed += 1
        if phrases is None:
            kset.failures.append(ExtractionFailure(chunk.doc_id, chunk.index, failure or ""))
        else:
            kset.entries.extend(phrases)

    if chunks and len(kset.failures) * 2 > len(chunks):
        raise ExtractionError(
            f"keyphrase extraction failed for {len(kset.failures)} of {len(chunks)} chunks"
        )
    if kset.failures:
        log.warning("keyphrase extraction failed for %d chunks", len(kset.failures))
    return kset


@dataclass
class DominanceReport:
    """How often one gold label dominates a document, per the probe prompt."""

    sampled: int
    dominant: int
    per_label_counts: dict[str, int]

    @property
    def percent_dominant(self) -> float:
        return self.dominant / self.sampled if self.sampled else 0.0

    def to_dict(self) -> dict:
        return {
            "sampled": self.sampled,
            "dominant": self.dominant,
            "percent_dominant": self.percent_dominant,
            "per_label_counts": dict(sorted(self.per_label_counts.items())),
        }


def probe_dominance(
    docs: list[Document],
    gateway: Gateway,
    sample_size: int,
    seed: int = 0,
    template: PromptTemplate | None = None,
) -> DominanceReport:
    """Estimate how often a single gold label covers most of a document.

    Requires gold labels; a response that does not echo one of the document's
    gold labels (including 'NO') counts as non-dominant.
    """
    labeled = [d for d in docs if d.gold_labels]
    if not labeled:
        raise ValidationError("dominance probe requires documents with gold labels")
    template = template or load_template("dominance_probe")

    import random as _random

    rng = _random.Random(seed)
    picked = labeled if sample_size >= len(labeled) else rng.sample(labeled, sample_size)

    dominant = 0
    per_label: Counter[str] = Counter()
    for doc in picked:
        labels = list(doc.gold_labels or ())
        prompt = template.render(labels=json.dumps(labels), document=doc.text)
        response = gateway.generate(GenerationRequest(template.system, prompt))
        answer = normalize_phrase(response)
        matched = next((l for l in labels if normalize_phrase(l) == answer), None)
        if matched is not None:
            dominant += 1
            per_label[matched] += 1
    return DominanceReport(
        sampled=len(picked), dominant=dominant, per_label_counts=dict(per_label)
    )
