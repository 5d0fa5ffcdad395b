"""Versioned label space with an append-only mutation log.

Every change goes through ``_apply``, which appends one log record and bumps
the version; replaying the log from scratch reproduces the state exactly.
This is what iteration rollback, optimistic concurrency in the review
service, and the audit trail all hang off.

Status lifecycle: active -> frozen -> active (unfreeze), active/frozen ->
removed. Frozen labels still classify but cannot be removed; no two live
(active or frozen) labels ever share a normalized name.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from openlabels.errors import StateError, SynthesisError, ValidationError
from openlabels.gateway import Gateway, GenerationRequest
from openlabels.keyphrase import normalize_phrase
from openlabels.prompting import PromptTemplate, load_template
from openlabels.tokens import tokenize
from openlabels.vecmath import cosine

log = logging.getLogger(__name__)

STATUSES = ("active", "frozen", "removed")
PROVENANCES = ("cluster-synthesis", "refine-promotion", "human-edit")
RESOLUTIONS = ("keep_both", "remove_a", "remove_b", "rename")

HIGH_SIMILARITY = 0.75
LOW_SIMILARITY = 0.5
MAX_LABEL_TOKENS = 6
SYNTHESIS_RETRIES = 2

_LABEL_PREFIX = re.compile(
    r"^(?:the\s+)?label(?:\s+is)?\s*[:\-]?\s*", re.IGNORECASE
)


@dataclass
class Label:
    id: int
    name: str
    status: str
    provenance: str
    created_at_version: int
    evidence: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "status": self.status,
            "provenance": self.provenance,
            "created_at_version": self.created_at_version,
            "evidence": list(self.evidence),
        }


@dataclass
class BorderlinePair:
    """A label pair whose similarity landed in the review band."""

    id: int
    label_a: int
    label_b: int
    similarity: float
    status: str = "pending"  # pending | resolved
    resolution: str | None = None
    judge_opinion: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "label_a": self.label_a,
            "label_b": self.label_b,
            "similarity": self.similarity,
            "status": self.status,
            "resolution": self.resolution,
            "judge_opinion": self.judge_opinion,
        }


class LabelSpace:
    """Labels, borderline pairs, version counter, and the mutation log."""

    def __init__(self) -> None:
        self.labels: dict[int, Label] = {}
        self.pairs: dict[int, BorderlinePair] = {}
        self.version = 0
        self.log: list[dict] = []
        self._next_label_id = 1
        self._next_pair_id = 1
        self._lock = threading.RLock()

    # -- queries ----------------------------------------------------------

    def active_labels(self) -> list[Label]:
        return [l for l in self._ordered() if l.status == "active"]

    def scorable_labels(self) -> list[Label]:
        """Labels that participate in classification: active plus frozen."""
        return [l for l in self._ordered() if l.status in ("active", "frozen")]

    def live_names(self) -> set[str]:
        return {normalize_phrase(l.name) for l in self.scorable_labels()}

    def pending_pairs(self) -> list[BorderlinePair]:
        return [p for p in sorted(self.pairs.values(), key=lambda p: p.id) if p.status == "pending"]

    def get_label(self, label_id: int) -> Label:
        if label_id not in self.labels:
            raise ValidationError(f"unknown label id {label_id}")
        return self.labels[label_id]

    def _ordered(self) -> list[Label]:
        return [self.labels[i] for i in sorted(self.labels)]

    # -- mutation core ----------------------------------------------------

    def _apply(self, op: str, payload: dict) -> None:
        """Mutate state and append to the log. All writers funnel through here."""
        with self._lock:
            self._mutate(op, payload)
            self.version += 1
            self.log.append({"version": self.version, "op": op, "payload": payload})

    def _mutate(self, op: str, payload: dict) -> None:
        if op == "add_label":
            label = Label(
                id=payload["id"],
                name=payload["name"],
                status="active",
                provenance=payload["provenance"],
                created_at_version=self.version + 1,
                evidence=list(payload.get("evidence", [])),
            )
            self.labels[label.id] = label
            self._next_label_id = max(self._next_label_id, label.id + 1)
        elif op == "remove_label":
            self.labels[payload["id"]].status = "removed"
        elif op == "freeze":
            for label_id in payload["ids"]:
                self.labels[label_id].status = "frozen"
        elif op == "unfreeze_all":
            for label in self.labels.values():
                if label.status == "frozen":
                    label.status = "active"
        elif op == "rename":
            self.labels[payload["id"]].name = payload["new_name"]
        elif op == "add_pair":
            pair = BorderlinePair(
                id=payload["id"],
                label_a=payload["label_a"],
                label_b=payload["label_b"],
                similarity=payload["similarity"],
                status=payload.get("status", "pending"),
                resolution=payload.get("resolution"),
                judge_opinion=payload.get("judge_opinion"),
            )
            self.pairs[pair.id] = pair
            self._next_pair_id = max(self._next_pair_id, pair.id + 1)
        elif op == "resolve_pair":
            pair = self.pairs[payload["id"]]
            pair.status = "resolved"
            pair.resolution = payload["resolution"]
        else:
            raise ValidationError(f"unknown mutation op {op!r}")

    # -- public mutators ----------------------------------------------------

    def add_label(
        self,
        name: str,
        provenance: str,
        evidence: Iterable[str] = (),
        extra: dict | None = None,
    ) -> Label:
        if provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {provenance!r}")
        normalized = normalize_phrase(name)
        if not normalized:
            raise ValidationError("label name is empty after normalization")
        with self._lock:
            clash = self._find_live(normalized)
            if clash is not None:
                raise ValidationError(
                    f"label name {normalized!r} collides with live label {clash.id}"
                )
            payload = {
                "id": self._next_label_id,
                "name": normalized,
                "provenance": provenance,
                "evidence": list(evidence)[:3],
            }
            if extra:
                payload.update(extra)
            self._apply("add_label", payload)
            return self.labels[payload["id"]]

    def _find_live(self, normalized: str) -> Label | None:
        for label in self.scorable_labels():
            if normalize_phrase(label.name) == normalized:
                return label
        return None

    def find_live_by_name(self, name: str) -> Label | None:
        return self._find_live(normalize_phrase(name))

    def remove_label(self, label_id: int, reason: str, extra: dict | None = None) -> None:
        with self._lock:
            label = self.get_label(label_id)
            if label.status == "removed":
                raise StateError(f"label {label_id} is already removed")
            if label.status == "frozen":
                raise StateError(f"label {label_id} is frozen and cannot be removed")
            payload = {"id": label_id, "reason": reason}
            if extra:
                payload.update(extra)
            self._apply("remove_label", payload)

    def freeze(self, label_ids: Iterable[int]) -> None:
        """Freeze labels; freezing an already-frozen label is a no-op on state."""
        ids = list(label_ids)
        with self._lock:
            for label_id in ids:
                label = self.get_label(label_id)
                if label.status == "removed":
                    raise StateError(f"cannot freeze removed label {label_id}")
            self._apply("freeze", {"ids": ids})

    def unfreeze_all(self) -> None:
        with self._lock:
            self._apply("unfreeze_all", {})

    def rename(self, label_id: int, new_name: str) -> None:
        normalized = normalize_phrase(new_name)
        if not normalized:
            raise ValidationError("new label name is empty after normalization")
        with self._lock:
            label = self.get_label(label_id)
            if label.status == "removed":
                raise StateError(f"cannot rename removed label {label_id}")
            clash = self._find_live(normalized)
            if clash is not None and clash.id != label_id:
                raise ValidationError(
                    f"label name {normalized!r} collides with live label {clash.id}"
                )
            self._apply("rename", {"id": label_id, "new_name": normalized})

    def add_pair(
        self,
        label_a: int,
        label_b: int,
        similarity: float,
        status: str = "pending",
        resolution: str | None = None,
        judge_opinion: str | None = None,
    ) -> BorderlinePair:
        with self._lock:
            self.get_label(label_a)
            self.get_label(label_b)
            payload = {
                "id": self._next_pair_id,
                "label_a": label_a,
                "label_b": label_b,
                "similarity": similarity,
                "status": status,
                "resolution": resolution,
                "judge_opinion": judge_opinion,
            }
            self._apply("add_pair", payload)
            return self.pairs[payload["id"]]

    def resolve_pair(self, pair_id: int, resolution: str, new_name: str | None = None) -> None:
        """Apply a human or judge decision to a pending pair.

        Rename collisions raise before any mutation, leaving the pair pending.
        """
        if resolution not in RESOLUTIONS:
            raise ValidationError(f"unknown resolution {resolution!r}")
        with self._lock:
            if pair_id not in self.pairs:
                raise ValidationError(f"unknown pair id {pair_id}")
            pair = self.pairs[pair_id]
            if pair.status != "pending":
                raise StateError(f"pair {pair_id} is not pending")
            if resolution == "rename":
                if not new_name:
                    raise ValidationError("rename resolution requires new_name")
                # Validate the rename fully before mutating anything.
                normalized = normalize_phrase(new_name)
                if not normalized:
                    raise ValidationError("new label name is empty after normalization")
                clash = self._find_live(normalized)
                if clash is not None and clash.id != pair.label_b:
                    raise ValidationError(
                        f"label name {normalized!r} collides with live label {clash.id}"
                    )
                self.rename(pair.label_b, normalized)
            elif resolution == "remove_a":
                self.remove_label(pair.label_a, reason="pair-resolution", extra={"pair": pair_id})
            elif resolution == "remove_b":
                self.remove_label(pair.label_b, reason="pair-resolution", extra={"pair": pair_id})
            self._apply("resolve_pair", {"id": pair_id, "resolution": resolution})

    # -- replay / persistence ----------------------------------------------

    @classmethod
    def replay(cls, log_records: Iterable[dict]) -> "LabelSpace":
        """Rebuild a space by applying log records in order."""
        space = cls()
        for rec in log_records:
            space._mutate(rec["op"], rec["payload"])
            space.version = rec["version"]
            space.log.append({"version": rec["version"], "op": rec["op"], "payload": rec["payload"]})
        return space

    def rollback_to(self, version: int) -> None:
        """Restore state to an earlier version by replaying the log prefix."""
        with self._lock:
            prefix = [rec for rec in self.log if rec["version"] <= version]
            fresh = LabelSpace.replay(prefix)
            self.labels = fresh.labels
            self.pairs = fresh.pairs
            self.version = fresh.version
            self.log = fresh.log
            self._next_label_id = fresh._next_label_id
            self._next_pair_id = fresh._next_pair_id

    def to_dict(self) -> dict:
        with self._lock:
            return {
                "version": self.version,
                "labels": [l.to_dict() for l in self._ordered()],
                "pairs": [self.pairs[i].to_dict() for i in sorted(self.pairs)],
                "log": [dict(rec) for rec in self.log],
            }

    @classmethod
    def from_dict(cls, raw: dict) -> "LabelSpace":
        return cls.replay(raw.get("log", []))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "LabelSpace":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def export_names(self) -> str:
        """Newline-separated active label names, the exchange format."""
        return "\n".join(l.name for l in self.active_labels()) + "\n"


def parse_label_response(response: str) -> str:
    """Normalize a synthesis response down to a bare label name."""
    text = response.strip().splitlines()[0] if response.strip() else ""
    text = _LABEL_PREFIX.sub("", text.strip())
    text = text.strip().strip("\"'`").rstrip(".,;:!").strip()
    return normalize_phrase(text)


def synthesize_label(
    exemplar_chunks: list[str],
    objective_text: str,
    gateway: Gateway,
    space: LabelSpace,
    template: PromptTemplate | None = None,
    evidence: list[str] | None = None,
    extra: dict | None = None,
) -> Label | None:
    """Name a cluster from 1-3 exemplar chunks (closest to the center first).

    Returns the existing label when the synthesized name collides with a live
    one. Raises SynthesisError when retries never produce a usable name.
    """
    if not 1 <= len(exemplar_chunks) <= 3:
        raise ValidationError(f"expected 1-3 exemplar chunks, got {len(exemplar_chunks)}")
    template = template or load_template("label_synthesis")
    document = " ".join(exemplar_chunks)

    prompt = template.render(objective=objective_text, document=document)
    attempts = [prompt]
    # Retry prompts differ so the cache cannot replay the same bad answer.
    for i in range(SYNTHESIS_RETRIES):
        attempts.append(prompt + f"\nRespond with the label only (attempt {i + 2}).")

    for attempt in attempts:
        response = gateway.generate(GenerationRequest(template.system, attempt))
        name = parse_label_response(response)
        if name and len(tokenize(name)) <= MAX_LABEL_TOKENS:
            existing = space.find_live_by_name(name)
            if existing is not None:
                log.info("synthesized name %r already live as label %d", name, existing.id)
                return existing
            return space.add_label(
                name,
                provenance="cluster-synthesis",
                evidence=(evidence if evidence is not None else exemplar_chunks)[:3],
                extra=extra,
            )
    raise SynthesisError(f"no usable label after {len(attempts)} attempts: {response[:120]!r}")


def pairwise_similarities(names: list[str], gateway: Gateway, role: str = "similarity") -> dict[tuple[int, int], float]:
    vectors = gateway.embed(names, role=role)
    sims: dict[tuple[int, int], float] = {}
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            sims[(i, j)] = cosine(vectors[i], vectors[j])
    return sims


def ask_judge(gateway: Gateway, name_a: str, name_b: str,
              template: PromptTemplate | None = None) -> str | None:
    """Yes/no pair question. Returns 'yes', 'no', or None when unparseable."""
    template = template or load_template("pair_judge")
    prompt = template.render(ground_truth=name_a, prediction=name_b)
    response = gateway.generate(GenerationRequest(template.system, prompt), role="judge")
    answer = response.strip().lower()
    if answer.startswith("yes"):
        return "yes"
    if answer.startswith("no"):
        return "no"
    return None


def deduplicate(
    space: LabelSpace,
    gateway: Gateway,
    high_threshold: float = HIGH_SIMILARITY,
    low_threshold: float = LOW_SIMILARITY,
    auto_judge: bool = True,
    judge_advisory: bool = False,
    judge_template: PromptTemplate | None = None,
) -> list[BorderlinePair]:
    """Collapse near-duplicate active labels.

    Pairs are scanned in ascending (id_a, id_b) order and removals apply
    immediately, so similarity chains collapse onto the earliest-created
    label. At or above ``high_threshold`` the later-created label is removed
    outright; inside [low, high) the judge decides when auto_judge is on,
    otherwise the pair is queued for human review. An unparseable judge
    answer also queues the pair.
    """
    if not 0.0 <= low_threshold <= high_threshold <= 1.0:
        raise ValidationError(
            f"thresholds must satisfy 0 <= low <= high <= 1, got {low_threshold}, {high_threshold}"
        )
    labels = space.active_labels()
    if len(labels) < 2:
        return []
    names = [l.name for l in labels]
    sims = pairwise_similarities(names, gateway)

    new_pairs: list[BorderlinePair] = []
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            a, b = labels[i], labels[j]
            if a.status == "removed" or b.status == "removed":
                continue
            sim = sims[(i, j)]
            if sim >= high_threshold:
                # ids ascend with creation, so b is the later-created label.
                space.remove_label(
                    b.id, reason="dedup-threshold", extra={"kept": a.id, "similarity": sim}
                )
            elif sim >= low_threshold:
                if auto_judge:
                    opinion = ask_judge(gateway, a.name, b.name, judge_template)
                    if opinion == "yes":
                        pair = space.add_pair(a.id, b.id, sim, status="pending",
                                              judge_opinion="yes")
                        space.resolve_pair(pair.id, "remove_b")
                    elif opinion == "no":
                        pair = space.add_pair(a.id, b.id, sim, status="pending",
                                              judge_opinion="no")
                        space.resolve_pair(pair.id, "keep_both")
                    else:
                        new_pairs.append(space.add_pair(a.id, b.id, sim, status="pending"))
                else:
                    opinion = (
                        ask_judge(gateway, a.name, b.name, judge_template)
                        if judge_advisory
                        else None
                    )
                    new_pairs.append(
                        space.add_pair(a.id, b.id, sim, status="pending", judge_opinion=opinion)
                    )
    return new_pairs


def apply_resolution(space: LabelSpace, pair_id: int, resolution: str,
                     new_name: str | None = None) -> None:
    space.resolve_pair(pair_id, resolution, new_name)
