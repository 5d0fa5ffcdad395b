"""Zero-shot entailment classification and per-document rank aggregation.

Each document contributes its chunks and, when a keyphrase set is supplied,
its extracted keyphrases as instances. Every instance is scored against the
hypothesis "This example is constructed for {label}" for every live label;
per-instance rankings are then aggregated into a document prediction by
repeated plurality vote over each instance's best not-yet-selected label.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from openlabels.corpus import Chunk, Document, chunk_document
from openlabels.errors import GatewayError, PartialMatrixError, ValidationError
from openlabels.gateway import Gateway
from openlabels.gateway.cache import canonical_payload
from openlabels.keyphrase import KeyphraseSet
from openlabels.labelspace import Label, LabelSpace

log = logging.getLogger(__name__)

DEFAULT_ENTAIL_TEMPLATE = "This example is constructed for {label}"
DEFAULT_MAX_RANKS = 3


@dataclass(frozen=True)
class Instance:
    """One scoring unit: a chunk or a keyphrase occurrence."""

    id: str
    doc_id: str
    kind: str  # "chunk" | "keyphrase"
    text: str


@dataclass
class EntailmentMatrix:
    instance_ids: list[str]
    label_ids: list[int]
    scores: np.ndarray  # shape (instances, labels)


@dataclass(frozen=True)
class InstanceTop:
    """Full descending ranking for one instance (ties broken by label id)."""

    instance_id: str
    kind: str
    ranking: tuple[int, ...]
    scores: tuple[float, ...]  # aligned with ranking

    @property
    def top_label(self) -> int:
        return self.ranking[0]

    @property
    def top_score(self) -> float:
        return self.scores[0]

    def score_of(self, label_id: int) -> float:
        return self.scores[self.ranking.index(label_id)]


@dataclass(frozen=True)
class DocumentGroup:
    doc_id: str
    instance_ids: tuple[str, ...]


@dataclass
class Prediction:
    doc_id: str
    labels: list[int]
    scores: list[float]  # mean vote score per rank
    supports: list[int]  # vote count per rank


@dataclass
class ClassificationResult:
    predictions: list[Prediction]
    tops: list[InstanceTop]
    groups: list[DocumentGroup]
    label_ids: list[int]
    label_names: dict[int, str]


def build_instances(
    docs: Sequence[Document],
    chunk_size: int,
    keyphrase_set: KeyphraseSet | None = None,
) -> list[Instance]:
    """Chunks first, then keyphrase occurrences, each in (doc, index) order."""
    instances: list[Instance] = []
    for doc in docs:
        for chunk in chunk_document(doc, chunk_size):
            instances.append(
                Instance(id=chunk.instance_id, doc_id=doc.id, kind="chunk", text=chunk.text)
            )
    if keyphrase_set is not None:
        by_doc = keyphrase_set.by_doc()
        for doc in docs:
            for slot, phrase in enumerate(by_doc.get(doc.id, [])):
                instances.append(
                    Instance(
                        id=phrase.instance_id(slot),
                        doc_id=doc.id,
                        kind="keyphrase",
                        text=phrase.text,
                    )
                )
    return instances


def score_all(
    instances: Sequence[Instance],
    labels: Sequence[Label],
    gateway: Gateway,
    template: str = DEFAULT_ENTAIL_TEMPLATE,
) -> EntailmentMatrix:
    """Entailment scores for every (instance, label) pair, fully cached.

    A mid-matrix gateway failure surfaces as PartialMatrixError carrying a
    resume token; rerunning the same call resumes from the cache.
    """
    if not instances:
        raise ValidationError("cannot score an empty instance list")
    if not labels:
        raise ValidationError("cannot score against an empty label list")
    hypotheses = [template.format(label=l.name) for l in labels]
    scores = np.zeros((len(instances), len(labels)), dtype=np.float64)

    def score_row(item: tuple[int, Instance]) -> list[float]:
        i, inst = item
        return [gateway.entail(inst.text, hyp) for hyp in hypotheses]

    completed = 0
    try:
        rows = gateway.map_calls(score_row, list(enumerate(instances)))
        for i, row in enumerate(rows):
            scores[i, :] = row
            completed += 1
    except GatewayError as exc:
        token = canonical_payload(
            "entail-matrix",
            {"instances": len(instances), "labels": len(labels), "template": template},
        )
        raise PartialMatrixError(
            f"entailment scoring failed after {completed} of {len(instances)} rows: {exc}",
            completed=completed,
            total=len(instances),
            resume_token=token,
        ) from exc

    return EntailmentMatrix(
        instance_ids=[inst.id for inst in instances],
        label_ids=[l.id for l in labels],
        scores=scores,
    )


def top_rank(matrix: EntailmentMatrix, kinds: dict[str, str] | None = None) -> list[InstanceTop]:
    """Per-instance descending ranking; score ties break by ascending label id."""
    tops: list[InstanceTop] = []
    for i, instance_id in enumerate(matrix.instance_ids):
        row = matrix.scores[i]
        order = sorted(range(len(matrix.label_ids)), key=lambda j: (-row[j], matrix.label_ids[j]))
        tops.append(
            InstanceTop(
                instance_id=instance_id,
                kind=(kinds or {}).get(instance_id, "chunk"),
                ranking=tuple(matrix.label_ids[j] for j in order),
                scores=tuple(float(row[j]) for j in order),
            )
        )
    return tops


def aggregate(
    group: DocumentGroup,
    tops_by_id: dict[str, InstanceTop],
    max_ranks: int = DEFAULT_MAX_RANKS,
) -> Prediction:
    """Merge instance rankings into a document prediction.

    Round r: every instance votes for its highest-ranked label not yet
    selected; the most frequent label wins, ties broken by higher mean vote
    score, then ascending label id. Stops after ``max_ranks`` rounds or when
    no votes remain. Order-invariant over the group's instances.
    """
    if not group.instance_ids:
        raise ValidationError(f"document group {group.doc_id!r} has no instances")
    missing = [i for i in group.instance_ids if i not in tops_by_id]
    if missing:
        raise ValidationError(f"group {group.doc_id!r} has unscored instances: {missing[:3]}")

    members = [tops_by_id[i] for i in group.instance_ids]
    selected: list[int] = []
    supports: list[int] = []
    mean_scores: list[float] = []
    chosen: set[int] = set()

    for _ in range(max_ranks):
        votes: dict[int, list[float]] = {}
        for top in members:
            for label_id in top.ranking:
                if label_id not in chosen:
                    votes.setdefault(label_id, []).append(top.score_of(label_id))
                    break
        if not votes:
            break
        # Sum each label's votes in sorted order so the mean (used both for
        # tie-breaking and reporting) is exactly invariant to instance order.
        ordered_votes = {k: sorted(v) for k, v in votes.items()}
        ranked = sorted(
            ordered_votes.items(),
            key=lambda kv: (-len(kv[1]), -(sum(kv[1]) / len(kv[1])), kv[0]),
        )
        label_id, scores = ranked[0]
        selected.append(label_id)
        chosen.add(label_id)
        supports.append(len(scores))
        mean_scores.append(sum(scores) / len(scores))

    return Prediction(doc_id=group.doc_id, labels=selected, scores=mean_scores, supports=supports)


def classify_corpus(
    docs: Sequence[Document],
    space: LabelSpace,
    gateway: Gateway,
    chunk_size: int,
    max_ranks: int = DEFAULT_MAX_RANKS,
    template: str = DEFAULT_ENTAIL_TEMPLATE,
    keyphrase_set: KeyphraseSet | None = None,
) -> ClassificationResult:
    """Score and aggregate every document against the live label space."""
    labels = space.scorable_labels()
    if not labels:
        raise ValidationError("label space has no active or frozen labels")
    if not docs:
        raise ValidationError("no documents to classify")

    instances = build_instances(docs, chunk_size, keyphrase_set)
    kinds = {inst.id: inst.kind for inst in instances}
    matrix = score_all(instances, labels, gateway, template)
    tops = top_rank(matrix, kinds)
    tops_by_id = {t.instance_id: t for t in tops}

    by_doc: dict[str, list[str]] = {}
    for inst in instances:
        by_doc.setdefault(inst.doc_id, []).append(inst.id)

    predictions = []
    groups = []
    for doc in docs:
        group = DocumentGroup(doc_id=doc.id, instance_ids=tuple(by_doc[doc.id]))
        groups.append(group)
        predictions.append(aggregate(group, tops_by_id, max_ranks))

    return ClassificationResult(
        predictions=predictions,
        tops=tops,
        groups=groups,
        label_ids=[l.id for l in labels],
        label_names={l.id: l.name for l in labels},
    )


def write_predictions(
    result: ClassificationResult, path: str | Path
) -> None:
    """One JSON record per document, ordered by doc id."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for pred in sorted(result.predictions, key=lambda p: p.doc_id):
            rec = {
                "doc_id": pred.doc_id,
                "labels": [result.label_names[i] for i in pred.labels],
                "scores": [round(s, 12) for s in pred.scores],
                "supports": pred.supports,
            }
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def read_predictions(path: str | Path) -> list[dict]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
