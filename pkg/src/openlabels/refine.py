"""Iterative label-space refinement targeting long-tail labels.

Each iteration classifies the working subset, collects the lowest-confidence
chunks, derives a similarity threshold gamma from rare keyphrases, promotes
frequent-but-dissimilar keyphrases from those chunks into new labels, prunes
unsupported labels, and freezes the best-supported ones. Frozen labels still
classify but cannot be removed; everything unfreezes after the final
iteration. A failed iteration rolls the space back to its pre-iteration
version before the error propagates.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from openlabels.classifier import (
    ClassificationResult,
    DEFAULT_ENTAIL_TEMPLATE,
    DEFAULT_MAX_RANKS,
    InstanceTop,
    classify_corpus,
)
from openlabels.corpus import Document
from openlabels.errors import ConfigError, GammaUndefinedError, ValidationError
from openlabels.gateway import Gateway
from openlabels.keyphrase import KeyphraseSet, normalize_phrase
from openlabels.labelspace import LabelSpace
from openlabels.vecmath import cosine

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RefineConfig:
    subset_size: int = 500
    keyphrase_min_count: int = 15  # promotion needs frequency strictly above this
    longtail_fraction: float = 0.01  # rare-candidate cutoff as a fraction of all entries
    iterations: int = 4
    freeze_fraction: float = 0.25
    min_support: int = 1

    def validate(self) -> None:
        if self.subset_size < 0:
            raise ConfigError(f"subset_size must be >= 0, got {self.subset_size}")
        if self.keyphrase_min_count < 0:
            raise ConfigError(f"keyphrase_min_count must be >= 0, got {self.keyphrase_min_count}")
        if not 0.0 < self.longtail_fraction <= 1.0:
            raise ConfigError(
                f"longtail_fraction must be in (0, 1], got {self.longtail_fraction}"
            )
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if not 0.0 <= self.freeze_fraction <= 1.0:
            raise ConfigError(f"freeze_fraction must be in [0, 1], got {self.freeze_fraction}")
        if self.min_support < 0:
            raise ConfigError(f"min_support must be >= 0, got {self.min_support}")


@dataclass(frozen=True)
class GammaThreshold:
    """Median of rare keyphrases' max similarity to live labels.

    ``list_digest`` fingerprints the sorted similarity list so the derivation
    can be audited later without storing every float in the manifest.
    """

    value: float
    candidate_count: int
    list_digest: str


@dataclass
class IterationRecord:
    index: int
    gamma: float | None
    promoted: list[int] = field(default_factory=list)
    removed: list[int] = field(default_factory=list)
    frozen: list[int] = field(default_factory=list)
    coverage: float | None = None
    resulting_version: int = 0

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "gamma": self.gamma,
            "promoted": self.promoted,
            "removed": self.removed,
            "frozen": self.frozen,
            "coverage": self.coverage,
            "resulting_version": self.resulting_version,
        }


def select_low_confidence(tops: Sequence[InstanceTop], subset_size: int) -> list[InstanceTop]:
    """Chunks with the smallest top score; ties break by instance id.

    A subset_size of 0 selects nothing; an oversized request clamps with a
    warning rather than failing.
    """
    chunk_tops = [t for t in tops if t.kind == "chunk"]
    if subset_size == 0:
        log.warning("select_low_confidence called with subset_size=0; selecting nothing")
        return []
    if subset_size > len(chunk_tops):
        log.warning(
            "subset_size %d exceeds available chunks %d; clamping",
            subset_size, len(chunk_tops),
        )
        subset_size = len(chunk_tops)
    ranked = sorted(chunk_tops, key=lambda t: (t.top_score, t.instance_id))
    return ranked[:subset_size]


def _lower_median(values: list[float]) -> float:
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def compute_gamma(
    kset: KeyphraseSet,
    space: LabelSpace,
    gateway: Gateway,
    longtail_fraction: float = 0.01,
) -> GammaThreshold:
    """Promotion threshold from the rare end of the keyphrase distribution.

    Candidates are distinct keyphrases occurring fewer than
    ``longtail_fraction * total_entries`` times. Gamma is the lower median of
    each candidate's maximum cosine similarity to any live label name.
    """
    labels = space.scorable_labels()
    if not labels:
        raise ValidationError("gamma needs at least one live label")
    freq = kset.frequency
    cutoff = longtail_fraction * kset.total
    candidates = sorted(text for text, count in freq.items() if count < cutoff)
    if not candidates:
        raise GammaUndefinedError(
            f"no keyphrase occurs fewer than {cutoff:.2f} times; promotion skipped"
        )
    label_vecs = gateway.embed([l.name for l in labels], role="similarity")
    cand_vecs = gateway.embed(candidates, role="similarity")
    max_sims = [
        max(cosine(cv, lv) for lv in label_vecs)
        for cv in cand_vecs
    ]
    digest = hashlib.sha256(
        json.dumps(sorted(max_sims), separators=(",", ":")).encode("utf-8")
    ).hexdigest()
    return GammaThreshold(
        value=_lower_median(max_sims),
        candidate_count=len(candidates),
        list_digest=digest,
    )


def promote_keyphrases(
    low_confidence: Sequence[InstanceTop],
    kset: KeyphraseSet,
    space: LabelSpace,
    gamma: GammaThreshold,
    gateway: Gateway,
    min_count: int = 15,
) -> list[int]:
    """Turn qualifying keyphrases from low-confidence chunks into labels.

    Gates, all required: corpus frequency strictly above ``min_count``; max
    similarity to every live label strictly below gamma; not already a live
    label. Candidates are tried in descending frequency order and each
    promotion immediately joins the live set, so a later candidate can be
    blocked by an earlier promotion. The gate values are recorded on the
    mutation for auditability.
    """
    source_chunks = set()
    for top in low_confidence:
        # Chunk instance ids look like c::<doc>::<index>.
        parts = top.instance_id.split("::")
        if len(parts) == 3 and parts[0] == "c":
            source_chunks.add((parts[1], int(parts[2])))

    freq = kset.frequency
    candidates: dict[str, int] = {}
    for entry in kset.entries:
        if entry.source in source_chunks:
            if entry.text not in candidates:
                candidates[entry.text] = freq[entry.text]

    promoted: list[int] = []
    for text in sorted(candidates, key=lambda t: (-candidates[t], t)):
        if candidates[text] <= min_count:
            continue
        live = space.scorable_labels()
        if space.find_live_by_name(text) is not None:
            continue
        vec = gateway.embed_one(text, role="similarity")
        max_sim = max(
            cosine(vec, gateway.embed_one(l.name, role="similarity")) for l in live
        )
        if max_sim >= gamma.value:
            continue
        label = space.add_label(
            text,
            provenance="refine-promotion",
            evidence=[text],
            extra={
                "frequency": candidates[text],
                "max_similarity": max_sim,
                "gamma": gamma.value,
            },
        )
        promoted.append(label.id)
    return promoted


def prune_and_freeze(
    space: LabelSpace,
    tops: Sequence[InstanceTop],
    freeze_fraction: float = 0.25,
    min_support: int = 1,
) -> tuple[list[int], list[int]]:
    """Remove unsupported unfrozen labels, then freeze the best-supported.

    Support is the number of instances whose top-ranked label is that label;
    it is only defined for labels that were part of the scoring run, so labels
    added after ``tops`` was computed (this iteration's promotions) are exempt
    until they have been classified once. If pruning would remove every live
    label the removal pass is skipped with a warning. The freeze count is
    floor(live_count * freeze_fraction) after pruning; ties order by support
    then ascending id. Frozen labels are untouchable by pruning.
    """
    support: Counter[int] = Counter(t.top_label for t in tops)
    scored: set[int] = set()
    for t in tops:
        scored.update(t.ranking)
    live = space.scorable_labels()
    doomed = [
        l for l in live
        if l.status == "active" and l.id in scored and support[l.id] < min_support
    ]

    removed: list[int] = []
    if doomed and len(doomed) == len(live):
        log.warning("pruning would empty the label space; skipping removal this iteration")
    else:
        for label in doomed:
            space.remove_label(label.id, reason="prune", extra={"support": support[label.id]})
            removed.append(label.id)

    remaining = [l for l in space.scorable_labels() if l.id in scored]
    n_freeze = int(len(remaining) * freeze_fraction)
    frozen: list[int] = []
    if n_freeze > 0:
        ranked = sorted(remaining, key=lambda l: (-support[l.id], l.id))
        frozen = [l.id for l in ranked[:n_freeze]]
        space.freeze(frozen)
    return removed, frozen


def run_refinement(
    docs: Sequence[Document],
    space: LabelSpace,
    kset: KeyphraseSet,
    gateway: Gateway,
    config: RefineConfig,
    chunk_size: int,
    max_ranks: int = DEFAULT_MAX_RANKS,
    template: str = DEFAULT_ENTAIL_TEMPLATE,
    coverage_fn: Callable[[LabelSpace], float] | None = None,
) -> list[IterationRecord]:
    """Run the refine loop in place on ``space``; returns one record per iteration.

    With iterations=0 the only effect is unfreezing. Any error inside an
    iteration rolls the space back to its pre-iteration version and re-raises.
    """
    config.validate()
    records: list[IterationRecord] = []
    for index in range(config.iterations):
        pre_version = space.version
        try:
            result = classify_corpus(
                docs, space, gateway, chunk_size=chunk_size,
                max_ranks=max_ranks, template=template, keyphrase_set=kset,
            )
            low = select_low_confidence(result.tops, config.subset_size)
            gamma: GammaThreshold | None = None
            promoted: list[int] = []
            try:
                gamma = compute_gamma(kset, space, gateway, config.longtail_fraction)
            except GammaUndefinedError as exc:
                log.info("iteration %d: %s", index, exc)
            if gamma is not None:
                promoted = promote_keyphrases(
                    low, kset, space, gamma, gateway, config.keyphrase_min_count
                )
            removed, frozen = prune_and_freeze(
                space, result.tops, config.freeze_fraction, config.min_support
            )
            record = IterationRecord(
                index=index,
                gamma=gamma.value if gamma else None,
                promoted=promoted,
                removed=removed,
                frozen=frozen,
                coverage=coverage_fn(space) if coverage_fn else None,
                resulting_version=space.version,
            )
            records.append(record)
        except Exception:
            space.rollback_to(pre_version)
            raise
    space.unfreeze_all()
    return records


def write_iteration_records(records: Sequence[IterationRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
