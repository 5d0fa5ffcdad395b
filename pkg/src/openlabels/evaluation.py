"""Coverage and precision evaluation against gold labels.

Coverage treats label spaces as the two sides of a bipartite graph: an edge
means the predicted label semantically covers the gold one, established
either by embedding similarity at or above the high threshold, or by a
yes answer from the judge inside the borderline band. Coverage is the size
of the maximum matching divided by the number of gold labels.

Precision@k reuses the same pair machinery per document in "covered" mode,
or plain string intersection in "exact" mode.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from openlabels.errors import ConfigError, GatewayError, ValidationError
from openlabels.gateway import Gateway
from openlabels.keyphrase import normalize_phrase
from openlabels.labelspace import HIGH_SIMILARITY, LOW_SIMILARITY, ask_judge
from openlabels.prompting import PromptTemplate
from openlabels.vecmath import cosine

log = logging.getLogger(__name__)

JUDGE_MODES = ("llm", "off")
MATCH_MODES = ("exact", "covered")


@dataclass
class CoverageGraph:
    gt_labels: list[str]
    pred_labels: list[str]
    edges: list[tuple[int, int, str]]  # (gt index, pred index, source)
    judge_calls: int = 0

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in self.gt_labels]
        for i, j, _ in self.edges:
            adj[i].append(j)
        for row in adj:
            row.sort()
        return adj


@dataclass
class MatchingResult:
    pairs: list[tuple[int, int]]
    coverage: float
    unmatched_gt: list[int]


class PairCoverage:
    """Decides whether one predicted label covers one gold label, memoized."""

    def __init__(
        self,
        gateway: Gateway,
        judge_mode: str = "llm",
        high_threshold: float = HIGH_SIMILARITY,
        low_threshold: float = LOW_SIMILARITY,
        judge_template: PromptTemplate | None = None,
    ):
        if judge_mode not in JUDGE_MODES:
            raise ConfigError(f"judge_mode must be one of {JUDGE_MODES}, got {judge_mode!r}")
        self.gateway = gateway
        self.judge_mode = judge_mode
        self.high = high_threshold
        self.low = low_threshold
        self.judge_template = judge_template
        self.judge_calls = 0
        self._memo: dict[tuple[str, str], tuple[bool, str]] = {}

    def similarity(self, gt: str, pred: str) -> float:
        ga = self.gateway.embed_one(gt, role="eval_similarity")
        pb = self.gateway.embed_one(pred, role="eval_similarity")
        return cosine(ga, pb)

    def covers(self, gt: str, pred: str) -> tuple[bool, str]:
        """Returns (covered, source) where source is 'threshold', 'judge', or 'none'."""
        key = (normalize_phrase(gt), normalize_phrase(pred))
        if key in self._memo:
            return self._memo[key]
        sim = self.similarity(gt, pred)
        if sim >= self.high:
            out = (True, "threshold")
        elif sim >= self.low and self.judge_mode == "llm":
            try:
                self.judge_calls += 1
                opinion = ask_judge(self.gateway, gt, pred, self.judge_template)
            except GatewayError as exc:
                log.warning("judge call failed for (%r, %r): %s; treating as non-edge",
                            gt, pred, exc)
                opinion = None
            if opinion is None:
                log.warning("judge gave no parseable answer for (%r, %r)", gt, pred)
            out = (opinion == "yes", "judge" if opinion == "yes" else "none")
        else:
            out = (False, "none")
        self._memo[key] = out
        return out


def build_coverage_graph(
    gt_labels: list[str],
    pred_labels: list[str],
    gateway: Gateway,
    judge_mode: str = "llm",
    high_threshold: float = HIGH_SIMILARITY,
    low_threshold: float = LOW_SIMILARITY,
) -> CoverageGraph:
    if not gt_labels:
        raise ValidationError("coverage needs a non-empty gold label list")
    if not pred_labels:
        raise ValidationError("coverage needs a non-empty predicted label list")
    pair = PairCoverage(gateway, judge_mode, high_threshold, low_threshold)
    edges: list[tuple[int, int, str]] = []
    for i, gt in enumerate(gt_labels):
        for j, pred in enumerate(pred_labels):
            covered, source = pair.covers(gt, pred)
            if covered:
                edges.append((i, j, source))
    return CoverageGraph(
        gt_labels=list(gt_labels),
        pred_labels=list(pred_labels),
        edges=edges,
        judge_calls=pair.judge_calls,
    )


def _max_matching_size(adj: list[list[int]], banned_gt: set[int], banned_pred: set[int]) -> int:
    """Kuhn's augmenting-path matching over the non-banned subgraph."""
    match_of_pred: dict[int, int] = {}

    def try_augment(u: int, visited: set[int]) -> bool:
        for v in adj[u]:
            if v in banned_pred or v in visited:
                continue
            visited.add(v)
            if v not in match_of_pred or try_augment(match_of_pred[v], visited):
                match_of_pred[v] = u
                return True
        return False

    size = 0
    for u in range(len(adj)):
        if u in banned_gt:
            continue
        if try_augment(u, set()):
            size += 1
    return size


def max_matching(graph: CoverageGraph) -> MatchingResult:
    """Maximum-cardinality matching, deterministically tie-broken.

    Among all maximum matchings this returns the lexicographically smallest
    pair list ordered by (gt index, pred index), fixed greedily one gold
    label at a time.
    """
    adj = graph.adjacency()
    n = len(graph.gt_labels)
    target = _max_matching_size(adj, set(), set())

    pairs: list[tuple[int, int]] = []
    banned_gt: set[int] = set()
    banned_pred: set[int] = set()
    fixed = 0
    for u in range(n):
        banned_gt.add(u)
        for v in adj[u]:
            if v in banned_pred:
                continue
            banned_pred.add(v)
            rest = _max_matching_size(adj, banned_gt, banned_pred)
            if fixed + 1 + rest == target:
                pairs.append((u, v))
                fixed += 1
                break
            banned_pred.discard(v)

    matched_gt = {u for u, _ in pairs}
    return MatchingResult(
        pairs=pairs,
        coverage=len(pairs) / n,
        unmatched_gt=[u for u in range(n) if u not in matched_gt],
    )


def coverage_of(
    gt_labels: list[str],
    pred_labels: list[str],
    gateway: Gateway,
    judge_mode: str = "llm",
) -> float:
    graph = build_coverage_graph(gt_labels, pred_labels, gateway, judge_mode)
    return max_matching(graph).coverage


@dataclass
class PrecisionReport:
    k: int
    match_mode: str
    value: float
    per_doc: dict[str, float]
    skipped_docs: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "match_mode": self.match_mode,
            "value": self.value,
            "per_doc": dict(sorted(self.per_doc.items())),
            "skipped_docs": sorted(self.skipped_docs),
        }


def precision_at_k(
    predictions: list[dict],
    gold: dict[str, list[str]],
    k: int,
    match_mode: str = "covered",
    pair: PairCoverage | None = None,
    gateway: Gateway | None = None,
    judge_mode: str = "llm",
) -> PrecisionReport:
    """Mean per-document precision of the top-k predicted labels.

    The numerator is the exact-string intersection in "exact" mode, or the
    maximum matching between the top-k predictions and gold labels in
    "covered" mode; the denominator is min(k, gold size). Documents with
    empty gold labels are excluded with a warning but listed in the report.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if match_mode not in MATCH_MODES:
        raise ConfigError(f"match_mode must be one of {MATCH_MODES}, got {match_mode!r}")
    if match_mode == "covered":
        if pair is None:
            if gateway is None:
                raise ConfigError("covered mode needs a PairCoverage or a gateway")
            pair = PairCoverage(gateway, judge_mode)

    per_doc: dict[str, float] = {}
    skipped: list[str] = []
    for rec in predictions:
        doc_id = rec["doc_id"]
        gold_labels = [normalize_phrase(g) for g in gold.get(doc_id, [])]
        if not gold_labels:
            skipped.append(doc_id)
            continue
        top_k = [normalize_phrase(p) for p in rec["labels"][:k]]
        if match_mode == "exact":
            numerator = len(set(top_k) & set(gold_labels))
        else:
            edges: list[tuple[int, int, str]] = []
            for i, g in enumerate(gold_labels):
                for j, p in enumerate(top_k):
                    covered, source = pair.covers(g, p)  # type: ignore[union-attr]
                    if covered:
                        edges.append((i, j, source))
            graph = CoverageGraph(gt_labels=gold_labels, pred_labels=top_k, edges=edges)
            numerator = len(max_matching(graph).pairs)
        per_doc[doc_id] = numerator / min(k, len(gold_labels))

    if skipped:
        log.warning("precision@%d skipped %d documents with empty gold labels", k, len(skipped))
    value = sum(per_doc.values()) / len(per_doc) if per_doc else 0.0
    return PrecisionReport(
        k=k, match_mode=match_mode, value=value, per_doc=per_doc, skipped_docs=skipped
    )


@dataclass
class EvaluationReport:
    coverage: float
    matching: list[tuple[int, int]]
    unmatched_gt: list[str]
    precision: list[PrecisionReport]
    judge_calls: int
    cache_hits: int

    def to_dict(self) -> dict:
        return {
            "coverage": self.coverage,
            "matching": [list(p) for p in self.matching],
            "unmatched_gt": self.unmatched_gt,
            "precision": [p.to_dict() for p in self.precision],
            "judge_calls": self.judge_calls,
            "cache_hits": self.cache_hits,
        }

    def table(self) -> str:
        lines = [
            f"{'metric':<24}{'value':>10}",
            f"{'-' * 34}",
            f"{'coverage':<24}{self.coverage:>10.4f}",
        ]
        for p in self.precision:
            lines.append(f"{f'p@{p.k} ({p.match_mode})':<24}{p.value:>10.4f}")
        lines.append(f"{'judge calls':<24}{self.judge_calls:>10d}")
        return "\n".join(lines)


def evaluate_run(
    gt_labels: list[str],
    pred_labels: list[str],
    predictions: list[dict],
    gold_assignments: dict[str, list[str]],
    gateway: Gateway,
    ks: list[int],
    judge_mode: str = "llm",
    match_modes: list[str] | None = None,
) -> EvaluationReport:
    """Coverage of the predicted space plus precision@k over predictions."""
    hits_before = gateway.stats_snapshot()
    graph = build_coverage_graph(gt_labels, pred_labels, gateway, judge_mode)
    matching = max_matching(graph)
    pair = PairCoverage(gateway, judge_mode)
    reports = []
    for k in sorted(set(ks)):
        for mode in match_modes or ["exact", "covered"]:
            reports.append(
                precision_at_k(predictions, gold_assignments, k, mode, pair=pair)
            )
    hits_after = gateway.stats_snapshot()
    cache_hits = sum(v["cache_hits"] for v in hits_after.values()) - sum(
        v["cache_hits"] for v in hits_before.values()
    )
    return EvaluationReport(
        coverage=matching.coverage,
        matching=matching.pairs,
        unmatched_gt=[graph.gt_labels[i] for i in matching.unmatched_gt],
        precision=reports,
        judge_calls=graph.judge_calls + pair.judge_calls,
        cache_hits=cache_hits,
    )


def write_report(report: EvaluationReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), sort_keys=True, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
