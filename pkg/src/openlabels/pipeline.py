"""End-to-end run orchestration.

A run lives in one working directory: every stage reads and writes named
artifact files there, and a manifest records which stages completed, under
which config, with which artifact digests. Re-running skips stages whose
artifacts are intact and whose config digest matches, so interrupted runs
resume instead of recomputing.

The manifest uses a logical clock (a counter bumped per completed stage)
instead of wall-clock timestamps so that two runs of the same config produce
byte-identical artifacts, manifest included.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from openlabels.classifier import (
    DEFAULT_ENTAIL_TEMPLATE,
    DEFAULT_MAX_RANKS,
    classify_corpus,
    read_predictions,
    write_predictions,
)
from openlabels.cluster import (
    assign,
    choose_K,
    embed_keyphrases,
    fit_gmm,
    nearest_members,
    reduce,
)
from openlabels.corpus import (
    Corpus,
    DEFAULT_CHUNK_SIZE,
    chunk_corpus,
    ingest,
    sample_subset,
)
from openlabels.errors import ConfigError, EmptyClusterError, ValidationError
from openlabels.evaluation import coverage_of, evaluate_run, write_report
from openlabels.gateway import Gateway, ROLES
from openlabels.gateway.cache import ResponseCache, canonical_payload
from openlabels.gateway.http import (
    HttpEmbeddingBackend,
    HttpEntailmentBackend,
    HttpGenerationBackend,
)
from openlabels.keyphrase import (
    KeyphraseSet,
    ObjectiveDescription,
    build_keyphrase_set,
    probe_dominance,
)
from openlabels.labelspace import LabelSpace, deduplicate, synthesize_label
from openlabels.refine import RefineConfig, run_refinement, write_iteration_records
from openlabels.synthetic import generate_planted_corpus

log = logging.getLogger(__name__)

DEFAULT_OBJECTIVE = (
    "Identify the topics this document collection is about, at both a broad "
    "and a specific level."
)

STAGES = ("discover", "refine", "classify", "evaluate", "probe")

_HTTP_KINDS = ("generate", "embed", "entail")


@dataclass
class HttpRoleSettings:
    """How one gateway role reaches a live endpoint."""

    kind: str
    base_url: str
    model: str = ""
    auth_env: str = ""
    timeout: float = 60.0

    def validate(self, role: str) -> None:
        if self.kind not in _HTTP_KINDS:
            raise ConfigError(
                f"role {role!r}: kind must be one of {_HTTP_KINDS}, got {self.kind!r}"
            )
        if not self.base_url:
            raise ConfigError(f"role {role!r}: base_url is required")


@dataclass
class RunConfig:
    """Everything one pipeline run depends on, JSON-serializable."""

    data_path: str
    workdir: str
    seed: int = 7
    chunk_size: int = DEFAULT_CHUNK_SIZE
    discovery_docs: int = 500
    target_dim: int = 10
    reducer: str = "pca"
    external_reduction: str | None = None
    k_hint: int | None = None
    max_ranks: int = DEFAULT_MAX_RANKS
    entail_template: str = DEFAULT_ENTAIL_TEMPLATE
    objective: str = DEFAULT_OBJECTIVE
    backend: str = "mock"
    mock_seed: int = 0
    deterministic: bool = True
    max_in_flight: int = 1
    auto_judge: bool = True
    judge_mode: str = "llm"
    eval_ks: tuple[int, ...] = (1, 3)
    probe_sample: int = 50
    refine: RefineConfig = field(default_factory=RefineConfig)
    http_roles: dict[str, HttpRoleSettings] = field(default_factory=dict)

    def validate(self) -> None:
        if self.backend not in ("mock", "http"):
            raise ConfigError(f"backend must be 'mock' or 'http', got {self.backend!r}")
        if self.chunk_size < 1:
            raise ConfigError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if self.discovery_docs < 1:
            raise ConfigError(f"discovery_docs must be >= 1, got {self.discovery_docs}")
        if self.max_ranks < 1:
            raise ConfigError(f"max_ranks must be >= 1, got {self.max_ranks}")
        if "{label}" not in self.entail_template:
            raise ConfigError("entail_template must contain a {label} placeholder")
        if any(k < 1 for k in self.eval_ks):
            raise ConfigError(f"eval_ks must all be >= 1, got {self.eval_ks}")
        self.refine.validate()
        if self.backend == "http":
            missing = [r for r in ROLES if r not in self.http_roles]
            if missing:
                raise ConfigError(f"http backend needs settings for roles: {missing}")
            for role, settings in self.http_roles.items():
                settings.validate(role)

    def to_dict(self) -> dict:
        raw = asdict(self)
        raw["eval_ks"] = list(self.eval_ks)
        return raw

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = dict(raw)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        if "refine" in raw and isinstance(raw["refine"], dict):
            raw["refine"] = RefineConfig(**raw["refine"])
        if "http_roles" in raw:
            raw["http_roles"] = {
                role: HttpRoleSettings(**settings) if isinstance(settings, dict) else settings
                for role, settings in raw["http_roles"].items()
            }
        if "eval_ks" in raw:
            raw["eval_ks"] = tuple(raw["eval_ks"])
        try:
            config = cls(**raw)
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from exc
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(raw)

    def digest(self) -> str:
        canonical = canonical_payload("config", self.to_dict())
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class RunPaths:
    """Artifact layout inside a run's working directory."""

    workdir: Path

    def __post_init__(self) -> None:
        self.workdir = Path(self.workdir)

    @property
    def cache_dir(self) -> Path:
        return self.workdir / "cache"

    @property
    def manifest(self) -> Path:
        return self.workdir / "manifest.json"

    @property
    def keyphrases(self) -> Path:
        return self.workdir / "keyphrases.json"

    @property
    def clusters(self) -> Path:
        return self.workdir / "clusters.json"

    @property
    def labelspace(self) -> Path:
        return self.workdir / "labelspace.json"

    @property
    def refine_records(self) -> Path:
        return self.workdir / "refine_records.jsonl"

    @property
    def predictions(self) -> Path:
        return self.workdir / "predictions.jsonl"

    @property
    def evaluation(self) -> Path:
        return self.workdir / "evaluation.json"

    @property
    def dominance(self) -> Path:
        return self.workdir / "dominance.json"

    def ensure(self) -> None:
        self.workdir.mkdir(parents=True, exist_ok=True)


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class RunManifest:
    """Stage ledger with a logical clock; serialized with sorted keys."""

    def __init__(self, config_digest: str, clock: int = 0,
                 stages: dict[str, dict] | None = None):
        self.config_digest = config_digest
        self.clock = clock
        self.stages = stages or {}

    def mark(self, stage: str, artifacts: dict[str, Path]) -> None:
        self.clock += 1
        self.stages[stage] = {
            "completed_at": self.clock,
            "artifacts": {name: _file_digest(p) for name, p in sorted(artifacts.items())},
        }

    def is_current(self, stage: str, artifacts: dict[str, Path]) -> bool:
        entry = self.stages.get(stage)
        if entry is None:
            return False
        recorded = entry.get("artifacts", {})
        if set(recorded) != set(artifacts):
            return False
        for name, path in artifacts.items():
            if not path.exists():
                return False
            digest = _file_digest(path)
            if digest == recorded[name]:
                continue
            # A later stage may legitimately rewrite a file this stage
            # produced (refinement updates the label space discovery wrote);
            # that supersession does not make this stage's work stale.
            if digest not in self._later_digests(stage, name):
                return False
        return True

    def _later_digests(self, stage: str, name: str) -> set[str]:
        after = self.stages[stage]["completed_at"]
        return {
            entry["artifacts"][name]
            for other, entry in self.stages.items()
            if other != stage
            and entry["completed_at"] > after
            and name in entry.get("artifacts", {})
        }

    def invalidate(self, stage: str) -> None:
        self.stages.pop(stage, None)

    def to_dict(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "clock": self.clock,
            "stages": self.stages,
        }

    def save(self, path: Path) -> None:
        path.write_text(
            json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: Path, config_digest: str) -> "RunManifest":
        """Load if present and matching the config; otherwise start fresh."""
        if not path.exists():
            return cls(config_digest)
        raw = json.loads(path.read_text(encoding="utf-8"))
        if raw.get("config_digest") != config_digest:
            log.info("config changed; previous run artifacts will be recomputed")
            return cls(config_digest)
        return cls(config_digest, clock=raw.get("clock", 0), stages=raw.get("stages", {}))


def build_gateway(config: RunConfig, paths: RunPaths) -> Gateway:
    if config.backend == "mock":
        return Gateway.mock(
            paths.cache_dir,
            seed=config.mock_seed,
            deterministic=config.deterministic,
            max_in_flight=config.max_in_flight,
        )
    backends = {}
    for role, settings in config.http_roles.items():
        if settings.kind == "generate":
            backends[role] = HttpGenerationBackend(
                settings.base_url, settings.model,
                auth_env=settings.auth_env, timeout=settings.timeout,
            )
        elif settings.kind == "embed":
            backends[role] = HttpEmbeddingBackend(
                settings.base_url, settings.model,
                auth_env=settings.auth_env, timeout=settings.timeout,
            )
        else:
            backends[role] = HttpEntailmentBackend(
                settings.base_url, auth_env=settings.auth_env, timeout=settings.timeout,
            )
    return Gateway(
        backends=backends,
        cache=ResponseCache(paths.cache_dir),
        deterministic=config.deterministic,
        max_in_flight=config.max_in_flight,
    )


def load_corpus(config: RunConfig) -> Corpus:
    return ingest(config.data_path)


# -- stages ----------------------------------------------------------------


def stage_discover(config: RunConfig, gateway: Gateway, corpus: Corpus,
                   paths: RunPaths) -> LabelSpace:
    """Subset -> chunk -> keyphrases -> cluster -> synthesize -> dedup."""
    subset = sample_subset(corpus, config.seed, min(config.discovery_docs, len(corpus.docs)))
    # The sample decides membership; processing in sorted-id order keeps
    # downstream artifacts independent of the shuffle's internal order.
    docs = [corpus.get(doc_id) for doc_id in sorted(subset.ids)]
    chunks = chunk_corpus(docs, config.chunk_size)
    chunk_text = {(c.doc_id, c.index): c.text for c in chunks}

    objective = ObjectiveDescription(config.objective)
    kset = build_keyphrase_set(chunks, objective, gateway, subset_ids=tuple(sorted(subset.ids)))
    kset.save(paths.keyphrases)

    X = embed_keyphrases(kset, gateway)
    target_dim = min(config.target_dim, X.shape[1], X.shape[0])
    Z = reduce(X, target_dim=target_dim, reducer=config.reducer,
               external_path=config.external_reduction)
    K = choose_K(kset.unique_count(), config.k_hint)
    model = fit_gmm(Z.values, K, seed=config.seed)
    asn = assign(model, Z.values)

    space = LabelSpace()
    cluster_labels: dict[int, int | None] = {}
    for cluster_id in range(K):
        try:
            rows = nearest_members(asn, Z.values, cluster_id, m=3)
        except EmptyClusterError:
            log.warning("cluster %d is empty; no label synthesized", cluster_id)
            cluster_labels[cluster_id] = None
            continue
        exemplars: list[str] = []
        evidence: list[str] = []
        for row in rows:
            source = kset.entries[row].source
            text = chunk_text[source]
            if text not in exemplars:
                exemplars.append(text)
                evidence.append(f"c::{source[0]}::{source[1]}")
        label = synthesize_label(
            exemplars[:3], objective.render(), gateway, space,
            evidence=evidence[:3], extra={"cluster": cluster_id},
        )
        cluster_labels[cluster_id] = label.id if label else None

    deduplicate(space, gateway, auto_judge=config.auto_judge)
    space.save(paths.labelspace)

    diag = {
        "K": K,
        "seed": config.seed,
        "reducer": Z.reducer,
        "target_dim": int(Z.r),
        "log_likelihood": model.log_likelihood,
        "n_iter": model.n_iter,
        "cluster_sizes": [len(m) for m in asn.members],
        "cluster_labels": {str(k): v for k, v in cluster_labels.items()},
        "unique_keyphrases": kset.unique_count(),
        "total_keyphrases": kset.total,
    }
    paths.clusters.write_text(
        json.dumps(diag, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return space


def stage_refine(config: RunConfig, gateway: Gateway, corpus: Corpus,
                 paths: RunPaths) -> LabelSpace:
    """Refine over the same document subset the keyphrases were extracted
    from, so every low-confidence chunk has keyphrases to promote."""
    space = LabelSpace.load(paths.labelspace)
    kset = KeyphraseSet.load(paths.keyphrases)
    docs = corpus.select(kset.subset_ids) if kset.subset_ids else corpus.docs

    coverage_fn = None
    labeled = corpus.labeled()
    if labeled:
        gt_labels = sorted({l for doc in labeled for l in doc.gold_labels or ()})

        def coverage_fn(current: LabelSpace) -> float:
            names = [l.name for l in current.scorable_labels()]
            if not names:
                return 0.0
            return coverage_of(gt_labels, names, gateway, judge_mode=config.judge_mode)

    records = run_refinement(
        docs, space, kset, gateway, config.refine,
        chunk_size=config.chunk_size, max_ranks=config.max_ranks,
        template=config.entail_template, coverage_fn=coverage_fn,
    )
    space.save(paths.labelspace)
    write_iteration_records(records, paths.refine_records)
    return space


def stage_classify(config: RunConfig, gateway: Gateway, corpus: Corpus,
                   paths: RunPaths) -> None:
    space = LabelSpace.load(paths.labelspace)
    kset = KeyphraseSet.load(paths.keyphrases) if paths.keyphrases.exists() else None
    result = classify_corpus(
        corpus.docs, space, gateway, chunk_size=config.chunk_size,
        max_ranks=config.max_ranks, template=config.entail_template,
        keyphrase_set=kset,
    )
    write_predictions(result, paths.predictions)


def stage_evaluate(config: RunConfig, gateway: Gateway, corpus: Corpus,
                   paths: RunPaths) -> None:
    space = LabelSpace.load(paths.labelspace)
    predictions = read_predictions(paths.predictions)
    labeled = corpus.labeled()
    if not labeled:
        raise ValidationError("evaluation requires documents with gold labels")
    gt_labels = sorted({l for doc in labeled for l in doc.gold_labels or ()})
    pred_labels = [l.name for l in space.active_labels()]
    gold_assignments = {doc.id: list(doc.gold_labels or ()) for doc in labeled}
    report = evaluate_run(
        gt_labels, pred_labels, predictions, gold_assignments, gateway,
        ks=list(config.eval_ks), judge_mode=config.judge_mode,
    )
    write_report(report, paths.evaluation)


def stage_probe(config: RunConfig, gateway: Gateway, corpus: Corpus,
                paths: RunPaths) -> None:
    report = probe_dominance(
        corpus.labeled(), gateway, config.probe_sample, seed=config.seed
    )
    paths.dominance.write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _stage_artifacts(paths: RunPaths) -> dict[str, dict[str, Path]]:
    return {
        "discover": {
            "keyphrases": paths.keyphrases,
            "labelspace": paths.labelspace,
            "clusters": paths.clusters,
        },
        "refine": {
            "labelspace": paths.labelspace,
            "refine_records": paths.refine_records,
        },
        "classify": {"predictions": paths.predictions},
        "evaluate": {"evaluation": paths.evaluation},
        "probe": {"dominance": paths.dominance},
    }


_STAGE_FNS = {
    "discover": stage_discover,
    "refine": stage_refine,
    "classify": stage_classify,
    "evaluate": stage_evaluate,
    "probe": stage_probe,
}


def run_stages(config: RunConfig, stages: list[str], force: bool = False,
               gateway: Gateway | None = None) -> RunManifest:
    """Run the named stages in pipeline order, skipping up-to-date ones.

    A skipped stage's artifacts must exist with the digests the manifest
    recorded under the same config digest; anything else reruns the stage.
    """
    config.validate()
    for stage in stages:
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}; valid: {STAGES}")
    paths = RunPaths(Path(config.workdir))
    paths.ensure()
    manifest = RunManifest.load(paths.manifest, config.digest())
    gateway = gateway or build_gateway(config, paths)
    corpus = load_corpus(config)
    artifacts = _stage_artifacts(paths)

    ordered = [s for s in STAGES if s in stages]
    for stage in ordered:
        if not force and manifest.is_current(stage, artifacts[stage]):
            log.info("stage %s is current; skipping", stage)
            continue
        log.info("running stage %s", stage)
        _STAGE_FNS[stage](config, gateway, corpus, paths)
        manifest.mark(stage, artifacts[stage])
        manifest.save(paths.manifest)
    return manifest


def run_all(config: RunConfig, force: bool = False,
            gateway: Gateway | None = None) -> RunManifest:
    """discover -> refine -> classify -> evaluate."""
    return run_stages(
        config, ["discover", "refine", "classify", "evaluate"],
        force=force, gateway=gateway,
    )


def make_synthetic_run(workdir: str | Path, **config_overrides) -> RunConfig:
    """Write the planted corpus into workdir and return a ready config."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    planted = generate_planted_corpus()
    data_path = workdir / "corpus.jsonl"
    planted.write(data_path)
    # target_dim 9 projects onto the head-label directions, which keeps the
    # long-tail groups from seeding their own clusters; subset_size 160 is
    # wide enough that every long-tail chunk is low-confidence in iteration 0.
    base = RunConfig(
        data_path=str(data_path),
        workdir=str(workdir),
        target_dim=9,
        discovery_docs=200,
        refine=RefineConfig(subset_size=160, iterations=4),
        probe_sample=40,
    )
    if config_overrides:
        base = replace(base, **config_overrides)
    base.validate()
    return base
