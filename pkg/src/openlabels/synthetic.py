"""Planted synthetic benchmark corpus.

Builds a corpus whose documents are token streams drawn from per-label
vocabularies, so the whole pipeline is exercisable offline with the mock
backends. The construction plants three kinds of structure:

* head labels: many documents, each chunk dominated by the label token plus
  one frequent companion, so clustering finds them immediately;
* decoy chunks: rare label+companion combinations whose keyphrases stay
  similar to an existing label but too rare to promote, which anchors the
  refinement threshold gamma high;
* long-tail labels: a single long document each, below one percent of the
  corpus, whose keyphrases are frequent enough to promote (> 15) yet
  dissimilar to every head label, so only refinement can recover them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from openlabels.corpus import Document, write_jsonl

HEAD_VOCAB: dict[str, dict[str, list[str]]] = {
    "astronomy": {"frequent": ["telescope", "nebula", "galaxies"], "rare": ["quasar", "parallax"]},
    "economics": {"frequent": ["inflation", "markets", "tariffs"], "rare": ["arbitrage", "deflation"]},
    "genetics": {"frequent": ["genome", "alleles", "heredity"], "rare": ["methylation", "plasmids"]},
    "robotics": {"frequent": ["actuators", "sensors", "gripper"], "rare": ["odometry", "servos"]},
    "linguistics": {"frequent": ["phonemes", "syntax", "morphology"], "rare": ["diphthong", "morpheme"]},
    "volcanology": {"frequent": ["magma", "calderas", "eruption"], "rare": ["lahars", "tephra"]},
    "cryptography": {"frequent": ["ciphers", "entropy", "hashing"], "rare": ["nonces", "padding"]},
    "meteorology": {"frequent": ["cyclones", "rainfall", "barometer"], "rare": ["isobars", "graupel"]},
    "immunology": {"frequent": ["antibodies", "lymphocytes", "vaccines"], "rare": ["cytokines", "antigens"]},
}

LONGTAIL_VOCAB: dict[str, str] = {
    "beekeeping": "hive",
    "falconry": "raptor",
    "origami": "folding",
}

CHUNK_TOKENS = 50


@dataclass
class PlantedCorpus:
    docs: list[Document]
    head_labels: list[str]
    longtail_labels: list[str]
    gold_by_doc: dict[str, list[str]] = field(default_factory=dict)

    @property
    def all_labels(self) -> list[str]:
        return self.head_labels + self.longtail_labels

    def write(self, path: str | Path) -> None:
        write_jsonl(self.docs, path)


def _topic_chunk(label: str, companion: str) -> list[str]:
    # 26 label tokens vs 24 companion tokens: the label is always the
    # majority token, and the dominant bigrams all contain the label.
    return [label, companion] * (CHUNK_TOKENS // 2 - 1) + [label, label]


def generate_planted_corpus(
    n_head_docs: int = 197,
    longtail_chunks: int = 17,
    decoy_chunks_per_companion: int = 4,
) -> PlantedCorpus:
    """Deterministic corpus: 197 head documents plus one long document per
    long-tail label (each under 1% of documents)."""
    heads = list(HEAD_VOCAB)
    comp_cycle = {label: 0 for label in heads}

    def next_companion(label: str) -> str:
        pool = HEAD_VOCAB[label]["frequent"]
        comp = pool[comp_cycle[label] % len(pool)]
        comp_cycle[label] += 1
        return comp

    doc_tokens: dict[str, list[str]] = {}
    gold: dict[str, list[str]] = {}
    docs_by_label: dict[str, list[str]] = {label: [] for label in heads}

    for i in range(n_head_docs):
        doc_id = f"doc{i:04d}"
        if i % 2 == 0:
            labels = [heads[i % len(heads)]]
            chunk_labels = [labels[0], labels[0]]
        else:
            labels = sorted({heads[i % len(heads)], heads[(i + 3) % len(heads)]})
            chunk_labels = labels if len(labels) == 2 else [labels[0], labels[0]]
        tokens: list[str] = []
        for chunk_label in chunk_labels:
            tokens.extend(_topic_chunk(chunk_label, next_companion(chunk_label)))
        doc_tokens[doc_id] = tokens
        gold[doc_id] = labels
        for label in labels:
            docs_by_label[label].append(doc_id)

    # Decoy chunks: rare companions appended to a few documents per label.
    for label in heads:
        for rare in HEAD_VOCAB[label]["rare"]:
            hosts = docs_by_label[label][:decoy_chunks_per_companion]
            for doc_id in hosts:
                doc_tokens[doc_id].extend(_topic_chunk(label, rare))

    docs: list[Document] = []
    for doc_id in sorted(doc_tokens):
        docs.append(
            Document(
                id=doc_id,
                text=" ".join(doc_tokens[doc_id]),
                gold_labels=tuple(gold[doc_id]),
            )
        )

    longtails = list(LONGTAIL_VOCAB)
    for offset, label in enumerate(longtails):
        doc_id = f"doc{n_head_docs + offset:04d}"
        tokens = []
        for _ in range(longtail_chunks):
            tokens.extend(_topic_chunk(label, LONGTAIL_VOCAB[label]))
        docs.append(Document(id=doc_id, text=" ".join(tokens), gold_labels=(label,)))
        gold[doc_id] = [label]

    return PlantedCorpus(
        docs=docs,
        head_labels=heads,
        longtail_labels=longtails,
        gold_by_doc=gold,
    )
