"""Open-world multi-label label-space discovery and zero-shot classification.

The pipeline discovers a label space from an unlabeled corpus by prompting a
language model for keyphrases, clustering their embeddings, and synthesizing
one label per cluster; it then classifies documents by zero-shot entailment
and iteratively refines the space to recover long-tail labels.
"""

__version__ = "0.1.0"

from openlabels.corpus import Corpus, Document, Chunk, ingest, chunk_document, sample_subset
from openlabels.labelspace import Label, LabelSpace, BorderlinePair

__all__ = [
    "__version__",
    "Corpus",
    "Document",
    "Chunk",
    "ingest",
    "chunk_document",
    "sample_subset",
    "Label",
    "LabelSpace",
    "BorderlinePair",
]
