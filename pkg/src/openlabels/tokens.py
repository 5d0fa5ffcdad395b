"""Reference tokenizer shared by chunking, mock backends, and evaluation.

Tokens are maximal runs of word characters; every other non-space character
is its own token. Joining tokens with single spaces and re-tokenizing yields
the same sequence, which is what chunk round-tripping relies on.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Split text into word tokens with punctuation detached."""
    return _TOKEN_RE.findall(text)
