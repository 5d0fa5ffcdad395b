"""Small vector helpers used by the mock backends and similarity checks."""

from __future__ import annotations

import math
from typing import Sequence


def dot(u: Sequence[float], v: Sequence[float]) -> float:
    if len(u) != len(v):
        raise ValueError(f"dimension mismatch: {len(u)} vs {len(v)}")
    return sum(a * b for a, b in zip(u, v))


def norm(u: Sequence[float]) -> float:
    return math.sqrt(sum(a * a for a in u))


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    nu = norm(u)
    nv = norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return dot(u, v) / (nu * nv)


def unit(u: Sequence[float]) -> list[float]:
    n = norm(u)
    if n == 0.0:
        return list(u)
    return [a / n for a in u]
