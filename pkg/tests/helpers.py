"""Independent oracles used to check derived values.

Everything in this module is written from the documented behavior alone, in
plain Python, without importing the production modules it is used to check,
so a defect cannot hide by living on both sides of an assertion.
"""

from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

_WORD_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


# -- reference embedding scheme, recomputed from its definition --------------

def unit_token_vector(seed: int, token: str, dim: int = 64) -> list[float]:
    """Per-token unit vector: component i is sha256(f"{seed}|tok|{token}|{i}")
    taken as a 64-bit big-endian integer mapped affinely onto [-1, 1], then
    the whole vector is L2-normalized."""
    values = []
    for i in range(dim):
        digest = hashlib.sha256(f"{seed}|tok|{token}|{i}".encode("utf-8")).digest()
        values.append(int.from_bytes(digest[:8], "big") / 2**64 * 2.0 - 1.0)
    norm = math.sqrt(sum(v * v for v in values))
    return [v / norm for v in values]


def text_embedding(seed: int, text: str, dim: int = 64) -> list[float]:
    """L2-normalized sum of the token vectors of the lowercased text."""
    tokens = _WORD_RE.findall(text.lower()) or [""]
    acc = [0.0] * dim
    for token in tokens:
        vec = unit_token_vector(seed, token, dim)
        for i in range(dim):
            acc[i] += vec[i]
    norm = math.sqrt(sum(v * v for v in acc))
    if norm > 0.0:
        acc = [v / norm for v in acc]
    return acc


def cosine(u: list[float], v: list[float]) -> float:
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return sum(a * b for a, b in zip(u, v)) / (nu * nv)


def affine_entailment(seed: int, premise: str, hypothesis: str, dim: int = 64) -> float:
    """Entailment as (1 + cos) / 2, clipped into [0, 1]."""
    score = (1.0 + cosine(text_embedding(seed, premise, dim),
                          text_embedding(seed, hypothesis, dim))) / 2.0
    return min(1.0, max(0.0, score))


# -- symmetric eigendecomposition via cyclic Jacobi rotations -----------------

def jacobi_eigh(matrix: list[list[float]],
                max_sweeps: int = 100,
                tol: float = 1e-14) -> tuple[list[float], list[list[float]]]:
    """Eigenvalues and eigenvectors of a symmetric matrix.

    Returns (eigenvalues, vectors) sorted by descending eigenvalue, with
    vectors[j] being the eigenvector for eigenvalues[j]. Pure-Python cyclic
    Jacobi: rotate away each off-diagonal entry until all are below tol.
    """
    n = len(matrix)
    a = [row[:] for row in matrix]
    v = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]

    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i][j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p][q]) <= tol:
                    continue
                app, aqq, apq = a[p][p], a[q][q], a[p][q]
                theta = (aqq - app) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                a[p][p] = app - t * apq
                a[q][q] = aqq + t * apq
                a[p][q] = a[q][p] = 0.0
                for i in range(n):
                    if i == p or i == q:
                        continue
                    aip, aiq = a[i][p], a[i][q]
                    a[i][p] = a[p][i] = c * aip - s * aiq
                    a[i][q] = a[q][i] = c * aiq + s * aip
                for i in range(n):
                    vip, viq = v[i][p], v[i][q]
                    v[i][p] = c * vip - s * viq
                    v[i][q] = c * viq + s * vip
    else:
        raise AssertionError("jacobi_eigh did not converge")

    eigenvalues = [a[i][i] for i in range(n)]
    order = sorted(range(n), key=lambda j: -eigenvalues[j])
    values = [eigenvalues[j] for j in order]
    vectors = [[v[i][j] for i in range(n)] for j in order]
    return values, vectors


def pca_reference(rows: list[list[float]], target_dim: int) -> tuple[list[list[float]], list[float]]:
    """Center, eigendecompose the (1/n)-scaled covariance with Jacobi, fix
    each eigenvector's sign so its largest-magnitude component is positive,
    and project onto the top target_dim eigenvectors."""
    n = len(rows)
    d = len(rows[0])
    mean = [sum(row[j] for row in rows) / n for j in range(d)]
    centered = [[row[j] - mean[j] for j in range(d)] for row in rows]
    cov = [[sum(centered[i][p] * centered[i][q] for i in range(n)) / n
            for q in range(d)] for p in range(d)]
    values, vectors = jacobi_eigh(cov)
    fixed = []
    for vec in vectors[:target_dim]:
        pivot = max(range(d), key=lambda i: abs(vec[i]))
        fixed.append([-x for x in vec] if vec[pivot] < 0 else list(vec))
    projection = [[sum(centered[i][j] * comp[j] for j in range(d)) for comp in fixed]
                  for i in range(n)]
    return projection, values


# -- bipartite matching oracles ----------------------------------------------

def matching_size_oracle(n_gt: int, adjacency: list[list[int]]) -> int:
    """Maximum matching cardinality by exhaustive bitmask search over the
    assignment of gold nodes to predicted nodes."""

    adj = tuple(tuple(row) for row in adjacency)

    @lru_cache(maxsize=None)
    def best(u: int, used_mask: int) -> int:
        if u == n_gt:
            return 0
        result = best(u + 1, used_mask)
        for v in adj[u]:
            bit = 1 << v
            if not used_mask & bit:
                result = max(result, 1 + best(u + 1, used_mask | bit))
        return result

    return best(0, 0)


def lexsmallest_max_matching(n_gt: int, adjacency: list[list[int]]) -> list[tuple[int, int]]:
    """Enumerate every matching, keep the maximum-cardinality ones, and return
    the lexicographically smallest pair list (pairs sorted by gold index).
    Exponential; intended for small instances only."""
    best: dict[str, object] = {"size": -1, "pairs": None}

    def explore(u: int, used: set[int], pairs: list[tuple[int, int]]) -> None:
        if u == n_gt:
            if len(pairs) > best["size"] or (
                len(pairs) == best["size"] and pairs < best["pairs"]  # type: ignore[operator]
            ):
                best["size"] = len(pairs)
                best["pairs"] = list(pairs)
            return
        explore(u + 1, used, pairs)
        for v in adjacency[u]:
            if v not in used:
                used.add(v)
                pairs.append((u, v))
                explore(u + 1, used, pairs)
                pairs.pop()
                used.remove(v)

    explore(0, set(), [])
    return list(best["pairs"])  # type: ignore[arg-type]


# -- ranked-vote aggregation oracle -------------------------------------------

def aggregate_oracle(members: list[tuple[tuple[int, ...], tuple[float, ...]]],
                     max_ranks: int) -> tuple[list[int], list[int], list[float]]:
    """Round-based plurality over instance rankings.

    Each member is (ranking of label ids, scores aligned with the ranking).
    Per round, every member votes for its highest-ranked unselected label;
    the label with the most votes wins, ties broken by higher mean score of
    the votes it received this round, then by ascending label id. Vote
    scores are summed in sorted order so the result is exactly invariant to
    member order. Returns (selected labels, vote counts, mean vote scores).
    """
    selected: list[int] = []
    supports: list[int] = []
    means: list[float] = []
    while len(selected) < max_ranks:
        ballots: list[tuple[int, float]] = []
        for ranking, scores in members:
            for label_id, score in zip(ranking, scores):
                if label_id not in selected:
                    ballots.append((label_id, score))
                    break
        if not ballots:
            break
        counts = Counter(label_id for label_id, _ in ballots)
        by_label: dict[int, list[float]] = {}
        for label_id, score in ballots:
            by_label.setdefault(label_id, []).append(score)
        for scores in by_label.values():
            scores.sort()
        winner = min(
            counts,
            key=lambda lid: (-counts[lid], -(sum(by_label[lid]) / counts[lid]), lid),
        )
        selected.append(winner)
        supports.append(counts[winner])
        means.append(sum(by_label[winner]) / counts[winner])
    return selected, supports, means


# -- clustering agreement ------------------------------------------------------

def adjusted_rand_index(a: list[int], b: list[int]) -> float:
    """Chance-corrected agreement between two partitions of the same items."""
    if len(a) != len(b):
        raise ValueError("partitions must label the same items")

    def pairs(x: int) -> int:
        return x * (x - 1) // 2

    contingency = Counter(zip(a, b))
    sum_cells = sum(pairs(c) for c in contingency.values())
    sum_rows = sum(pairs(c) for c in Counter(a).values())
    sum_cols = sum(pairs(c) for c in Counter(b).values())
    total = pairs(len(a))
    if total == 0:
        return 1.0
    expected = Fraction(sum_rows * sum_cols, total)
    max_index = Fraction(sum_rows + sum_cols, 2)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


# -- misc ---------------------------------------------------------------------

def lower_median(values: list[float]) -> float:
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def snapshot_tree(root: str | Path) -> dict[str, str]:
    """Map of relative file path -> sha256 for every file under root."""
    root = Path(root)
    out: dict[str, str] = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out
