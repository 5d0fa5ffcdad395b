"""Dimensionality reduction and Gaussian-mixture clustering of keyphrases.

Reduction defaults to PCA on the centered data; an identity pass-through and
an externally computed projection (dense rows, whitespace-separated) are also
accepted. The mixture uses diagonal covariances, k-means++ seeding, and a
variance floor of 1e-6; the per-iteration log-likelihood trace is kept on the
fitted model so monotonicity is checkable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from openlabels.errors import (
    ConfigError,
    DegenerateInputError,
    EmptyClusterError,
    ShapeError,
    ValidationError,
)
from openlabels.gateway import Gateway
from openlabels.keyphrase import KeyphraseSet

VARIANCE_FLOOR = 1e-6
K_MIN = 5
K_MAX = 300


def embed_keyphrases(kset: KeyphraseSet, gateway: Gateway, role: str = "embedding") -> np.ndarray:
    """One row per keyphrase entry, in KeyphraseSet iteration order."""
    if not kset.entries:
        raise ValidationError("cannot embed an empty keyphrase set")
    vectors = gateway.embed([k.text for k in kset.entries], role=role)
    X = np.asarray(vectors, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValidationError("embedding matrix contains non-finite values")
    return X


@dataclass
class ReducedMatrix:
    values: np.ndarray
    reducer: str
    eigenvalues: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def r(self) -> int:
        return self.values.shape[1]


def _pca(X: np.ndarray, target_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Project onto the top eigenvectors of the covariance (1/n scaling).

    Column j of the output corresponds to the j-th largest eigenvalue, so
    explained variance is descending. Eigenvector signs are fixed by making
    each vector's largest-magnitude component positive.
    """
    n = X.shape[0]
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    if eigvals[0] <= 1e-12:
        raise DegenerateInputError("input has zero variance in every direction")
    for j in range(eigvecs.shape[1]):
        pivot = np.argmax(np.abs(eigvecs[:, j]))
        if eigvecs[pivot, j] < 0:
            eigvecs[:, j] = -eigvecs[:, j]
    components = eigvecs[:, :target_dim]
    return Xc @ components, eigvals


def load_external_reduction(path: str | Path, expected_rows: int) -> np.ndarray:
    """Dense rows of whitespace-separated reals; row count must match."""
    rows: list[list[float]] = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            rows.append([float(v) for v in line.split()])
        except ValueError as exc:
            raise ValidationError(f"{path}: line {line_no}: non-numeric value") from exc
    if not rows:
        raise ValidationError(f"{path}: empty projection file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ShapeError(f"{path}: ragged rows in projection file")
    if len(rows) != expected_rows:
        raise ShapeError(
            f"{path}: projection has {len(rows)} rows, embedding matrix has {expected_rows}"
        )
    return np.asarray(rows, dtype=np.float64)


def reduce(
    X: np.ndarray,
    target_dim: int = 10,
    reducer: str = "pca",
    external_path: str | Path | None = None,
) -> ReducedMatrix:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {X.shape}")
    n, d = X.shape
    if reducer == "identity":
        return ReducedMatrix(values=X.copy(), reducer="identity")
    if reducer == "external":
        if external_path is None:
            raise ConfigError("external reducer requires a projection file path")
        Z = load_external_reduction(external_path, n)
        return ReducedMatrix(values=Z, reducer="external")
    if reducer != "pca":
        raise ConfigError(f"unknown reducer {reducer!r}; expected pca, identity, or external")
    if target_dim < 1:
        raise ConfigError(f"target_dim must be >= 1, got {target_dim}")
    if target_dim > d:
        raise ConfigError(f"target_dim {target_dim} exceeds input dimension {d}")
    if n < target_dim:
        raise ConfigError(f"pca needs at least target_dim={target_dim} rows, got {n}")
    Z, eigvals = _pca(X, target_dim)
    return ReducedMatrix(values=Z, reducer="pca", eigenvalues=eigvals)


@dataclass
class MixtureModel:
    """Fitted diagonal-covariance Gaussian mixture."""

    K: int
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float
    seed: int
    n_iter: int
    ll_trace: list[float] = field(default_factory=list)


def _log_gaussian(Z: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    # log N(z | mu_k, diag(var_k)) for every (point, component) pair.
    n, r = Z.shape
    out = np.empty((n, means.shape[0]))
    for k in range(means.shape[0]):
        var = variances[k]
        diff = Z - means[k]
        out[:, k] = -0.5 * (np.sum(np.log(2.0 * math.pi * var)) + np.sum(diff**2 / var, axis=1))
    return out


def _log_responsibilities(Z, weights, means, variances) -> tuple[np.ndarray, float]:
    joint = _log_gaussian(Z, means, variances) + np.log(weights)[None, :]
    mx = joint.max(axis=1, keepdims=True)
    lse = mx[:, 0] + np.log(np.sum(np.exp(joint - mx), axis=1))
    return joint - lse[:, None], float(np.sum(lse))


def _kmeanspp_seeds(Z: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = Z.shape[0]
    centers = [int(rng.integers(n))]
    d2 = np.sum((Z - Z[centers[0]]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0.0:
            # Remaining mass is identical points; any choice is equivalent.
            centers.append(int(rng.integers(n)))
            continue
        probs = d2 / total
        pick = int(rng.choice(n, p=probs))
        centers.append(pick)
        d2 = np.minimum(d2, np.sum((Z - Z[pick]) ** 2, axis=1))
    return Z[centers].copy()


def fit_gmm(
    Z: np.ndarray,
    K: int,
    seed: int = 0,
    max_iter: int = 200,
    tol: float = 1e-6,
) -> MixtureModel:
    """EM fit. The log-likelihood trace is non-decreasing by construction."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {Z.shape}")
    n, r = Z.shape
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    if n < K:
        raise ConfigError(f"cannot fit {K} components to {n} points")
    if np.allclose(Z, Z[0], atol=1e-12) and K > 1:
        raise DegenerateInputError("all points identical; mixture fit is degenerate")

    rng = np.random.default_rng(seed)
    means = _kmeanspp_seeds(Z, K, rng)
    global_var = np.maximum(Z.var(axis=0), VARIANCE_FLOOR)
    variances = np.tile(global_var, (K, 1))
    weights = np.full(K, 1.0 / K)

    trace: list[float] = []
    n_iter = 0
    for it in range(max_iter):
        log_resp, ll = _log_responsibilities(Z, weights, means, variances)
        trace.append(ll)
        n_iter = it + 1
        if it > 0 and trace[-1] - trace[-2] < tol:
            break
        resp = np.exp(log_resp)
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        weights = nk / n
        means = (resp.T @ Z) / nk[:, None]
        for k in range(K):
            diff = Z - means[k]
            variances[k] = np.maximum((resp[:, k][:, None] * diff**2).sum(axis=0) / nk[k],
                                      VARIANCE_FLOOR)

    return MixtureModel(
        K=K,
        weights=weights,
        means=means,
        variances=variances,
        log_likelihood=trace[-1],
        seed=seed,
        n_iter=n_iter,
        ll_trace=trace,
    )


@dataclass
class ClusterAssignment:
    responsibilities: np.ndarray
    hard_labels: np.ndarray
    members: list[list[int]]
    means: np.ndarray


def assign(model: MixtureModel, Z: np.ndarray) -> ClusterAssignment:
    """Posterior responsibilities plus hard argmax (ties to the lowest index)."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != model.means.shape[1]:
        raise ShapeError(
            f"points have shape {Z.shape}, model expects dimension {model.means.shape[1]}"
        )
    log_resp, _ = _log_responsibilities(Z, model.weights, model.means, model.variances)
    resp = np.exp(log_resp)
    hard = np.argmax(resp, axis=1)
    members: list[list[int]] = [[] for _ in range(model.K)]
    for i, k in enumerate(hard):
        members[int(k)].append(i)
    return ClusterAssignment(
        responsibilities=resp, hard_labels=hard, members=members, means=model.means.copy()
    )


def nearest_members(
    assignment: ClusterAssignment, Z: np.ndarray, cluster_id: int, m: int = 3
) -> list[int]:
    """Row indices of the cluster's m nearest points to its mean (ties by index)."""
    if cluster_id < 0 or cluster_id >= len(assignment.members):
        raise ValidationError(f"cluster id {cluster_id} out of range")
    rows = assignment.members[cluster_id]
    if not rows:
        raise EmptyClusterError(f"cluster {cluster_id} has no members")
    Z = np.asarray(Z, dtype=np.float64)
    mean = assignment.means[cluster_id]
    ranked = sorted(rows, key=lambda i: (float(np.linalg.norm(Z[i] - mean)), i))
    return ranked[: min(m, len(ranked))]


def choose_K(unique_keyphrases: int, hint: int | None = None) -> int:
    """Component count: the hint when given, else round(sqrt(unique)) in [5, 300]."""
    if hint is not None:
        if hint < 1:
            raise ConfigError(f"cluster count hint must be >= 1, got {hint}")
        return hint
    if unique_keyphrases < 1:
        raise ValidationError("cannot choose K for an empty keyphrase set")
    k = round(math.sqrt(unique_keyphrases))
    return max(K_MIN, min(K_MAX, k))
