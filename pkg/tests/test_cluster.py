"""Embedding matrices, dimensionality reduction, and the Gaussian mixture."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import helpers
from openlabels.cluster import (
    K_MAX,
    K_MIN,
    VARIANCE_FLOOR,
    assign,
    choose_K,
    embed_keyphrases,
    fit_gmm,
    load_external_reduction,
    nearest_members,
    reduce,
)
from openlabels.errors import (
    ConfigError,
    DegenerateInputError,
    EmptyClusterError,
    ShapeError,
    ValidationError,
)
from openlabels.keyphrase import Keyphrase, KeyphraseSet


def kset_of(*names):
    return KeyphraseSet(entries=[
        Keyphrase(text=n, doc_id=f"d{i}", chunk_index=0, granularity="unspecified")
        for i, n in enumerate(names)
    ])


def assert_ll_monotone(model):
    trace = model.ll_trace
    for earlier, later in zip(trace, trace[1:]):
        assert later >= earlier - 1e-9, f"log-likelihood decreased: {earlier} -> {later}"


# -- embedding matrix -----------------------------------------------------------

def test_embed_keyphrases_row_order_matches_entries(gateway):
    kset = kset_of("tidal energy", "tidal energy", "moss gardens")
    X = embed_keyphrases(kset, gateway)
    assert X.shape[0] == 3
    assert np.allclose(X[0], X[1])
    assert not np.allclose(X[0], X[2])
    assert np.allclose(X[0], gateway.embed_one("tidal energy"))


def test_embed_keyphrases_rejects_empty_set(gateway):
    with pytest.raises(ValidationError):
        embed_keyphrases(KeyphraseSet(), gateway)


# -- reduction -------------------------------------------------------------------

def test_reduce_identity_returns_copy():
    X = np.arange(12, dtype=float).reshape(4, 3)
    reduced = reduce(X, reducer="identity")
    assert np.array_equal(reduced.values, X)
    reduced.values[0, 0] = 99.0
    assert X[0, 0] == 0.0


def test_reduce_validations():
    X = np.random.default_rng(0).normal(size=(6, 4))
    with pytest.raises(ShapeError):
        reduce(np.zeros(3))
    with pytest.raises(ConfigError):
        reduce(X, target_dim=0)
    with pytest.raises(ConfigError):
        reduce(X, target_dim=5)
    with pytest.raises(ConfigError):
        reduce(np.zeros((2, 4)), target_dim=3)
    with pytest.raises(ConfigError):
        reduce(X, reducer="umap")
    with pytest.raises(ConfigError):
        reduce(X, reducer="external")


def test_pca_matches_reference_eigensolver_small():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(12, 5))
    reduced = reduce(X, target_dim=3)
    want, want_eigs = helpers.pca_reference(X.tolist(), 3)
    want = np.asarray(want)
    for j in range(3):
        direct = np.max(np.abs(reduced.values[:, j] - want[:, j]))
        flipped = np.max(np.abs(reduced.values[:, j] + want[:, j]))
        assert min(direct, flipped) < 1e-6
    assert np.max(np.abs(reduced.eigenvalues - np.asarray(want_eigs))) < 1e-9


@given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(min_value=1, max_value=5))
@settings(max_examples=25)
def test_pca_projection_error_equals_discarded_eigenvalue_mass(seed, target_dim):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, 5))
    reduced = reduce(X, target_dim=target_dim)
    centered = X - X.mean(axis=0)
    total_variance = float((centered**2).sum()) / X.shape[0]
    captured = float((reduced.values**2).sum()) / X.shape[0]
    discarded = float(np.sum(reduced.eigenvalues[target_dim:]))
    assert abs((total_variance - captured) - discarded) < 1e-6


def test_pca_rejects_zero_variance_input():
    X = np.ones((8, 4))
    with pytest.raises(DegenerateInputError):
        reduce(X, target_dim=2)


def test_external_reduction_loading(tmp_path):
    path = tmp_path / "proj.txt"
    path.write_text("1.0 2.0\n3.0 4.0\n", encoding="utf-8")
    Z = load_external_reduction(path, expected_rows=2)
    assert Z.shape == (2, 2)
    assert np.array_equal(Z, np.array([[1.0, 2.0], [3.0, 4.0]]))
    reduced = reduce(np.zeros((2, 7)) + np.arange(7), reducer="external", external_path=path)
    assert reduced.reducer == "external"
    assert np.array_equal(reduced.values, Z)

    (tmp_path / "ragged.txt").write_text("1.0\n1.0 2.0\n", encoding="utf-8")
    with pytest.raises(ShapeError):
        load_external_reduction(tmp_path / "ragged.txt", expected_rows=2)
    with pytest.raises(ShapeError):
        load_external_reduction(path, expected_rows=5)
    (tmp_path / "words.txt").write_text("a b\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        load_external_reduction(tmp_path / "words.txt", expected_rows=1)
    (tmp_path / "empty.txt").write_text("", encoding="utf-8")
    with pytest.raises(ValidationError):
        load_external_reduction(tmp_path / "empty.txt", expected_rows=0)


# -- Gaussian mixture --------------------------------------------------------------

def two_blob_data(n_per=40, separation=8.0, seed=11):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n_per, 3))
    b = rng.normal(size=(n_per, 3)) + np.array([separation, 0.0, 0.0])
    return np.vstack([a, b])


def test_fit_gmm_is_deterministic_for_a_seed():
    Z = two_blob_data()
    m1 = fit_gmm(Z, K=2, seed=4)
    m2 = fit_gmm(Z, K=2, seed=4)
    assert np.array_equal(m1.means, m2.means)
    assert np.array_equal(m1.weights, m2.weights)
    assert m1.ll_trace == m2.ll_trace
    assert m1.n_iter == m2.n_iter


def test_fit_gmm_validations():
    Z = two_blob_data()
    with pytest.raises(ConfigError):
        fit_gmm(Z, K=0)
    with pytest.raises(ConfigError):
        fit_gmm(Z[:3], K=4)
    with pytest.raises(DegenerateInputError):
        fit_gmm(np.ones((10, 2)), K=2)


def test_fit_gmm_log_likelihood_never_decreases():
    for seed in range(5):
        model = fit_gmm(two_blob_data(seed=seed), K=3, seed=seed)
        assert_ll_monotone(model)
        assert model.log_likelihood == model.ll_trace[-1]


def test_fit_gmm_respects_variance_floor_and_weight_simplex():
    Z = two_blob_data()
    model = fit_gmm(Z, K=2, seed=0)
    assert np.all(model.variances >= VARIANCE_FLOOR)
    assert model.weights.sum() == pytest.approx(1.0)
    assert np.all(model.weights >= 0.0)


@given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(min_value=1, max_value=4))
@settings(max_examples=25)
def test_responsibility_rows_sum_to_one(seed, K):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(max(K, 12), 3))
    model = fit_gmm(Z, K=K, seed=seed)
    assignment = assign(model, Z)
    sums = assignment.responsibilities.sum(axis=1)
    assert np.max(np.abs(sums - 1.0)) < 1e-9
    assert_ll_monotone(model)


def test_assign_members_partition_rows():
    Z = two_blob_data()
    model = fit_gmm(Z, K=2, seed=1)
    assignment = assign(model, Z)
    flattened = sorted(i for rows in assignment.members for i in rows)
    assert flattened == list(range(Z.shape[0]))
    with pytest.raises(ShapeError):
        assign(model, Z[:, :2])


def test_nearest_members_ranked_by_distance_then_index():
    Z = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0], [11.0, 0.0], [0.5, 0.0]])
    model = fit_gmm(Z, K=2, seed=0)
    assignment = assign(model, Z)
    for cid in range(2):
        ranked = nearest_members(assignment, Z, cid, m=2)
        mean = assignment.means[cid]
        dists = [float(np.linalg.norm(Z[i] - mean)) for i in ranked]
        assert dists == sorted(dists)
        assert set(ranked) <= set(assignment.members[cid])
    with pytest.raises(ValidationError):
        nearest_members(assignment, Z, 99)


def test_nearest_members_empty_cluster():
    Z = two_blob_data()
    model = fit_gmm(Z, K=2, seed=0)
    assignment = assign(model, Z)
    assignment.members[0] = []
    with pytest.raises(EmptyClusterError):
        nearest_members(assignment, Z, 0)


def test_choose_k_hint_and_sqrt_rule():
    assert choose_K(100, hint=7) == 7
    with pytest.raises(ConfigError):
        choose_K(100, hint=0)
    assert choose_K(4) == K_MIN
    assert choose_K(100) == 10
    assert choose_K(10**6) == K_MAX
    with pytest.raises(ValidationError):
        choose_K(0)
