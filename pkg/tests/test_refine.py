"""Low-confidence selection, the gamma threshold, promotion gates, pruning,
freezing, and the refinement loop's rollback guarantees."""

import hashlib
import json

import pytest

import helpers
from conftest import VectorBackend, make_gateway
from openlabels.classifier import InstanceTop
from openlabels.corpus import Document
from openlabels.errors import ConfigError, GammaUndefinedError, ValidationError
from openlabels.keyphrase import Keyphrase, KeyphraseSet
from openlabels.labelspace import LabelSpace
from openlabels.refine import (
    GammaThreshold,
    RefineConfig,
    compute_gamma,
    promote_keyphrases,
    prune_and_freeze,
    run_refinement,
    select_low_confidence,
    write_iteration_records,
)


def top(instance_id, ranking, scores, kind="chunk"):
    return InstanceTop(instance_id=instance_id, kind=kind, ranking=tuple(ranking), scores=tuple(scores))


def space_with(*names):
    space = LabelSpace()
    for name in names:
        space.add_label(name, provenance="cluster-synthesis")
    return space


def kset_with(*spec):
    """spec items: (text, doc_id, chunk_index, count)."""
    entries = []
    for text, doc_id, index, count in spec:
        entries.extend(
            Keyphrase(text=text, doc_id=doc_id, chunk_index=index, granularity="unspecified")
            for _ in range(count)
        )
    return KeyphraseSet(entries=entries)


# -- config -------------------------------------------------------------------

def test_refine_config_validation():
    RefineConfig().validate()
    with pytest.raises(ConfigError):
        RefineConfig(subset_size=-1).validate()
    with pytest.raises(ConfigError):
        RefineConfig(longtail_fraction=0.0).validate()
    with pytest.raises(ConfigError):
        RefineConfig(longtail_fraction=1.5).validate()
    with pytest.raises(ConfigError):
        RefineConfig(freeze_fraction=-0.1).validate()
    with pytest.raises(ConfigError):
        RefineConfig(iterations=-1).validate()
    with pytest.raises(ConfigError):
        RefineConfig(min_support=-1).validate()


# -- low-confidence selection ----------------------------------------------------

def test_select_low_confidence_sorts_by_score_then_id():
    tops = [
        top("c::b::0", (1,), (0.4,)),
        top("c::a::0", (1,), (0.4,)),
        top("c::c::0", (1,), (0.2,)),
        top("k::a::0::0", (1,), (0.01,), kind="keyphrase"),  # wrong kind, ignored
    ]
    picked = select_low_confidence(tops, 2)
    assert [t.instance_id for t in picked] == ["c::c::0", "c::a::0"]


def test_select_low_confidence_zero_and_clamp():
    tops = [top("c::a::0", (1,), (0.4,))]
    assert select_low_confidence(tops, 0) == []
    assert [t.instance_id for t in select_low_confidence(tops, 99)] == ["c::a::0"]


# -- gamma -------------------------------------------------------------------------

ANCHOR = [1.0, 0.0, 0.0]
SIM06 = [0.6, 0.8, 0.0]  # cosine 0.6 to the anchor
SIM08 = [0.8, 0.6, 0.0]  # cosine 0.8 to the anchor
ORTHO_Y = [0.0, 1.0, 0.0]
ORTHO_Z = [0.0, 0.0, 1.0]


def gamma_fixture_gateway(tmp_path, extra_vectors=None):
    vectors = {
        "anchor": ANCHOR,
        "rare one": SIM06,
        "rare two": SIM08,
        "rare three": ORTHO_Y,
        "rare four": ORTHO_Z,
    }
    vectors.update(extra_vectors or {})
    return make_gateway(tmp_path, VectorBackend(vectors=vectors))


def test_gamma_is_lower_median_of_max_similarities_odd(tmp_path):
    kset = kset_with(
        ("common", "d1", 0, 10),
        ("rare one", "d1", 0, 1),
        ("rare two", "d2", 0, 1),
        ("rare three", "d3", 0, 1),
    )
    space = space_with("anchor")
    gw = gamma_fixture_gateway(tmp_path, extra_vectors={"common": ORTHO_Z})
    gamma = compute_gamma(kset, space, gw, longtail_fraction=0.1)

    sims = [
        helpers.cosine(SIM06, ANCHOR),
        helpers.cosine(ORTHO_Y, ANCHOR),
        helpers.cosine(SIM08, ANCHOR),
    ]
    assert gamma.value == helpers.lower_median(sims)
    assert gamma.candidate_count == 3
    want_digest = hashlib.sha256(
        json.dumps(sorted(sims), separators=(",", ":")).encode("utf-8")
    ).hexdigest()
    assert gamma.list_digest == want_digest


def test_gamma_even_count_takes_lower_of_middle_pair(tmp_path):
    kset = kset_with(
        ("common", "d1", 0, 20),
        ("rare one", "d1", 0, 1),
        ("rare two", "d2", 0, 1),
        ("rare three", "d3", 0, 1),
        ("rare four", "d4", 0, 1),
    )
    space = space_with("anchor")
    gw = gamma_fixture_gateway(tmp_path, extra_vectors={"common": ORTHO_Z})
    gamma = compute_gamma(kset, space, gw, longtail_fraction=0.1)
    sims = [
        helpers.cosine(v, ANCHOR) for v in (SIM06, SIM08, ORTHO_Y, ORTHO_Z)
    ]
    assert gamma.value == helpers.lower_median(sims)
    assert gamma.candidate_count == 4


def test_gamma_undefined_when_nothing_is_rare(tmp_path):
    kset = kset_with(("common", "d1", 0, 5))
    space = space_with("anchor")
    gw = gamma_fixture_gateway(tmp_path)
    with pytest.raises(GammaUndefinedError):
        compute_gamma(kset, space, gw, longtail_fraction=0.1)


def test_gamma_requires_live_labels(tmp_path):
    kset = kset_with(("rare one", "d1", 0, 1), ("common", "d1", 0, 90))
    gw = gamma_fixture_gateway(tmp_path)
    with pytest.raises(ValidationError):
        compute_gamma(kset, LabelSpace(), gw, longtail_fraction=0.05)


# -- promotion ------------------------------------------------------------------------

def promotion_scenario(tmp_path):
    """Candidates exercising every gate. Gamma is pinned at 0.5.

    - 'anchor' (20 hits) is already a live label -> skipped by the name gate
    - 'hot spring' (17) is orthogonal to the anchor -> promoted
    - 'cool pond' (16) orthogonal to both -> promoted (text-order beats 'warm
      spring' at equal frequency)
    - 'warm spring' (16) identical to the just-promoted 'hot spring' ->
      blocked by the similarity gate against an immediate join
    - 'edge case' (15) fails the strictly-greater frequency gate
    - 'background noise' (30) never appears in a low-confidence chunk
    """
    space = space_with("anchor")
    kset = kset_with(
        ("anchor", "d1", 0, 20),
        ("hot spring", "d1", 0, 17),
        ("warm spring", "d1", 0, 16),
        ("cool pond", "d2", 0, 16),
        ("edge case", "d1", 0, 15),
        ("background noise", "d9", 0, 30),
    )
    low = [
        top("c::d1::0", (1,), (0.2,)),
        top("c::d2::0", (1,), (0.3,)),
    ]
    gw = make_gateway(tmp_path, VectorBackend(vectors={
        "anchor": ANCHOR,
        "hot spring": ORTHO_Y,
        "warm spring": ORTHO_Y,
        "cool pond": ORTHO_Z,
    }))
    gamma = GammaThreshold(value=0.5, candidate_count=4, list_digest="x")
    return space, kset, low, gw, gamma


def test_promotion_applies_every_gate(tmp_path):
    space, kset, low, gw, gamma = promotion_scenario(tmp_path)
    promoted = promote_keyphrases(low, kset, space, gamma, gw, min_count=15)
    names = [space.get_label(i).name for i in promoted]
    assert names == ["hot spring", "cool pond"]
    live = {l.name for l in space.scorable_labels()}
    assert live == {"anchor", "hot spring", "cool pond"}


def test_promotion_snapshots_record_recheckable_gates(tmp_path):
    space, kset, low, gw, gamma = promotion_scenario(tmp_path)
    promote_keyphrases(low, kset, space, gamma, gw, min_count=15)
    promotions = [
        rec["payload"] for rec in space.log
        if rec["op"] == "add_label" and rec["payload"].get("provenance") == "refine-promotion"
    ]
    assert len(promotions) == 2
    for payload in promotions:
        assert payload["frequency"] > 15
        assert payload["max_similarity"] < payload["gamma"]
        assert payload["gamma"] == gamma.value
        # the recorded frequency is re-derivable from the keyphrase set
        assert payload["frequency"] == kset.frequency[payload["name"]]
    # the recorded similarity for 'hot spring' is its cosine to the only
    # label live at promotion time
    assert promotions[0]["name"] == "hot spring"
    assert promotions[0]["max_similarity"] == helpers.cosine(ORTHO_Y, ANCHOR)


def test_promotion_only_considers_low_confidence_chunks(tmp_path):
    space, kset, low, gw, gamma = promotion_scenario(tmp_path)
    promoted = promote_keyphrases(low[:1], kset, space, gamma, gw, min_count=15)
    # restricting the low-confidence set to d1 drops 'cool pond' (from d2)
    assert [space.get_label(i).name for i in promoted] == ["hot spring"]


# -- pruning and freezing ----------------------------------------------------------------

def test_prune_removes_unsupported_scored_labels_and_freezes_top_support():
    space = space_with("l one", "l two", "l three", "l four", "l five")
    tops = [
        top("c::a::0", (1, 4), (0.9, 0.1)),
        top("c::b::0", (1, 2), (0.8, 0.2)),
        top("c::c::0", (2, 3, 4), (0.7, 0.3, 0.1)),
        top("c::d::0", (3, 1), (0.6, 0.4)),
    ]
    removed, frozen = prune_and_freeze(space, tops, freeze_fraction=0.5, min_support=1)
    assert removed == [4]  # scored in rankings but never anyone's top choice
    assert frozen == [1]  # floor(3 * 0.5) = 1; label 1 has the most support
    assert space.get_label(5).status == "active"  # never scored -> exempt
    assert space.get_label(1).status == "frozen"


def test_prune_never_touches_frozen_labels():
    space = space_with("l one", "l two")
    space.freeze([2])
    tops = [top("c::a::0", (1, 2), (0.9, 0.1))]
    removed, _ = prune_and_freeze(space, tops, freeze_fraction=0.0, min_support=1)
    assert removed == []
    assert space.get_label(2).status == "frozen"


def test_prune_skips_when_it_would_empty_the_space():
    space = space_with("l one", "l two")
    tops = [
        top("c::a::0", (1, 2), (0.9, 0.1)),
        top("c::b::0", (2, 1), (0.9, 0.1)),
    ]
    removed, frozen = prune_and_freeze(space, tops, freeze_fraction=0.5, min_support=2)
    assert removed == []
    assert frozen == [1]
    assert {l.id for l in space.scorable_labels()} == {1, 2}


def test_freeze_count_uses_floor_and_support_then_id_order():
    space = space_with(*[f"label number {i}" for i in range(1, 11)])
    tops = []
    tops += [top(f"c::x{i}::0", (3,), (0.9,)) for i in range(3)]
    tops += [top(f"c::y{i}::0", (7,), (0.9,)) for i in range(2)]
    for lid in (1, 2, 4, 5, 6, 8, 9, 10):
        tops.append(top(f"c::z{lid}::0", (lid,), (0.9,)))
    removed, frozen = prune_and_freeze(space, tops, freeze_fraction=0.25, min_support=1)
    assert removed == []
    assert frozen == [3, 7]  # floor(10 * 0.25) = 2, by support desc then id


# -- the refinement loop --------------------------------------------------------------------

def refine_inputs():
    docs = [
        Document(id="d1", text="anchor topic anchor topic discussion"),
        Document(id="d2", text="anchor topic repeated anchor topic"),
    ]
    kset = kset_with(("anchor topic", "d1", 0, 3), ("anchor topic", "d2", 0, 3))
    return docs, kset


def test_run_refinement_records_and_unfreezes(gateway):
    docs, kset = refine_inputs()
    space = space_with("anchor topic")
    config = RefineConfig(subset_size=2, iterations=2)
    records = run_refinement(
        docs, space, kset, gateway, config, chunk_size=10,
        coverage_fn=lambda s: 0.5,
    )
    assert [r.index for r in records] == [0, 1]
    for rec in records:
        assert rec.gamma is None  # nothing rare in this keyphrase set
        assert rec.promoted == [] and rec.removed == []
        assert rec.coverage == 0.5
    versions = [r.resulting_version for r in records]
    assert versions == sorted(versions)
    assert versions[-1] <= space.version  # the final unfreeze may bump it further
    assert all(l.status == "active" for l in space.scorable_labels())


def test_run_refinement_zero_iterations_only_unfreezes(gateway):
    docs, kset = refine_inputs()
    space = space_with("anchor topic", "second label")
    space.freeze([2])
    records = run_refinement(
        docs, space, kset, gateway, RefineConfig(iterations=0), chunk_size=10
    )
    assert records == []
    assert space.get_label(2).status == "active"


def test_run_refinement_rolls_back_failed_iteration(gateway):
    docs, kset = refine_inputs()
    space = space_with("anchor topic")
    before = json.dumps(space.to_dict(), sort_keys=True)

    def exploding_coverage(_space):
        raise RuntimeError("coverage backend down")

    with pytest.raises(RuntimeError):
        run_refinement(
            docs, space, kset, gateway, RefineConfig(subset_size=2, iterations=1),
            chunk_size=10, coverage_fn=exploding_coverage,
        )
    assert json.dumps(space.to_dict(), sort_keys=True) == before


def test_write_iteration_records_is_jsonl(tmp_path, gateway):
    docs, kset = refine_inputs()
    space = space_with("anchor topic")
    records = run_refinement(
        docs, space, kset, gateway, RefineConfig(subset_size=1, iterations=1), chunk_size=10
    )
    path = tmp_path / "records.jsonl"
    write_iteration_records(records, path)
    lines = [json.loads(l) for l in path.read_text().splitlines()]
    assert [l["index"] for l in lines] == [0]
    assert set(lines[0]) == {
        "index", "gamma", "promoted", "removed", "frozen", "coverage", "resulting_version",
    }
