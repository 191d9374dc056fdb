import random
import xml.etree.ElementTree as ET

import pytest

from esgrid.catalog import CatalogService, MetadataRecord, OntologyClass, Pedigree
from esgrid.errors import AuthorizationDenied, ConflictError, NotFoundError, ValidationError


@pytest.fixture
def catalog(clock, security):
    return CatalogService(clock, security)


def make_record(lfn="lfn://pcm/run1/ps", title="PCM B06.22 ocean temperature",
                **overrides) -> MetadataRecord:
    fields = dict(
        logical_name=lfn,
        title=title,
        summary="monthly means",
        classification=OntologyClass("simulation", "plain"),
        pedigree=Pedigree(model_name="PCM", model_version="1.2"),
        parameters=[{"name": "PS", "units": "Pa", "standard_name": "surface_air_pressure"}],
        time_coverage=[0.0, 9.0],
        space_coverage=[-90.0, 90.0, 0.0, 360.0],
        constituent_files=[lfn + "/f1"],
    )
    fields.update(overrides)
    return MetadataRecord(**fields)


class TestPublish:
    def test_publish_assigns_id_and_version(self, catalog, publisher_token):
        rid = catalog.publish(make_record(), publisher_token)
        record = catalog.get(rid)
        assert record.version == 1
        assert catalog.search("ocean temperature") == [rid]

    def test_duplicate_logical_name(self, catalog, publisher_token):
        catalog.publish(make_record(), publisher_token)
        with pytest.raises(ConflictError, match="duplicate"):
            catalog.publish(make_record(), publisher_token)

    def test_unprivileged_token_denied(self, catalog, reader_token):
        with pytest.raises(AuthorizationDenied):
            catalog.publish(make_record(), reader_token)

    def test_requires_exactly_one_content_slot(self, catalog, publisher_token):
        bad = make_record(constituent_files=None)
        with pytest.raises(ValidationError):
            catalog.publish(bad, publisher_token)
        both = make_record(recipe_ref="rcp-1")
        with pytest.raises(ValidationError):
            catalog.publish(both, publisher_token)

    def test_relationship_targets_must_resolve(self, catalog, publisher_token):
        rid = catalog.publish(make_record(), publisher_token)
        ok = make_record(
            lfn="lfn://pcm/run2/ps",
            classification=OntologyClass("simulation", "plain",
                                         [("isDerivedFrom", rid),
                                          ("usesService", "svc://datamover")]))
        catalog.publish(ok, publisher_token)
        bad = make_record(
            lfn="lfn://pcm/run3/ps",
            classification=OntologyClass("simulation", "plain",
                                         [("isPartOf", "rec-999999")]))
        with pytest.raises(ValidationError, match="resolve"):
            catalog.publish(bad, publisher_token)


class TestUpdate:
    def test_patch_bumps_version_and_keeps_history(self, catalog, publisher_token):
        rid = catalog.publish(make_record(), publisher_token)
        v2 = catalog.update(rid, {"summary": "corrected means"}, 1, publisher_token)
        assert v2 == 2
        assert catalog.get(rid).summary == "corrected means"
        assert catalog.get(rid, version=1).summary == "monthly means"
        assert [r.version for r in catalog.history(rid)] == [1, 2]

    def test_stale_expected_version_conflicts(self, catalog, publisher_token):
        rid = catalog.publish(make_record(), publisher_token)
        catalog.update(rid, {"summary": "x"}, 1, publisher_token)
        with pytest.raises(ConflictError, match="stale"):
            catalog.update(rid, {"summary": "y"}, 1, publisher_token)

    def test_unknown_id(self, catalog, publisher_token):
        with pytest.raises(NotFoundError):
            catalog.update("rec-424242", {"summary": "x"}, 1, publisher_token)

    def test_derived_from_surfaces_relationship(self, catalog, publisher_token):
        rid = catalog.publish(make_record(), publisher_token)
        pedigree = Pedigree(model_name="PCM", derived_from=["lfn://pcm/run0/raw"]).to_dict()
        catalog.update(rid, {"pedigree": pedigree}, 1, publisher_token)
        assert catalog.search(filters={"relation": "isDerivedFrom"}) == [rid]

    def test_history_is_immutable_snapshot(self, catalog, publisher_token):
        rid = catalog.publish(make_record(), publisher_token)
        before = catalog.get(rid, version=1).to_dict()
        catalog.update(rid, {"title": "renamed"}, 1, publisher_token)
        assert catalog.get(rid, version=1).to_dict() == before


class TestSearch:
    def test_terms_are_conjunctive_and_case_insensitive(self, catalog, publisher_token):
        rid = catalog.publish(make_record(), publisher_token)
        assert catalog.search("OCEAN temperature") == [rid]
        assert catalog.search("ocean nonexistentterm") == []

    def test_empty_result_is_success(self, catalog):
        assert catalog.search("nonexistentterm") == []

    def test_parameters_are_searchable(self, catalog, publisher_token):
        rid = catalog.publish(make_record(), publisher_token)
        assert catalog.search("surface_air_pressure") == [rid]

    def test_filter_matches_oracle_on_mixed_corpus(self, catalog, publisher_token):
        rng = random.Random(5)
        corpus = {}
        for i in range(40):
            kind = rng.choice(["simulation", "observation", "experiment", "analysis"])
            record = make_record(
                lfn=f"lfn://pcm/run{i}/ps",
                title=f"run {i} {rng.choice(['ocean', 'air', 'ice'])}",
                classification=OntologyClass(kind, "plain"))
            corpus[catalog.publish(record, publisher_token)] = kind
        got = catalog.search(filters={"investigation_kind": "simulation"})
        expected = sorted(
            (rid for rid, kind in corpus.items() if kind == "simulation"),
            key=lambda rid: catalog.get(rid).logical_name)
        assert got == expected

    def test_linear_scan_oracle_equality(self, catalog, publisher_token):
        rng = random.Random(6)
        words = ["ocean", "air", "ice", "pressure", "salinity"]
        for i in range(60):
            catalog.publish(make_record(
                lfn=f"lfn://pcm/r{i}/d",
                title=" ".join(rng.sample(words, 2)),
                summary=rng.choice(words)), publisher_token)
        for _ in range(50):
            terms = rng.sample(words, rng.randint(1, 2))
            got = catalog.search(" ".join(terms))
            expected = []
            for record in catalog.all_records():
                blob = (record.title + " " + record.summary + " " + " ".join(
                    str(p.get(k, "")) for p in record.parameters
                    for k in ("name", "units", "standard_name"))).lower()
                if all(t in blob for t in terms):
                    expected.append(record.id)
            assert got == expected

    def test_unknown_filter_field_rejected(self, catalog):
        with pytest.raises(ValidationError):
            catalog.search(filters={"bogus": "x"})


class TestBrowse:
    def test_children_of_prefix(self, catalog, publisher_token):
        catalog.publish(make_record("lfn://pcm/run1/ps"), publisher_token)
        catalog.publish(make_record("lfn://pcm/run1/ts"), publisher_token)
        catalog.publish(make_record("lfn://pcm/run2/ps"), publisher_token)
        catalog.publish(make_record("lfn://ipcc/ar4/ps"), publisher_token)
        children = catalog.browse("lfn://pcm")
        assert [c["name"] for c in children] == ["run1", "run2"]
        assert [c["records"] for c in children] == [2, 1]
        assert children[0]["path"] == "lfn://pcm/run1"

    def test_root_browse_lists_projects(self, catalog, publisher_token):
        catalog.publish(make_record("lfn://pcm/run1/ps"), publisher_token)
        catalog.publish(make_record("lfn://ipcc/ar4/ps"), publisher_token)
        assert [c["name"] for c in catalog.browse("")] == ["ipcc", "pcm"]

    def test_unknown_prefix_is_empty(self, catalog):
        assert catalog.browse("lfn://nothing") == []

    def test_counts_match_recount_oracle(self, catalog, publisher_token):
        rng = random.Random(11)
        lfns = []
        for i in range(30):
            lfn = f"lfn://pcm/run{rng.randint(1, 4)}/d{i}"
            lfns.append(lfn)
            catalog.publish(make_record(lfn), publisher_token)
        for child in catalog.browse("lfn://pcm"):
            recount = sum(1 for l in lfns if l.startswith(child["path"] + "/"))
            assert child["records"] == recount


class TestThredds:
    def test_export_shape_and_offline_flags(self, catalog, publisher_token):
        catalog.publish(make_record("lfn://pcm/run1/ps"), publisher_token)
        catalog.publish(make_record("lfn://pcm/run2/ps"), publisher_token)
        replicas = {"lfn://pcm/run1/ps": ["site://ncar/disk/pcm/run1/ps"]}
        doc = catalog.export_thredds("lfn://pcm", lambda l: replicas.get(l, []))
        root = ET.fromstring(doc)
        assert root.tag == "catalog"
        service = root.find("service")
        assert service.get("name") == "data" and service.get("base") == "/data/"
        datasets = root.findall("dataset")
        assert len(datasets) == 2
        by_path = {d.get("urlPath"): d for d in datasets}
        assert by_path["lfn://pcm/run1/ps"].get("offline") is None
        assert by_path["lfn://pcm/run2/ps"].get("offline") == "true"

    def test_empty_prefix_still_well_formed(self, catalog):
        root = ET.fromstring(catalog.export_thredds("lfn://empty", lambda l: []))
        assert root.findall("dataset") == []

    def test_replica_outage_marks_offline_instead_of_failing(self, catalog, publisher_token):
        catalog.publish(make_record("lfn://pcm/run1/ps"), publisher_token)

        def broken(lfn):
            raise RuntimeError("rls unreachable")

        root = ET.fromstring(catalog.export_thredds("lfn://pcm", broken))
        assert root.find("dataset").get("offline") == "true"

    def test_dataset_count_equals_browse_count(self, catalog, publisher_token):
        for i in range(7):
            catalog.publish(make_record(f"lfn://pcm/run{i % 3}/d{i}"), publisher_token)
        root = ET.fromstring(catalog.export_thredds("lfn://pcm", lambda l: []))
        browse_total = sum(c["records"] for c in catalog.browse("lfn://pcm"))
        assert len(root.findall("dataset")) == browse_total == 7


class TestPersistence:
    def test_log_replay_restores_catalog(self, clock, security, publisher_token, tmp_path):
        log = tmp_path / "catalog.log"
        first = CatalogService(clock, security, log_path=log)
        rid = first.publish(make_record(), publisher_token)
        first.update(rid, {"summary": "v2"}, 1, publisher_token)

        second = CatalogService(clock, security, log_path=log)
        assert second.get(rid).summary == "v2"
        assert second.get(rid, version=1).summary == "monthly means"
        rid2 = second.publish(make_record("lfn://pcm/run9/ps"), publisher_token)
        assert rid2 != rid
