import json
from importlib import resources

import pytest

from smellwatch.catalog import (
    Catalog,
    CatalogError,
    SmellTypeEntry,
    bundled_catalog,
    load_catalog,
    serialize_catalog,
)
from smellwatch.runtime_rules import REQUIRED_PARAMS as RUNTIME_REQUIRED
from smellwatch.static_analysis import STATIC_SMELL_IDS

STATIC_REQUIRED = {
    "esb-usage": ("bus_fraction", "min_bus_edges"),
    "microservice-greedy": ("greedy_max_endpoints", "greedy_max_loc"),
    "no-api-gateway": (),
    "no-api-versioning": (),
    "hardcoded-endpoints": (),
    "shared-persistence": (),
    "cyclic-dependency": (),
    "hub-like-dependency": ("hub_min_degree", "hub_sigma"),
    "shared-libraries": (),
    "mega-service": ("mega_min_endpoints", "mega_min_loc"),
    "nano-service": ("nano_max_loc", "nano_min_deps"),
    "long-service-chain-static": ("chain_min_len",),
}


def test_bundled_catalog_has_24_bound_entries():
    catalog = bundled_catalog()
    bound = catalog.bound_entries()
    assert len(bound) == 24
    assert len(catalog.bound_entries("static")) == 12
    assert len(catalog.bound_entries("runtime")) == 12


def test_static_and_runtime_partition_bound_entries():
    catalog = bundled_catalog()
    static_ids = {e.id for e in catalog.bound_entries("static")}
    runtime_ids = {e.id for e in catalog.bound_entries("runtime")}
    assert static_ids | runtime_ids == catalog.bound_ids()
    assert not static_ids & runtime_ids
    assert static_ids == set(STATIC_SMELL_IDS)
    assert runtime_ids == set(RUNTIME_REQUIRED)


def test_taxonomy_kind_coherence():
    catalog = bundled_catalog()
    for entry in catalog.bound_entries("static"):
        assert entry.primary_type == "Architecture"
    for entry in catalog.bound_entries("runtime"):
        assert entry.primary_type in ("Runtime", "Performance")


def test_detector_params_exist_in_catalog():
    # Every parameter a bound detector reads must ship with the entry.
    catalog = bundled_catalog()
    for smell_id, required in {**STATIC_REQUIRED, **RUNTIME_REQUIRED}.items():
        entry = catalog.get_entry(smell_id)
        assert entry is not None, smell_id
        for param in required:
            if param == "min_history" and smell_id == "memory-jitter":
                continue  # falls back to the global detection config
            assert param in entry.default_params, f"{smell_id} missing {param}"


def test_get_entry_examples():
    catalog = bundled_catalog()
    versioning = catalog.get_entry("no-api-versioning")
    assert versioning.name == "No API Versioning"
    assert versioning.primary_type == "Architecture"
    greedy = catalog.get_entry("microservice-greedy")
    assert greedy.name == "Microservice Greedy"
    assert catalog.get_entry("nonexistent-id") is None


def test_list_by_taxonomy_architecture_returns_the_12_static_entries():
    catalog = bundled_catalog()
    arch = catalog.list_by_taxonomy(primary="Architecture")
    assert len(arch) == 12
    assert all(e.detection_kind == "static" for e in arch)


def test_list_by_taxonomy_unknown_secondary_is_empty():
    catalog = bundled_catalog()
    assert catalog.list_by_taxonomy(primary="Architecture", secondary="NoSuchCategory") == []


def test_list_by_taxonomy_no_filter_matches_full_file_scan():
    # Oracle: read the raw bundled document and compare id order directly.
    raw = json.loads(
        resources.files("smellwatch.data").joinpath("catalog.json").read_text())
    expected_ids = [e["id"] for e in raw["entries"]]
    catalog = bundled_catalog()
    assert [e.id for e in catalog.list_by_taxonomy()] == expected_ids
    assert len(expected_ids) == 24


def test_list_by_taxonomy_filters_return_subsets():
    catalog = bundled_catalog()
    everything = {e.id for e in catalog.list_by_taxonomy()}
    for primary in ("Architecture", "Runtime", "Performance"):
        subset = {e.id for e in catalog.list_by_taxonomy(primary=primary)}
        assert subset <= everything


def test_round_trip_serialize_load():
    catalog = bundled_catalog()
    assert load_catalog(serialize_catalog(catalog)) == catalog


def test_empty_catalog_is_valid():
    catalog = load_catalog(b'{"version": "0", "entries": []}')
    assert catalog.entries == ()


def test_duplicate_id_rejected():
    entry = {
        "id": "esb-usage", "name": "x", "primary_type": "Architecture",
        "secondary_type": "y", "definition": "z", "detection_kind": "static",
    }
    doc = json.dumps({"version": "0", "entries": [entry, entry]})
    with pytest.raises(CatalogError, match="esb-usage"):
        load_catalog(doc)


def test_kind_taxonomy_mismatch_rejected():
    entry = {
        "id": "bad", "name": "x", "primary_type": "Runtime",
        "secondary_type": "y", "definition": "z", "detection_kind": "static",
    }
    with pytest.raises(CatalogError, match="Architecture"):
        load_catalog(json.dumps({"version": "0", "entries": [entry]}))


def test_malformed_document_reports_position():
    with pytest.raises(CatalogError, match="line"):
        load_catalog(b'{"version": "0", "entries": [')
    with pytest.raises(CatalogError, match="missing field"):
        load_catalog(b'{"version": "0", "entries": [{"id": "a"}]}')


def test_bad_id_rejected():
    with pytest.raises(CatalogError, match="a-z0-9"):
        SmellTypeEntry(id="Bad_Id", name="x", primary_type="Architecture",
                       secondary_type="y", definition="z",
                       detection_kind=None).validate()


def test_knowledge_only_entries_are_allowed():
    doc = {
        "version": "0",
        "entries": [{
            "id": "some-future-smell", "name": "Future", "primary_type": "Runtime",
            "secondary_type": "Misc", "definition": "not yet detectable",
        }],
    }
    catalog = load_catalog(json.dumps(doc))
    assert catalog.bound_entries() == []
    assert catalog.get_entry("some-future-smell").detection_kind is None
