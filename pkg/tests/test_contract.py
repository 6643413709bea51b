"""Catalog contract suite; every case runs verbatim against xml, embedded and remote."""

from __future__ import annotations

import random
import re

import pytest

from filecatalog import PFN, generate_file_id
from filecatalog.errors import (
    CatalogPermissionError,
    ConflictError,
    DuplicateError,
    InvalidArgumentError,
    InvalidStateError,
    NotFoundError,
    QuerySyntaxError,
    QueryTypeError,
)
from helpers import catalog_state, lookup_state
from oracle import RefCatalog, RefError, holds, random_predicate, render

GUID_RE = re.compile(r"^[0-9a-f]{8}-[0-9a-f]{4}-4[0-9a-f]{3}-[89ab][0-9a-f]{3}-[0-9a-f]{12}$")
P1, P2, P3 = "file:/d/a.root", "rfio:/castor/a.root", "srm://se.example.org/a.root"


def guids(cat, predicate=None):
    return {e.file_id for e in cat.enumerate(predicate)}


# --------------------------------------------------------------------- register


def test_register_on_empty_catalog_creates(cat):
    g, created = cat.register_file(P1)
    assert created and GUID_RE.match(g)
    assert cat.lookup_file_id(P1) == g


def test_register_again_returns_same_id(cat):
    g, _ = cat.register_file(P1)
    assert cat.register_file(P1) == (g, False)
    assert cat.count() == 1


def test_register_repeatedly_is_idempotent(cat):
    results = {cat.register_file(P1)[0] for _ in range(5)}
    assert len(results) == 1 and cat.count() == 1


def test_register_200_char_pfn(cat):
    name = "file:/" + "x" * 194
    assert len(name) == 200
    g, created = cat.register_file(name)
    assert created and cat.lookup_best_pfn(g).name == name


def test_register_empty_pfn_is_invalid(cat):
    with pytest.raises(InvalidArgumentError):
        cat.register_file("")
    assert cat.count() == 0


def test_register_on_read_only_catalog(backends):
    w = backends.open()
    w.register_file(P1)
    w.close()
    r = backends.open(mode="read")
    with pytest.raises(CatalogPermissionError):
        r.register_file(P2)
    assert r.count() == 1


def test_register_keeps_filetype(cat):
    g, _ = cat.register_file(P1, "ROOT_All")
    cat.add_replica(g, P2)
    assert cat.lookup_all_pfns(g) == [PFN(P1, "ROOT_All"), PFN(P2, None)]


def test_register_uses_proposed_file_id(cat):
    proposal = generate_file_id()
    assert cat.register_file(P1, file_id=proposal) == (proposal, True)


def test_register_proposal_is_canonicalized(cat):
    proposal = generate_file_id()
    g, _ = cat.register_file(P1, file_id=proposal.upper())
    assert g == proposal


def test_register_proposal_of_existing_entry_is_duplicate(cat):
    g, _ = cat.register_file(P1)
    with pytest.raises(DuplicateError):
        cat.register_file(P2, file_id=g)
    with pytest.raises(NotFoundError):
        cat.lookup_file_id(P2)


def test_register_rejects_unstorable_text(cat):
    for bad in ("file:/a\x00b", "file:/\x07", "file:/\ud800"):
        with pytest.raises(InvalidArgumentError):
            cat.register_file(bad)
    assert cat.count() == 0


# --------------------------------------------------------------------- replicas


def test_add_replica_appends(cat):
    g, _ = cat.register_file(P1)
    cat.add_replica(g, P2)
    assert [p.name for p in cat.lookup_all_pfns(g)] == [P1, P2]


def test_add_replica_already_on_same_entry_is_duplicate(cat):
    g, _ = cat.register_file(P1)
    with pytest.raises(DuplicateError):
        cat.add_replica(g, P1)
    assert len(cat.lookup_all_pfns(g)) == 1


def test_add_replica_owned_by_other_entry_is_duplicate(cat):
    g1, _ = cat.register_file(P1)
    g2, _ = cat.register_file(P2)
    with pytest.raises(DuplicateError):
        cat.add_replica(g1, P2)
    assert cat.lookup_file_id(P2) == g2


def test_add_replica_unknown_file_id(cat):
    with pytest.raises(NotFoundError):
        cat.add_replica(generate_file_id(), P1)


def test_malformed_file_id_is_invalid(cat):
    for bad in ("", "not-a-guid", "1fc372e5-0c89-4c3f-9f2e-6a1b2c3d4e5"):
        with pytest.raises(InvalidArgumentError):
            cat.add_replica(bad, P1)


def test_best_pfn_is_first_registered(cat):
    g, _ = cat.register_file(P1)
    cat.add_replica(g, P2)
    assert cat.lookup_best_pfn(g).name == P1


def test_best_pfn_single_replica(cat):
    g, _ = cat.register_file(P1)
    assert cat.lookup_best_pfn(g).name == P1


def test_best_pfn_after_master_deleted(cat):
    g, _ = cat.register_file(P1)
    cat.add_replica(g, P2)
    cat.add_replica(g, P3)
    cat.delete_pfn(P1)
    assert cat.lookup_best_pfn(g).name == P2


def test_master_stable_under_add_replica(cat):
    g, _ = cat.register_file(P1)
    for i in range(10):
        cat.add_replica(g, f"{P2}.{i}")
        assert cat.lookup_best_pfn(g).name == P1


def test_all_pfns_in_registration_order(cat):
    g, _ = cat.register_file(P1)
    cat.add_replica(g, P2)
    cat.add_replica(g, P3)
    assert [p.name for p in cat.lookup_all_pfns(g)] == [P1, P2, P3]


def test_all_pfns_unknown_file_id(cat):
    with pytest.raises(NotFoundError):
        cat.lookup_all_pfns(generate_file_id())
    with pytest.raises(NotFoundError):
        cat.lookup_best_pfn(generate_file_id())


def test_interleaved_replicas_partition_by_file_id(cat):
    rng = random.Random(5)
    log: dict[str, list[str]] = {}
    ids = [cat.register_file(f"file:/seed/{i}")[0] for i in range(3)]
    for i, g in enumerate(ids):
        log[g] = [f"file:/seed/{i}"]
    for k in range(30):
        g = rng.choice(ids)
        name = f"file:/extra/{k}"
        cat.add_replica(g, name)
        log[g].append(name)
    for g in ids:
        assert [p.name for p in cat.lookup_all_pfns(g)] == log[g]


def test_lookup_file_id_of_registered_replica(cat):
    g, _ = cat.register_file(P1)
    cat.add_replica(g, P2)
    assert cat.lookup_file_id(P2) == g


def test_lookup_file_id_unknown(cat):
    with pytest.raises(NotFoundError):
        cat.lookup_file_id("file:/nowhere")


def test_file_id_input_is_case_insensitive(cat):
    g, _ = cat.register_file(P1)
    assert cat.lookup_best_pfn(g.upper()).name == P1
    cat.add_lfn(g.upper(), "alias")
    assert cat.lookup_by_lfn("alias") == g


def test_pfn_names_are_case_sensitive(cat):
    g1, _ = cat.register_file("file:/A")
    g2, created = cat.register_file("file:/a")
    assert created and g1 != g2


# --------------------------------------------------------------------- aliases


def test_add_lfn_then_lookup(cat):
    g, _ = cat.register_file(P1)
    cat.add_lfn(g, "run7.evts")
    assert cat.lookup_by_lfn("run7.evts") == g


def test_lfn_on_second_entry_is_duplicate(cat):
    g1, _ = cat.register_file(P1)
    g2, _ = cat.register_file(P2)
    cat.add_lfn(g1, "run7.evts")
    with pytest.raises(DuplicateError):
        cat.add_lfn(g2, "run7.evts")
    assert cat.lookup_lfns(g2) == []


def test_two_lfns_resolve_to_same_entry(cat):
    g, _ = cat.register_file(P1)
    cat.add_lfn(g, "a")
    cat.add_lfn(g, "b")
    assert cat.lookup_by_lfn("a") == cat.lookup_by_lfn("b") == g
    assert sorted(cat.lookup_lfns(g)) == ["a", "b"]


def test_unknown_lfn(cat):
    with pytest.raises(NotFoundError):
        cat.lookup_by_lfn("missing")


def test_lfn_gone_after_delete_entry(cat):
    g, _ = cat.register_file(P1)
    cat.add_lfn(g, "a")
    cat.delete_entry(g)
    with pytest.raises(NotFoundError):
        cat.lookup_by_lfn("a")


def test_add_lfn_unknown_file_id(cat):
    with pytest.raises(NotFoundError):
        cat.add_lfn(generate_file_id(), "a")


def test_empty_lfn_is_invalid(cat):
    g, _ = cat.register_file(P1)
    with pytest.raises(InvalidArgumentError):
        cat.add_lfn(g, "")


# --------------------------------------------------------------------- schema


def test_define_schema_round_trip(cat):
    cat.define_metadata_schema([("jobid", "int"), ("owner", "string"), ("w", "float"), ("ok", "bool")])
    assert cat.get_schema().pairs() == [("jobid", "int"), ("owner", "string"), ("w", "float"), ("ok", "bool")]


@pytest.mark.parametrize("name", ["guid", "pfname", "lfname", "and", "NOT"])
def test_define_schema_reserved_name(cat, name):
    with pytest.raises(InvalidArgumentError):
        cat.define_metadata_schema([(name, "int")])
    assert len(cat.get_schema()) == 0


@pytest.mark.parametrize(
    "schema", [[("a", "int"), ("a", "string")], [("1a", "int")], [("a", "decimal")], [("a-b", "int")]]
)
def test_define_schema_malformed(cat, schema):
    with pytest.raises(InvalidArgumentError):
        cat.define_metadata_schema(schema)


def test_redefine_after_metadata_is_conflict(cat):
    cat.define_metadata_schema([("jobid", "int")])
    g, _ = cat.register_file(P1)
    cat.set_metadata(g, "jobid", 1)
    with pytest.raises(ConflictError):
        cat.define_metadata_schema([("run", "int")])
    assert cat.get_schema().pairs() == [("jobid", "int")]


def test_redefine_before_metadata_is_allowed(cat):
    cat.define_metadata_schema([("jobid", "int")])
    cat.register_file(P1)
    cat.define_metadata_schema([("run", "int"), ("tag", "string")])
    assert cat.get_schema().names() == ["run", "tag"]


# --------------------------------------------------------------------- metadata


@pytest.fixture
def meta_cat(cat):
    cat.define_metadata_schema([("jobid", "int"), ("owner", "string"), ("energy", "float"), ("good", "bool")])
    return cat


def test_set_then_get_metadata(meta_cat):
    g, _ = meta_cat.register_file(P1)
    meta_cat.set_metadata(g, "jobid", 7)
    assert meta_cat.get_metadata(g)["jobid"] == 7


def test_set_metadata_overwrites(meta_cat):
    g, _ = meta_cat.register_file(P1)
    meta_cat.set_metadata(g, "jobid", 7)
    meta_cat.set_metadata(g, "jobid", 9)
    assert meta_cat.get_metadata(g) == {"jobid": 9, "owner": None, "energy": None, "good": None}


def test_set_metadata_type_mismatch(meta_cat):
    g, _ = meta_cat.register_file(P1)
    for attr, value in (("jobid", "x"), ("jobid", 1.5), ("jobid", True), ("owner", 3), ("good", 1), ("energy", "1")):
        with pytest.raises(InvalidArgumentError):
            meta_cat.set_metadata(g, attr, value)
    assert set(meta_cat.get_metadata(g).values()) == {None}


def test_set_metadata_unknown_attribute(meta_cat):
    g, _ = meta_cat.register_file(P1)
    with pytest.raises(InvalidArgumentError):
        meta_cat.set_metadata(g, "nope", 1)


def test_set_metadata_unknown_file_id(meta_cat):
    with pytest.raises(NotFoundError):
        meta_cat.set_metadata(generate_file_id(), "jobid", 1)


def test_fresh_entry_has_all_null_row(meta_cat):
    g, _ = meta_cat.register_file(P1)
    assert meta_cat.get_metadata(g) == {"jobid": None, "owner": None, "energy": None, "good": None}


def test_two_sets_fill_two_values(meta_cat):
    g, _ = meta_cat.register_file(P1)
    meta_cat.set_metadata(g, "owner", "alice")
    meta_cat.set_metadata(g, "good", False)
    assert meta_cat.get_metadata(g) == {"jobid": None, "owner": "alice", "energy": None, "good": False}


def test_metadata_of_deleted_entry(meta_cat):
    g, _ = meta_cat.register_file(P1)
    meta_cat.set_metadata(g, "jobid", 1)
    meta_cat.delete_entry(g)
    with pytest.raises(NotFoundError):
        meta_cat.get_metadata(g)


def test_int_widens_to_float(meta_cat):
    g, _ = meta_cat.register_file(P1)
    meta_cat.set_metadata(g, "energy", 3)
    value = meta_cat.get_metadata(g)["energy"]
    assert value == 3.0 and isinstance(value, float)


def test_value_ranges(meta_cat):
    g, _ = meta_cat.register_file(P1)
    meta_cat.set_metadata(g, "jobid", 2**63 - 1)
    meta_cat.set_metadata(g, "energy", -1.5e300)
    assert meta_cat.get_metadata(g)["jobid"] == 2**63 - 1
    assert meta_cat.get_metadata(g)["energy"] == -1.5e300
    for attr, value in (("jobid", 2**63), ("energy", float("nan")), ("energy", float("inf")), ("jobid", None)):
        with pytest.raises(InvalidArgumentError):
            meta_cat.set_metadata(g, attr, value)


def test_string_values_round_trip(meta_cat):
    g, _ = meta_cat.register_file(P1)
    text = "O'Brien <&> \"quoted\"\tnaïve ☃ 𝄞"
    meta_cat.set_metadata(g, "owner", text)
    assert meta_cat.get_metadata(g)["owner"] == text
    assert guids(meta_cat, "owner = " + "'" + text.replace("'", "''") + "'") == {g}


# --------------------------------------------------------------------- deletion


def test_delete_entry_removes_it(cat):
    g, _ = cat.register_file(P1)
    cat.register_file(P2)
    cat.delete_entry(g)
    assert g not in guids(cat) and cat.count() == 1


def test_delete_entry_cascades_to_replicas(cat):
    g, _ = cat.register_file(P1)
    cat.add_replica(g, P2)
    cat.delete_entry(g)
    for name in (P1, P2):
        with pytest.raises(NotFoundError):
            cat.lookup_file_id(name)


def test_delete_entry_twice(cat):
    g, _ = cat.register_file(P1)
    cat.delete_entry(g)
    with pytest.raises(NotFoundError):
        cat.delete_entry(g)


def test_deleted_file_id_is_not_reused(cat):
    g, _ = cat.register_file(P1)
    cat.delete_entry(g)
    g2, created = cat.register_file(P1)
    assert created and g2 != g


def test_delete_master_promotes_next(cat):
    g, _ = cat.register_file(P1)
    cat.add_replica(g, P2)
    cat.delete_pfn(P1)
    assert cat.lookup_best_pfn(g).name == P2
    assert cat.lookup_file_id(P2) == g


def test_delete_only_replica_removes_entry(cat):
    g, _ = cat.register_file(P1)
    cat.add_lfn(g, "alias")
    cat.delete_pfn(P1)
    assert cat.count() == 0
    with pytest.raises(NotFoundError):
        cat.lookup_by_lfn("alias")


def test_delete_unknown_pfn(cat):
    with pytest.raises(NotFoundError):
        cat.delete_pfn("file:/nowhere")


def test_rename_pfn_keeps_file_id(cat):
    g, _ = cat.register_file(P1, "ROOT")
    assert cat.rename_pfn(P1, P3) == g
    assert cat.lookup_file_id(P3) == g
    assert cat.lookup_all_pfns(g) == [PFN(P3, "ROOT")]
    with pytest.raises(NotFoundError):
        cat.lookup_file_id(P1)


def test_rename_pfn_onto_existing_name_changes_nothing(cat):
    g1, _ = cat.register_file(P1)
    cat.register_file(P2)
    before = catalog_state(cat)
    with pytest.raises(DuplicateError):
        cat.rename_pfn(P1, P2)
    assert catalog_state(cat) == before and cat.lookup_file_id(P1) == g1


# --------------------------------------------------------------------- enumeration


def test_enumerate_empty(cat):
    assert list(cat.enumerate()) == []


def test_enumerate_all(cat):
    ids = {cat.register_file(f"file:/x/{i}")[0] for i in range(25)}
    assert guids(cat) == ids and cat.count() == 25


def test_enumerate_by_metadata_matches_oracle(meta_cat):
    rng = random.Random(11)
    expected = set()
    for i in range(40):
        g, _ = meta_cat.register_file(f"file:/job/{i}")
        if rng.random() < 0.8:
            v = rng.randint(5, 9)
            meta_cat.set_metadata(g, "jobid", v)
            if v == 7:
                expected.add(g)
    assert guids(meta_cat, "jobid = 7") == expected
    assert meta_cat.count("jobid = 7") == len(expected)


def test_enumerate_by_guid(cat):
    g, _ = cat.register_file(P1)
    cat.register_file(P2)
    assert guids(cat, f"guid = '{g}'") == {g}
    assert guids(cat, f"guid = '{g.upper()}'") == {g}


def test_enumerate_pfname_matches_any_replica(cat):
    g, _ = cat.register_file(P1)
    cat.add_replica(g, P2)
    cat.register_file("file:/other")
    assert guids(cat, "pfname LIKE 'rfio:%'") == {g}
    assert guids(cat, "pfname = 'file:/d/a.root'") == {g}
    assert len(guids(cat, "NOT pfname LIKE 'rfio:%'")) == 1


def test_enumerate_lfname(cat):
    g, _ = cat.register_file(P1)
    cat.add_lfn(g, "run7.evts")
    cat.register_file(P2)
    assert guids(cat, "lfname = 'run7.evts'") == {g}
    assert guids(cat, "lfname LIKE 'run_.%'") == {g}


def test_enumerate_null_semantics(meta_cat):
    a, _ = meta_cat.register_file("file:/a")
    b, _ = meta_cat.register_file("file:/b")
    meta_cat.set_metadata(a, "jobid", 7)
    assert guids(meta_cat, "jobid != 7") == set()
    assert guids(meta_cat, "NOT jobid = 7") == {b}
    assert guids(meta_cat, "NOT (jobid = 7 OR jobid != 7)") == {b}


def test_enumerate_type_error(meta_cat):
    meta_cat.register_file(P1)
    for bad in ("jobid = 'x'", "jobid = 1.5", "nope = 1", "jobid LIKE '1%'", "good = 1"):
        with pytest.raises(QueryTypeError):
            list(meta_cat.enumerate(bad))


def test_enumerate_syntax_error_column(meta_cat):
    with pytest.raises(QuerySyntaxError) as info:
        list(meta_cat.enumerate("jobid = "))
    assert info.value.column == 9


def test_enumerate_float_widening(meta_cat):
    g, _ = meta_cat.register_file(P1)
    meta_cat.set_metadata(g, "energy", 2.5)
    assert guids(meta_cat, "energy > 2") == {g}
    assert guids(meta_cat, "energy < 2.5") == set()


def test_enumerate_like_is_case_sensitive_and_literal(meta_cat):
    g, _ = meta_cat.register_file(P1)
    meta_cat.set_metadata(g, "owner", "Ab*[x]?")
    assert guids(meta_cat, "owner LIKE 'ab%'") == set()
    assert guids(meta_cat, "owner LIKE 'Ab*[x]_'") == {g}
    assert guids(meta_cat, "owner LIKE 'A%?'") == {g}


def test_enumerate_random_predicates_match_oracle(meta_cat):
    rng = random.Random(3)
    ref_rows = {}
    for i in range(60):
        g, _ = meta_cat.register_file(f"file:/r/{i}")
        row = {}
        if rng.random() < 0.7:
            row["jobid"] = rng.randint(-3, 3)
        if rng.random() < 0.7:
            row["owner"] = rng.choice(["alice", "bob", "Bob", "a_b", "50%"])
        if rng.random() < 0.7:
            row["energy"] = rng.choice([-1.0, 0.0, 0.5, 2.25])
        if rng.random() < 0.7:
            row["good"] = rng.random() < 0.5
        for k, v in row.items():
            meta_cat.set_metadata(g, k, v)
        ref_rows[g] = dict(row, guid=g, pfname=[f"file:/r/{i}"], lfname=[])
    view = {"jobid": "int", "owner": "string", "energy": "float", "good": "bool"}
    pool = {"owner": {"string": ["alice", "bob", "Bob", "a_b", "50%"]}, "jobid": {"int": [-3, 0, 3]}}
    for _ in range(40):
        p = random_predicate(rng, view, pool)
        expected = {g for g, row in ref_rows.items() if holds(p, row)}
        assert guids(meta_cat, render(p)) == expected, render(p)


# --------------------------------------------------------------------- transactions


def test_rollback_discards_registration(cat):
    cat.start_transaction()
    cat.register_file(P1)
    cat.rollback()
    with pytest.raises(NotFoundError):
        cat.lookup_file_id(P1)


def test_commit_is_visible_after_reopen(backends):
    cat = backends.open()
    cat.start_transaction()
    g, _ = cat.register_file(P1)
    cat.add_lfn(g, "alias")
    cat.commit()
    cat.close()
    again = backends.open(mode="read")
    assert again.lookup_file_id(P1) == g and again.lookup_by_lfn("alias") == g


def test_explicit_mode_requires_transaction(explicit_cat):
    with pytest.raises(InvalidStateError):
        explicit_cat.register_file(P1)
    explicit_cat.start_transaction()
    g, _ = explicit_cat.register_file(P1)
    explicit_cat.commit()
    assert explicit_cat.lookup_file_id(P1) == g


def test_explicit_mode_allows_reads(explicit_cat):
    assert explicit_cat.count() == 0
    with pytest.raises(NotFoundError):
        explicit_cat.lookup_file_id(P1)


def test_nested_start_is_invalid(cat):
    cat.start_transaction()
    with pytest.raises(InvalidStateError):
        cat.start_transaction()
    cat.rollback()


def test_commit_and_rollback_need_transaction(cat):
    with pytest.raises(InvalidStateError):
        cat.commit()
    with pytest.raises(InvalidStateError):
        cat.rollback()


def test_transaction_context_rolls_back_on_error(cat):
    with pytest.raises(RuntimeError):
        with cat.transaction():
            cat.register_file(P1)
            raise RuntimeError("boom")
    assert cat.count() == 0 and not cat.in_transaction


def test_failed_operation_inside_transaction_keeps_earlier_work(cat):
    cat.start_transaction()
    g, _ = cat.register_file(P1)
    with pytest.raises(DuplicateError):
        cat.add_replica(g, P1)
    cat.add_replica(g, P2)
    cat.commit()
    assert [p.name for p in cat.lookup_all_pfns(g)] == [P1, P2]


def test_transaction_reads_its_own_writes(meta_cat):
    meta_cat.start_transaction()
    g, _ = meta_cat.register_file(P1)
    meta_cat.set_metadata(g, "jobid", 7)
    assert meta_cat.lookup_file_id(P1) == g
    assert guids(meta_cat, "jobid = 7") == {g}
    assert meta_cat.register_file(P1) == (g, False)
    meta_cat.rollback()
    assert meta_cat.count() == 0


def test_rollback_restores_deleted_entry(meta_cat):
    g, _ = meta_cat.register_file(P1)
    meta_cat.add_replica(g, P2)
    meta_cat.add_lfn(g, "alias")
    meta_cat.set_metadata(g, "owner", "alice")
    before = catalog_state(meta_cat)
    meta_cat.start_transaction()
    meta_cat.delete_pfn(P1)
    meta_cat.set_metadata(g, "owner", "bob")
    meta_cat.delete_entry(g)
    meta_cat.rollback()
    assert catalog_state(meta_cat) == before


def test_rollback_restores_schema(cat):
    cat.define_metadata_schema([("a", "int")])
    cat.start_transaction()
    cat.define_metadata_schema([("b", "string")])
    cat.rollback()
    assert cat.get_schema().pairs() == [("a", "int")]


def test_closed_handle_is_invalid(cat):
    cat.close()
    with pytest.raises(InvalidStateError):
        cat.register_file(P1)
    cat.close()


def test_close_discards_open_transaction(backends):
    cat = backends.open()
    cat.start_transaction()
    cat.register_file(P1)
    cat.close()
    again = backends.open()
    with pytest.raises(NotFoundError):
        again.lookup_file_id(P1)


def test_apply_batch_is_atomic(cat):
    g, _ = cat.register_file(P1)
    before = catalog_state(cat)
    ops = [
        {"op": "add_replica", "guid": g, "pfn": P2},
        {"op": "add_lfn", "guid": g, "lfn": "alias"},
        {"op": "add_replica", "guid": g, "pfn": P1},
    ]
    with pytest.raises(DuplicateError):
        cat.apply_batch(ops)
    assert catalog_state(cat) == before
    assert cat.apply_batch(ops[:2]) == [None, None]
    assert cat.lookup_by_lfn("alias") == g


def test_read_batch_captures_errors(cat):
    g, _ = cat.register_file(P1)
    out = cat.read_batch([{"op": "lookup_file_id", "pfn": P1}, {"op": "lookup_file_id", "pfn": P2}])
    assert out[0] == g and isinstance(out[1], NotFoundError)


# --------------------------------------------------------------------- randomized sequences


def _random_ops(rng: random.Random, n: int, pfns, lfns, ids):
    schema_choices = [[("a", "int"), ("s", "string")], [("a", "float")], []]
    for _ in range(n):
        kind = rng.choices(
            ["register", "create", "replica", "lfn", "delete", "delete_pfn", "set", "schema"],
            [6, 1, 4, 3, 1, 2, 4, 1],
        )[0]
        if kind == "register":
            yield ("register", rng.choice(pfns), rng.choice([None, "T"]), rng.choice(ids))
        elif kind == "create":
            yield ("create", rng.choice(ids), rng.choice(pfns))
        elif kind == "replica":
            yield ("replica", rng.choice(ids), rng.choice(pfns))
        elif kind == "lfn":
            yield ("lfn", rng.choice(ids), rng.choice(lfns))
        elif kind == "delete":
            yield ("delete", rng.choice(ids))
        elif kind == "delete_pfn":
            yield ("delete_pfn", rng.choice(pfns))
        elif kind == "set":
            yield ("set", rng.choice(ids), rng.choice(["a", "s", "x"]), rng.choice([1, 2, 2.5, "v", True]))
        else:
            yield ("schema", rng.choice(schema_choices))


def apply_op(target, op):
    """Run ``op`` on a catalog or on RefCatalog; returns the result or the error kind."""
    from filecatalog.errors import CatalogError

    kind = op[0]
    try:
        if isinstance(target, RefCatalog):
            if kind == "register":
                return target.register(op[1], op[2], op[3])
            if kind == "create":
                return target.create_entry(op[1], op[2], None)
            if kind == "replica":
                return target.add_replica(op[1], op[2], None)
            if kind == "lfn":
                return target.add_lfn(op[1], op[2])
            if kind == "delete":
                return target.delete_entry(op[1])
            if kind == "delete_pfn":
                return target.delete_pfn(op[1])
            if kind == "set":
                return target.set_metadata(op[1], op[2], op[3])
            return target.define_schema(op[1])
        if kind == "register":
            return target.register_file(op[1], op[2], file_id=op[3])
        if kind == "create":
            return target.create_entry(op[1], op[2])
        if kind == "replica":
            return target.add_replica(op[1], op[2])
        if kind == "lfn":
            return target.add_lfn(op[1], op[2])
        if kind == "delete":
            return target.delete_entry(op[1])
        if kind == "delete_pfn":
            return target.delete_pfn(op[1])
        if kind == "set":
            return target.set_metadata(op[1], op[2], op[3])
        return target.define_metadata_schema(op[1])
    except RefError as exc:
        return exc.kind
    except CatalogError as exc:
        return "invalid" if isinstance(exc, InvalidArgumentError) else exc.kind


def test_random_sequences_match_reference_model(cat):
    rng = random.Random(2024)
    pfns = [f"file:/p{i}" for i in range(8)]
    lfns = [f"l{i}" for i in range(5)]
    ids = [generate_file_id() for _ in range(5)]
    ref = RefCatalog()
    for step, op in enumerate(_random_ops(rng, 300, pfns, lfns, ids)):
        got, want = apply_op(cat, op), apply_op(ref, op)
        assert got == want, (step, op)
        if step % 25 == 0:
            assert catalog_state(cat) == ref.state(), step
    assert catalog_state(cat) == ref.state()
    expected_lookups = (
        tuple(ref.owner_of_pfn(p) or "not-found" for p in pfns),
        tuple(ref.owner_of_lfn(x) or "not-found" for x in lfns),
    )
    assert lookup_state(cat, pfns, lfns) == expected_lookups
