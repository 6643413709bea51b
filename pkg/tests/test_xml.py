from __future__ import annotations

import os
import subprocess
import sys
import textwrap
import xml.etree.ElementTree as ET

import pytest

from filecatalog import XmlCatalog
from filecatalog.catalog import CollectionRow
from filecatalog.model import Token
from filecatalog.errors import (
    CatalogIOError,
    ConflictError,
    CorruptCatalogError,
    InvalidArgumentError,
    NotFoundError,
)
from filecatalog.xmlcatalog import parse_catalog_xml
from helpers import catalog_state, full_state

SRC = os.path.join(os.path.dirname(__file__), "..", "src")


@pytest.fixture
def path(tmp_path):
    return tmp_path / "cat.xml"


def populate(cat):
    cat.define_metadata_schema([("jobid", "int"), ("owner", "string"), ("w", "float"), ("ok", "bool")])
    g, _ = cat.register_file("file:/a&b<c>\"d'.root", "ROOT_All")
    cat.add_replica(g, "rfio:/x y/é中\U0001d11e")
    cat.add_lfn(g, "lfn\twith\ttabs")
    cat.set_metadata(g, "owner", "<&>\"'\n\r\t ")
    cat.set_metadata(g, "w", 0.1)
    cat.set_metadata(g, "ok", True)
    h, _ = cat.register_file("file:/plain")
    cat.set_metadata(h, "jobid", -(2**63))
    return g, h


def test_document_layout(path):
    cat = XmlCatalog(path, "create")
    g, _ = populate(cat)
    cat.close()
    text = path.read_text("utf-8")
    assert text.startswith('<?xml version="1.0" encoding="UTF-8" standalone="no" ?>')
    root = ET.fromstring(text.encode())
    assert root.tag == "POOLFILECATALOG"
    assert [(m.get("name"), m.get("type")) for m in root.iter("META")] == [
        ("jobid", "int"), ("owner", "string"), ("w", "float"), ("ok", "bool")
    ]
    f = next(x for x in root.iter("File") if x.get("ID") == g)
    assert [p.get("filetype") for p in f.iterfind("physical/pfn")] == ["ROOT_All", ""]
    assert {m.get("att_name"): m.get("att_value") for m in f.iterfind("metadata")} == {
        "owner": "<&>\"'\n\r\t ", "w": "0.1", "ok": "true"
    }


def test_escaping_round_trip(path):
    cat = XmlCatalog(path, "create")
    populate(cat)
    before = catalog_state(cat)
    cat.close()
    assert catalog_state(XmlCatalog(path, "read")) == before


def test_parse_of_hand_written_document(tmp_path):
    doc = tmp_path / "hand.xml"
    doc.write_text(
        textwrap.dedent(
            """\
            <?xml version="1.0" encoding="UTF-8" standalone="no" ?>
            <!-- produced elsewhere -->
            <POOLFILECATALOG>
              <META name="run" type="int"/>
              <File ID="1FC372E5-0C89-4C3F-9F2E-6A1B2C3D4E5F">
                <physical><pfn filetype="" name="file:/x"/><pfn name="file:/y"/></physical>
                <logical/>
                <metadata att_name="run" att_value="12"/>
              </File>
            </POOLFILECATALOG>
            """
        )
    )
    cat = XmlCatalog(doc, "read")
    g = "1fc372e5-0c89-4c3f-9f2e-6a1b2c3d4e5f"
    assert cat.lookup_file_id("file:/y") == g
    assert cat.lookup_best_pfn(g).name == "file:/x"
    assert cat.get_metadata(g) == {"run": 12}


@pytest.mark.parametrize(
    "body, fragment",
    [
        ("<POOLFILECATALOG><File ID='x'>", "line"),
        ("<OTHER/>", "root element"),
        ("<POOLFILECATALOG><File ID='nope'/></POOLFILECATALOG>", "malformed file id"),
        ("<POOLFILECATALOG><META name='a' type='decimal'/></POOLFILECATALOG>", "type"),
        (
            "<POOLFILECATALOG><File ID='1fc372e5-0c89-4c3f-9f2e-6a1b2c3d4e5f'><physical><pfn name='a'/></physical>"
            "<metadata att_name='x' att_value='1'/></File></POOLFILECATALOG>",
            "not declared",
        ),
        (
            "<POOLFILECATALOG><META name='x' type='int'/><File ID='1fc372e5-0c89-4c3f-9f2e-6a1b2c3d4e5f'>"
            "<physical><pfn name='a'/></physical><metadata att_name='x' att_value='one'/></File></POOLFILECATALOG>",
            "decode",
        ),
        (
            "<POOLFILECATALOG><File ID='1fc372e5-0c89-4c3f-9f2e-6a1b2c3d4e5f'><physical><pfn name='a'/></physical></File>"
            "<File ID='2fc372e5-0c89-4c3f-9f2e-6a1b2c3d4e5f'><physical><pfn name='a'/></physical></File></POOLFILECATALOG>",
            "",
        ),
    ],
)
def test_corrupt_documents_are_rejected(path, body, fragment):
    path.write_text(body)
    with pytest.raises(CorruptCatalogError) as info:
        XmlCatalog(path, "read")
    assert fragment in str(info.value)
    assert not path.with_name(path.name + ".lock").exists()


def test_open_modes(path):
    with pytest.raises(NotFoundError):
        XmlCatalog(path, "update")
    with pytest.raises(NotFoundError):
        XmlCatalog(path, "read")
    with pytest.raises(InvalidArgumentError):
        XmlCatalog(path, "append")
    cat = XmlCatalog(path, "create")
    assert not path.exists()  # nothing written before the first commit
    cat.register_file("file:/a")
    cat.close()
    with pytest.raises(InvalidArgumentError):
        XmlCatalog(path, "create")


def test_second_writer_is_locked_out(path):
    w = XmlCatalog(path, "create")
    w.register_file("file:/a")
    with pytest.raises(ConflictError):
        XmlCatalog(path, "update")
    r = XmlCatalog(path, "read")  # readers never take the lock
    assert r.count() == 1
    w.close()
    XmlCatalog(path, "update").close()


def test_external_modification_is_detected(path):
    w = XmlCatalog(path, "create")
    w.register_file("file:/a")
    original = path.read_bytes()
    path.write_bytes(original.replace(b"</POOLFILECATALOG>", b"<!-- edited --></POOLFILECATALOG>"))
    with pytest.raises(ConflictError):
        w.register_file("file:/b")
    assert b"edited" in path.read_bytes()
    # handle stays at its committed state
    assert w.count() == 1


def test_failed_replace_leaves_file_and_handle_intact(path, monkeypatch):
    cat = XmlCatalog(path, "create")
    populate(cat)
    on_disk = path.read_bytes()
    before = catalog_state(cat)

    def boom(src, dst):
        raise OSError(28, "No space left on device")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(CatalogIOError):
        cat.register_file("file:/new")
    cat.start_transaction()
    cat.register_file("file:/new2")
    with pytest.raises(CatalogIOError):
        cat.commit()
    monkeypatch.undo()
    assert path.read_bytes() == on_disk
    assert catalog_state(cat) == before and not cat.in_transaction
    assert not [p for p in path.parent.iterdir() if ".tmp-" in p.name]
    cat.register_file("file:/after")
    assert cat.count() == 3


def _run(code: str) -> subprocess.CompletedProcess:
    env = dict(os.environ, PYTHONPATH=SRC)
    return subprocess.run([sys.executable, "-c", textwrap.dedent(code)], env=env, capture_output=True, text=True)


def test_killed_writer_leaves_previous_document(path):
    cat = XmlCatalog(path, "create")
    populate(cat)
    before = catalog_state(cat)
    cat.close()
    proc = _run(
        f"""
        import os
        from filecatalog import XmlCatalog
        cat = XmlCatalog({str(path)!r}, "update")
        os.replace = lambda *a: os._exit(9)
        cat.register_file("file:/never")
        """
    )
    assert proc.returncode == 9, proc.stderr
    # stale lock from a dead process is reclaimed
    again = XmlCatalog(path, "update")
    assert catalog_state(again) == before
    again.register_file("file:/now")
    assert again.count() == 3


def test_committed_work_survives_process_exit(path):
    proc = _run(
        f"""
        import os
        from filecatalog import XmlCatalog
        cat = XmlCatalog({str(path)!r}, "create", autocommit=False)
        cat.start_transaction()
        cat.register_file("file:/kept")
        cat.commit()
        cat.start_transaction()
        cat.register_file("file:/lost")
        os._exit(0)
        """
    )
    assert proc.returncode == 0, proc.stderr
    cat = XmlCatalog(path, "read")
    assert [p.name for e in cat.enumerate() for p in e.pfns] == ["file:/kept"]


def test_collections_sidecar_round_trip(path):
    cat = XmlCatalog(path, "create")
    g, h = populate(cat)
    cat.create_collection("evts", [("e", "float"), ("tag", "string")], metadata={"run": 3, "w": 1.5})
    cat.insert_rows(
        "evts",
        [CollectionRow(Token(g, "c", 0), {"e": 1.0, "tag": "a&b"}), CollectionRow(Token(h, "c", 1), {})],
    )
    cat.register_container_index(g, "c", 5)
    before = full_state(cat)
    cat.close()
    assert path.with_name("cat.xml.collections.xml").exists()
    assert full_state(XmlCatalog(path, "read")) == before


def test_parse_catalog_xml_matches_handle(path):
    cat = XmlCatalog(path, "create")
    populate(cat)
    cat.close()
    schema, entries = parse_catalog_xml(path)
    assert len(entries) == 2 and schema.names() == ["jobid", "owner", "w", "ok"]
