from __future__ import annotations

import pytest

from filecatalog import open_catalog
from filecatalog.bench import BenchConfig, run_registration_bench, synthetic_pfns
from filecatalog.errors import InvalidArgumentError


def test_synthetic_names_are_exact_distinct_and_seeded():
    names = synthetic_pfns(5000, 200, seed=3)
    assert {len(n) for n in names} == {200}
    assert len(set(names)) == 5000
    assert names == synthetic_pfns(5000, 200, seed=3)
    assert names != synthetic_pfns(5000, 200, seed=4)
    assert {len(n) for n in synthetic_pfns(50, 8)} == {8}


@pytest.mark.parametrize("clients", [1, 3])
def test_bench_runs_and_verifies(backends, clients):
    if backends.kind == "xml" and clients > 1:
        pytest.skip("XML admits one writer")
    cfg = BenchConfig(backends.connection_string("bench"), 250, commit_interval=40, n_clients=clients)
    report = run_registration_bench(cfg)
    assert report.valid, report.errors
    assert report.registered == 250
    assert 0 < report.median_ms <= report.p95_ms
    assert report.total_s > 0 and report.load_s > 0
    d = report.as_dict()
    assert d["valid"] is True and d["config"]["n_entries"] == 250


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_entries": 0},
        {"n_entries": 10, "commit_interval": 0},
        {"n_entries": 10, "n_clients": 0},
        {"n_entries": 100000, "pfn_length": 4},
    ],
)
def test_invalid_configs(tmp_path, kwargs):
    with pytest.raises(InvalidArgumentError):
        run_registration_bench(BenchConfig(f"embedded:{tmp_path / 'x.db'}", **kwargs))


def test_xml_rejects_many_clients(tmp_path):
    with pytest.raises(InvalidArgumentError):
        BenchConfig(f"xmlcatalog_file:{tmp_path / 'x.xml'}", 10, n_clients=2).validate()


def test_bench_needs_empty_catalog(tmp_path):
    cs = f"embedded:{tmp_path / 'x.db'}"
    with open_catalog(cs, "create") as cat:
        cat.register_file("file:/already")
    with pytest.raises(InvalidArgumentError):
        run_registration_bench(BenchConfig(cs, 10))
