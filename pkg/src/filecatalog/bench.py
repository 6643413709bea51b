"""Registration throughput harness.

Registers synthetic PFNs through any backend with a fixed commit interval and
a number of concurrent sessions, then verifies the result and times a fresh
open of the populated catalog.
"""

from __future__ import annotations

import random
import statistics
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Any

from .connect import ConnectionString, open_catalog
from .errors import CatalogError, InvalidArgumentError


@dataclass(frozen=True)
class BenchConfig:
    catalog: str
    n_entries: int
    commit_interval: int = 100
    n_clients: int = 1
    pfn_length: int = 200
    seed: int = 0

    def validate(self) -> None:
        cs = ConnectionString.parse(self.catalog)
        if self.n_entries < 1:
            raise InvalidArgumentError("n_entries must be at least 1")
        if self.commit_interval < 1:
            raise InvalidArgumentError("commit_interval must be at least 1")
        if self.n_clients < 1:
            raise InvalidArgumentError("n_clients must be at least 1")
        if self.pfn_length < len(_tag(self.n_entries - 1)) + 1:
            raise InvalidArgumentError(f"pfn_length {self.pfn_length} is too short for {self.n_entries} distinct names")
        if cs.scheme == "xmlcatalog_file" and self.n_clients > 1:
            raise InvalidArgumentError("an XML catalog admits one writing session; use n_clients=1")


@dataclass
class BenchReport:
    config: BenchConfig
    registered: int = 0
    mean_ms: float = 0.0
    median_ms: float = 0.0
    p95_ms: float = 0.0
    total_s: float = 0.0
    load_s: float = 0.0
    verified: bool = False
    errors: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.verified and not self.errors

    def as_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["config"] = asdict(self.config)
        out["valid"] = self.valid
        return out


def _tag(i: int) -> str:
    return f"/{i:x}"


def synthetic_pfns(n: int, length: int = 200, seed: int = 0) -> list[str]:
    """``n`` distinct PFN names of exactly ``length`` characters; a function of the seed."""
    rng = random.Random(seed)
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789_"
    pool = "".join(rng.choice(alphabet) for _ in range(4096))
    pool += pool
    prefix = "file:/bench/"
    names = []
    for i in range(n):
        tag = _tag(i)
        body = length - len(tag)
        start = rng.randrange(4096)
        text = (prefix + pool[start : start + max(0, body - len(prefix))])[:body]
        names.append(text + tag)
    return names


def _percentile(sorted_values: list[float], q: float) -> float:
    if not sorted_values:
        return 0.0
    k = max(0, min(len(sorted_values) - 1, round(q * (len(sorted_values) - 1))))
    return sorted_values[k]


def _client(cfg: BenchConfig, names: list[str], latencies: list[float], errors: list[str]) -> None:
    try:
        cat = open_catalog(cfg.catalog, autocommit=False)
    except CatalogError as exc:
        errors.append(f"open failed: {exc}")
        return
    try:
        clock = time.perf_counter
        for start in range(0, len(names), cfg.commit_interval):
            chunk = names[start : start + cfg.commit_interval]
            times = []
            cat.start_transaction()
            for name in chunk:
                t0 = clock()
                cat.register_file(name)
                times.append(clock() - t0)
            t0 = clock()
            cat.commit()
            share = (clock() - t0) / len(chunk)
            latencies.extend(t + share for t in times)
    except CatalogError as exc:
        errors.append(f"{type(exc).__name__}: {exc}")
    finally:
        try:
            cat.close()
        except CatalogError as exc:
            errors.append(f"close failed: {exc}")


def _verify(cfg: BenchConfig, names: list[str], report: BenchReport) -> None:
    t0 = time.perf_counter()
    cat = open_catalog(cfg.catalog, "read")
    report.load_s = time.perf_counter() - t0
    with cat:
        seen: set[str] = set()
        guids: set[str] = set()
        entries = 0
        for entry in cat.enumerate():
            entries += 1
            guids.add(entry.file_id)
            for p in entry.pfns:
                if p.name in seen:
                    report.errors.append(f"PFN {p.name!r} registered twice")
                seen.add(p.name)
    expected = set(names)
    report.verified = entries == len(names) and len(guids) == entries and seen == expected
    if entries != len(names):
        report.errors.append(f"catalog holds {entries} entries, expected {len(names)}")
    elif seen != expected:
        report.errors.append("registered PFN set differs from the workload")


def run_registration_bench(cfg: BenchConfig) -> BenchReport:
    """Register ``cfg.n_entries`` PFNs into an empty catalog and measure."""
    cfg.validate()
    with open_catalog(cfg.catalog) as cat:
        if cat.count() != 0:
            raise InvalidArgumentError(f"{cfg.catalog} is not empty; the bench needs a fresh catalog")
    names = synthetic_pfns(cfg.n_entries, cfg.pfn_length, cfg.seed)
    report = BenchReport(cfg)
    shards = [names[i :: cfg.n_clients] for i in range(cfg.n_clients)]
    per_client: list[list[float]] = [[] for _ in shards]
    errors: list[str] = []

    t0 = time.perf_counter()
    if cfg.n_clients == 1:
        _client(cfg, shards[0], per_client[0], errors)
    else:
        threads = [
            threading.Thread(target=_client, args=(cfg, shard, lat, errors), name=f"bench-client-{i}")
            for i, (shard, lat) in enumerate(zip(shards, per_client))
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    report.total_s = time.perf_counter() - t0

    latencies = sorted(x for lat in per_client for x in lat)
    report.registered = len(latencies)
    report.errors.extend(errors)
    if latencies:
        report.mean_ms = statistics.fmean(latencies) * 1e3
        report.median_ms = statistics.median(latencies) * 1e3
        report.p95_ms = _percentile(latencies, 0.95) * 1e3
    _verify(cfg, names, report)
    return report
