"""Static architecture analysis: manifest parsing into a system model and
the twelve architecture-level smell rules.

Rule thresholds come from the catalog entry's default_params, overridable
per deployment through StaticDetectionConfig.
"""

from __future__ import annotations

import json
import re
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO

from .catalog import Catalog
from .records import SYSTEM_SCOPE, DetectionRecord, make_record

ROLES = ("service", "gateway", "message_bus")
DEPENDENCY_VIAS = ("http", "bus", "db")

_VERSIONED_PATH_RE = re.compile(r"(^|/)v\d+(/|$)")

STATIC_SMELL_IDS = (
    "esb-usage",
    "microservice-greedy",
    "no-api-gateway",
    "no-api-versioning",
    "hardcoded-endpoints",
    "shared-persistence",
    "cyclic-dependency",
    "hub-like-dependency",
    "shared-libraries",
    "mega-service",
    "nano-service",
    "long-service-chain-static",
)


class ManifestError(ValueError):
    """A manifest document is malformed or inconsistent with the model."""


@dataclass(frozen=True)
class Endpoint:
    path: str
    http_method: str
    version_label: str | None = None

    def is_versioned(self) -> bool:
        if self.version_label:
            return True
        return bool(_VERSIONED_PATH_RE.search(self.path))


@dataclass(frozen=True)
class Dependency:
    target: str
    via: str

    def is_hardcoded(self) -> bool:
        return "://" in self.target


@dataclass(frozen=True)
class Library:
    name: str
    category: str  # business | utility


@dataclass
class ServiceManifest:
    name: str
    version: str = "0.0.0"
    role: str = "service"
    endpoints: list[Endpoint] = field(default_factory=list)
    dependencies: list[Dependency] = field(default_factory=list)
    datastores: list[str] = field(default_factory=list)
    libraries: list[Library] = field(default_factory=list)
    loc: int = 0
    entity_count: int = 0


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    via: str
    hardcoded: bool = False


@dataclass
class SystemModel:
    services: list[ServiceManifest]
    edges: list[Edge]
    datastore_bindings: dict[str, set[str]]

    def service_names(self) -> list[str]:
        return [s.name for s in self.services]

    def get(self, name: str) -> ServiceManifest | None:
        for svc in self.services:
            if svc.name == name:
                return svc
        return None

    def service_edges(self) -> list[Edge]:
        """Edges between named services (hardcoded URL targets excluded)."""
        return [e for e in self.edges if not e.hardcoded]


def parse_manifest(source: bytes | str | dict) -> ServiceManifest:
    if isinstance(source, (bytes, str)):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest is not valid JSON: line {exc.lineno}: {exc.msg}") from exc
    else:
        doc = source
    if not isinstance(doc, dict) or "name" not in doc:
        raise ManifestError("manifest requires a 'name' field")
    role = doc.get("role", "service")
    if role not in ROLES:
        raise ManifestError(f"{doc['name']}: role {role!r} not one of {ROLES}")
    endpoints = []
    for i, raw in enumerate(doc.get("endpoints") or []):
        if "path" not in raw or "http_method" not in raw:
            raise ManifestError(f"{doc['name']}: endpoints[{i}] requires path and http_method")
        endpoints.append(Endpoint(
            path=raw["path"], http_method=raw["http_method"],
            version_label=raw.get("version_label")))
    dependencies = []
    for i, raw in enumerate(doc.get("dependencies") or []):
        via = raw.get("via", "http")
        if via not in DEPENDENCY_VIAS:
            raise ManifestError(f"{doc['name']}: dependencies[{i}] via {via!r} not one of {DEPENDENCY_VIAS}")
        if "target" not in raw:
            raise ManifestError(f"{doc['name']}: dependencies[{i}] requires target")
        dependencies.append(Dependency(target=raw["target"], via=via))
    libraries = []
    for i, raw in enumerate(doc.get("libraries") or []):
        category = raw.get("category", "utility")
        if category not in ("business", "utility"):
            raise ManifestError(f"{doc['name']}: libraries[{i}] category must be business or utility")
        libraries.append(Library(name=raw["name"], category=category))
    loc = int(doc.get("loc", 0))
    if loc < 0:
        raise ManifestError(f"{doc['name']}: loc must be non-negative")
    return ServiceManifest(
        name=doc["name"],
        version=str(doc.get("version", "0.0.0")),
        role=role,
        endpoints=endpoints,
        dependencies=dependencies,
        datastores=list(doc.get("datastores") or []),
        libraries=libraries,
        loc=loc,
        entity_count=int(doc.get("entity_count", 0)),
    )


def parse_manifests(sources: list[bytes | str | dict | BinaryIO]) -> SystemModel:
    """Build a SystemModel from manifest documents, deterministic by name."""
    manifests = []
    for source in sources:
        if hasattr(source, "read"):
            source = source.read()
        manifests.append(parse_manifest(source))
    manifests.sort(key=lambda m: m.name)

    names = set()
    for m in manifests:
        if m.name in names:
            raise ManifestError(f"duplicate service name {m.name!r}")
        names.add(m.name)

    bindings: dict[str, set[str]] = {}
    for m in manifests:
        for ds in m.datastores:
            bindings.setdefault(ds, set()).add(m.name)

    edges = []
    for m in manifests:
        for dep in m.dependencies:
            if dep.via == "db":
                if m.name not in bindings.get(dep.target, set()):
                    raise ManifestError(
                        f"{m.name}: via=db dependency references undeclared datastore {dep.target!r}")
                continue  # datastore access is tracked through bindings, not edges
            if dep.is_hardcoded():
                edges.append(Edge(source=m.name, target=dep.target, via=dep.via, hardcoded=True))
                continue
            if dep.target not in names:
                raise ManifestError(f"{m.name}: dependency target {dep.target!r} is not a known service")
            edges.append(Edge(source=m.name, target=dep.target, via=dep.via))
    return SystemModel(services=manifests, edges=edges, datastore_bindings=bindings)


def load_manifest_dir(path: str | Path) -> SystemModel:
    files = sorted(Path(path).glob("*.json"))
    return parse_manifests([f.read_bytes() for f in files])


def find_cycles(model: SystemModel | dict[str, list[str]]) -> list[list[str]]:
    """Every elementary cycle among service nodes, each reported once and
    rotated to start at its lexicographically smallest member."""
    if isinstance(model, SystemModel):
        adj: dict[str, set[str]] = {s.name: set() for s in model.services}
        for edge in model.service_edges():
            adj[edge.source].add(edge.target)
    else:
        adj = {node: set(targets) for node, targets in model.items()}
        for targets in model.values():
            for t in targets:
                adj.setdefault(t, set())

    nodes = sorted(adj)
    order = {n: i for i, n in enumerate(nodes)}
    sorted_adj = {n: sorted(adj[n]) for n in nodes}
    cycles: list[list[str]] = []

    def dfs(start: str, node: str, path: list[str], on_path: set[str]) -> None:
        for nxt in sorted_adj[node]:
            if nxt == start:
                cycles.append(list(path))
            elif order[nxt] > order[start] and nxt not in on_path:
                path.append(nxt)
                on_path.add(nxt)
                dfs(start, nxt, path, on_path)
                path.pop()
                on_path.remove(nxt)

    for start in nodes:
        dfs(start, start, [start], {start})
    cycles.sort()
    return cycles


def _longest_chain_through(model: SystemModel) -> dict[str, int]:
    """Edge count of the longest simple dependency path through each service.

    Exhaustive DFS over maximal simple paths; system models are desk-scale
    (tens of services), so this stays cheap in practice.
    """
    adj: dict[str, list[str]] = {s.name: [] for s in model.services}
    for edge in model.service_edges():
        if edge.target not in adj[edge.source]:
            adj[edge.source].append(edge.target)
    best = {name: 0 for name in adj}

    def dfs(path: list[str], on_path: set[str]) -> None:
        extended = False
        for nxt in adj[path[-1]]:
            if nxt not in on_path:
                extended = True
                path.append(nxt)
                on_path.add(nxt)
                dfs(path, on_path)
                path.pop()
                on_path.remove(nxt)
        if not extended:
            length = len(path) - 1
            for node in path:
                if best[node] < length:
                    best[node] = length

    for start in sorted(adj):
        dfs([start], {start})
    return best


@dataclass
class StaticDetectionConfig:
    """Per-smell parameter overrides layered over catalog defaults."""
    overrides: dict[str, dict[str, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for smell_id, params in self.overrides.items():
            for key, value in params.items():
                if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
                    raise ValueError(f"{smell_id}.{key}: thresholds must be positive numbers")

    def params_for(self, catalog: Catalog, smell_id: str) -> dict[str, float]:
        entry = catalog.get_entry(smell_id)
        if entry is None:
            raise KeyError(f"catalog has no entry {smell_id!r}")
        merged = dict(entry.default_params)
        merged.update(self.overrides.get(smell_id, {}))
        return merged


def detect_static(model: SystemModel, config: StaticDetectionConfig,
                  catalog: Catalog) -> list[DetectionRecord]:
    """Run all 12 architecture rules; one record per (scope, smell).

    System-wide smells (no-api-gateway, esb-usage) emit a single record
    with scope "system"; all others emit one record per service. An empty
    model yields no records.
    """
    for smell_id in STATIC_SMELL_IDS:
        if catalog.get_entry(smell_id) is None:
            raise KeyError(f"catalog is missing static entry {smell_id!r}")
    if not model.services:
        return []

    records: list[DetectionRecord] = []
    service_edges = model.service_edges()
    names = model.service_names()

    def params(smell_id: str) -> dict[str, float]:
        return config.params_for(catalog, smell_id)

    # esb-usage: share of inter-service edges that ride the bus through a
    # message_bus node.
    p = params("esb-usage")
    roles = {s.name: s.role for s in model.services}
    bus_edges = [e for e in service_edges
                 if e.via == "bus" and (roles[e.source] == "message_bus" or roles[e.target] == "message_bus")]
    total_edges = len(service_edges)
    fraction = len(bus_edges) / total_edges if total_edges else 0.0
    score = min(fraction / p["bus_fraction"], len(bus_edges) / p["min_bus_edges"])
    records.append(make_record(
        "esb-usage", SYSTEM_SCOPE, score, ">=", 1.0,
        {"bus_edge_fraction": fraction, "bus_edges": len(bus_edges),
         "inter_service_edges": total_edges},
        p))

    # no-api-gateway: absence of any gateway-role manifest.
    p = params("no-api-gateway")
    gateway_count = sum(1 for s in model.services if s.role == "gateway")
    records.append(make_record(
        "no-api-gateway", SYSTEM_SCOPE, gateway_count, "<", 1,
        {"gateway_count": gateway_count}, p))

    cycles = find_cycles(model)
    chain_best = _longest_chain_through(model)
    degree: dict[str, int] = {n: 0 for n in names}
    out_degree: dict[str, int] = {n: 0 for n in names}
    seen_pairs: set[tuple[str, str]] = set()
    for e in service_edges:
        if (e.source, e.target) in seen_pairs:
            continue
        seen_pairs.add((e.source, e.target))
        degree[e.source] += 1
        degree[e.target] += 1
        out_degree[e.source] += 1
    mean_degree = statistics.mean(degree.values()) if degree else 0.0
    std_degree = statistics.pstdev(degree.values()) if degree else 0.0

    business_lib_users: dict[str, set[str]] = {}
    for svc in model.services:
        for lib in svc.libraries:
            if lib.category == "business":
                business_lib_users.setdefault(lib.name, set()).add(svc.name)

    for svc in model.services:
        name = svc.name

        p = params("microservice-greedy")
        greedy = len(svc.endpoints) <= p["greedy_max_endpoints"] and svc.loc < p["greedy_max_loc"]
        records.append(make_record(
            "microservice-greedy", name, 1.0 if greedy else 0.0, ">=", 1.0,
            {"endpoint_count": len(svc.endpoints), "loc": svc.loc}, p))

        p = params("no-api-versioning")
        versioned = sum(1 for ep in svc.endpoints if ep.is_versioned())
        fraction = versioned / len(svc.endpoints) if svc.endpoints else 1.0
        records.append(make_record(
            "no-api-versioning", name, fraction, "<=", 0.0,
            {"endpoint_count": len(svc.endpoints), "versioned_count": versioned}, p))

        p = params("hardcoded-endpoints")
        hardcoded = sum(1 for d in svc.dependencies if d.is_hardcoded())
        targets = ", ".join(d.target for d in svc.dependencies if d.is_hardcoded())
        records.append(make_record(
            "hardcoded-endpoints", name, hardcoded, ">=", 1,
            {"hardcoded_count": hardcoded, "targets": targets}, p))

        p = params("shared-persistence")
        shared = [ds for ds in svc.datastores if len(model.datastore_bindings.get(ds, set())) >= 2]
        records.append(make_record(
            "shared-persistence", name, len(shared), ">=", 1,
            {"shared_datastores": ", ".join(sorted(shared)),
             "datastore_count": len(svc.datastores)}, p))

        p = params("cyclic-dependency")
        in_cycles = [c for c in cycles if name in c]
        records.append(make_record(
            "cyclic-dependency", name, len(in_cycles), ">=", 1,
            {"cycle_count": len(in_cycles),
             "example_cycle": " -> ".join(in_cycles[0]) if in_cycles else ""}, p))

        p = params("hub-like-dependency")
        hub_cut = max(mean_degree + p["hub_sigma"] * std_degree, p["hub_min_degree"])
        records.append(make_record(
            "hub-like-dependency", name, degree[name], ">=", hub_cut,
            {"degree": degree[name], "mean_degree": mean_degree,
             "stddev_degree": std_degree}, p))

        p = params("shared-libraries")
        shared_libs = sorted(
            lib.name for lib in svc.libraries
            if lib.category == "business" and len(business_lib_users.get(lib.name, set())) >= 2)
        records.append(make_record(
            "shared-libraries", name, len(shared_libs), ">=", 1,
            {"shared_libraries": ", ".join(shared_libs)}, p))

        p = params("mega-service")
        score = max(len(svc.endpoints) / p["mega_min_endpoints"], svc.loc / p["mega_min_loc"])
        records.append(make_record(
            "mega-service", name, score, ">=", 1.0,
            {"endpoint_count": len(svc.endpoints), "loc": svc.loc}, p))

        p = params("nano-service")
        nano = svc.loc < p["nano_max_loc"] and out_degree[name] >= p["nano_min_deps"]
        records.append(make_record(
            "nano-service", name, 1.0 if nano else 0.0, ">=", 1.0,
            {"loc": svc.loc, "out_degree": out_degree[name]}, p))

        p = params("long-service-chain-static")
        records.append(make_record(
            "long-service-chain-static", name, chain_best[name], ">=", p["chain_min_len"],
            {"longest_chain_edges": chain_best[name]}, p))

    order = {smell_id: i for i, smell_id in enumerate(STATIC_SMELL_IDS)}
    records.sort(key=lambda r: (order[r.smell_id], r.scope))
    return records
