"""Smell knowledge base: typed entries plus the on-disk catalog format.

The bundled catalog carries the 24 detectable smell types (12 static,
12 runtime). Deployments may extend the file with additional
knowledge-only entries (no ``detection_kind``) without code changes.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import BinaryIO

PRIMARY_TYPES = ("Architecture", "Runtime", "Performance")
DETECTION_KINDS = ("static", "runtime")

_ID_RE = re.compile(r"^[a-z0-9-]+$")


class CatalogError(ValueError):
    """A catalog document is malformed or violates an entry invariant."""


@dataclass(frozen=True)
class SmellTypeEntry:
    id: str
    name: str
    primary_type: str
    secondary_type: str
    definition: str
    detection_kind: str | None  # None = knowledge-only entry, no detector bound
    default_params: dict[str, float] = field(default_factory=dict)
    references: tuple[str, ...] = ()

    def validate(self) -> None:
        if not _ID_RE.fullmatch(self.id):
            raise CatalogError(f"entry id {self.id!r} must match [a-z0-9-]+")
        if self.primary_type not in PRIMARY_TYPES:
            raise CatalogError(
                f"entry {self.id!r}: primary_type {self.primary_type!r} "
                f"not one of {PRIMARY_TYPES}"
            )
        if self.detection_kind is not None:
            if self.detection_kind not in DETECTION_KINDS:
                raise CatalogError(
                    f"entry {self.id!r}: detection_kind {self.detection_kind!r} "
                    f"not one of {DETECTION_KINDS}"
                )
            if self.detection_kind == "static" and self.primary_type != "Architecture":
                raise CatalogError(
                    f"entry {self.id!r}: static detection requires "
                    f"primary_type Architecture, got {self.primary_type!r}"
                )
            if self.detection_kind == "runtime" and self.primary_type not in ("Runtime", "Performance"):
                raise CatalogError(
                    f"entry {self.id!r}: runtime detection requires primary_type "
                    f"Runtime or Performance, got {self.primary_type!r}"
                )
        for key, value in self.default_params.items():
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise CatalogError(f"entry {self.id!r}: default_params[{key!r}] is not a number")


@dataclass(frozen=True)
class Catalog:
    entries: tuple[SmellTypeEntry, ...]
    version: str

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for entry in self.entries:
            entry.validate()
            if entry.id in seen:
                raise CatalogError(f"duplicate entry id {entry.id!r}")
            seen.add(entry.id)

    def get_entry(self, entry_id: str) -> SmellTypeEntry | None:
        for entry in self.entries:
            if entry.id == entry_id:
                return entry
        return None

    def list_by_taxonomy(
        self, primary: str | None = None, secondary: str | None = None
    ) -> list[SmellTypeEntry]:
        """Filter entries by taxonomy, preserving catalog order."""
        out = []
        for entry in self.entries:
            if primary is not None and entry.primary_type != primary:
                continue
            if secondary is not None and entry.secondary_type != secondary:
                continue
            out.append(entry)
        return out

    def bound_entries(self, kind: str | None = None) -> list[SmellTypeEntry]:
        """Entries with a detector binding, optionally filtered by kind."""
        out = [e for e in self.entries if e.detection_kind is not None]
        if kind is not None:
            out = [e for e in out if e.detection_kind == kind]
        return out

    def bound_ids(self) -> set[str]:
        return {e.id for e in self.entries if e.detection_kind is not None}


def _parse_entry(raw: dict, index: int) -> SmellTypeEntry:
    if not isinstance(raw, dict):
        raise CatalogError(f"entries[{index}] is not an object")
    missing = [k for k in ("id", "name", "primary_type", "secondary_type", "definition") if k not in raw]
    if missing:
        raise CatalogError(f"entries[{index}] missing field(s) {missing}")
    return SmellTypeEntry(
        id=raw["id"],
        name=raw["name"],
        primary_type=raw["primary_type"],
        secondary_type=raw["secondary_type"],
        definition=raw["definition"],
        detection_kind=raw.get("detection_kind"),
        default_params=dict(raw.get("default_params") or {}),
        references=tuple(raw.get("references") or ()),
    )


def load_catalog(source: bytes | str | BinaryIO) -> Catalog:
    """Parse a catalog document (UTF-8 JSON) into a validated Catalog."""
    if hasattr(source, "read"):
        data = source.read()
    else:
        data = source
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise CatalogError(f"catalog document is not valid JSON: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise CatalogError("catalog document must be a JSON object")
    if "version" not in doc or "entries" not in doc:
        raise CatalogError("catalog document requires 'version' and 'entries' fields")
    if not isinstance(doc["entries"], list):
        raise CatalogError("'entries' must be a list")
    entries = tuple(_parse_entry(raw, i) for i, raw in enumerate(doc["entries"]))
    return Catalog(entries=entries, version=str(doc["version"]))


def serialize_catalog(catalog: Catalog) -> bytes:
    doc = {
        "version": catalog.version,
        "entries": [
            {
                "id": e.id,
                "name": e.name,
                "primary_type": e.primary_type,
                "secondary_type": e.secondary_type,
                "definition": e.definition,
                "detection_kind": e.detection_kind,
                "default_params": e.default_params,
                "references": list(e.references),
            }
            for e in catalog.entries
        ],
    }
    return json.dumps(doc, indent=2).encode("utf-8")


def entry_to_dict(entry: SmellTypeEntry) -> dict:
    return {
        "id": entry.id,
        "name": entry.name,
        "primary_type": entry.primary_type,
        "secondary_type": entry.secondary_type,
        "definition": entry.definition,
        "detection_kind": entry.detection_kind,
        "default_params": entry.default_params,
        "references": list(entry.references),
    }


def bundled_catalog() -> Catalog:
    """The catalog shipped with the package (24 bound entries)."""
    data = resources.files("smellwatch.data").joinpath("catalog.json").read_bytes()
    return load_catalog(data)
