"""Metadata catalog: publish, version, search, browse, and export holdings.

Records are versioned append-only (updates add a new version, priors stay
readable), discovery is conjunctive case-insensitive term containment over
title/summary/parameters plus exact field filters, and the LFN path segments
double as the browse hierarchy.  Persistence is a JSONL log replayed into an
in-memory index at startup.
"""

from __future__ import annotations

import json
import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .clock import Clock
from .errors import ConflictError, NotFoundError, ValidationError
from .naming import lfn_segments, validate_lfn

INVESTIGATION_KINDS = ("simulation", "observation", "experiment", "analysis")
DATASET_KINDS = ("campaign", "ensemble", "plain")
RELATIONS = ("isPartOf", "isGeneratedBy", "isDerivedFrom", "hasParameter", "usesService")

DEFAULT_SERVICES = (
    "svc://catalog", "svc://rls", "svc://datamover", "svc://vds",
    "svc://portal", "svc://monitor", "svc://storage",
)


@dataclass
class Pedigree:
    model_name: str = ""
    model_version: str = ""
    software_config: str = ""
    hardware_config: str = ""
    derived_from: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model_name": self.model_name,
            "model_version": self.model_version,
            "software_config": self.software_config,
            "hardware_config": self.hardware_config,
            "derived_from": list(self.derived_from),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pedigree":
        return cls(**d)


@dataclass
class OntologyClass:
    investigation_kind: str = "simulation"
    dataset_kind: str = "plain"
    relationships: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "investigation_kind": self.investigation_kind,
            "dataset_kind": self.dataset_kind,
            "relationships": [list(r) for r in self.relationships],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OntologyClass":
        return cls(
            investigation_kind=d.get("investigation_kind", "simulation"),
            dataset_kind=d.get("dataset_kind", "plain"),
            relationships=[tuple(r) for r in d.get("relationships", [])],
        )


@dataclass
class MetadataRecord:
    id: str = ""
    logical_name: str = ""
    title: str = ""
    summary: str = ""
    classification: OntologyClass = field(default_factory=OntologyClass)
    pedigree: Pedigree = field(default_factory=Pedigree)
    parameters: list[dict] = field(default_factory=list)  # {name, units, standard_name}
    time_coverage: list[float] | None = None
    space_coverage: list[float] | None = None  # [lat_min, lat_max, lon_min, lon_max]
    constituent_files: list[str] | None = None
    recipe_ref: str | None = None
    version: int = 0

    def is_virtual(self) -> bool:
        return self.recipe_ref is not None

    def effective_relationships(self) -> list[tuple[str, str]]:
        """Declared relationships plus isDerivedFrom edges from the pedigree."""
        rels = list(self.classification.relationships)
        for lfn in self.pedigree.derived_from:
            edge = ("isDerivedFrom", lfn)
            if edge not in rels:
                rels.append(edge)
        return rels

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "logical_name": self.logical_name,
            "title": self.title,
            "summary": self.summary,
            "classification": self.classification.to_dict(),
            "pedigree": self.pedigree.to_dict(),
            "parameters": [dict(p) for p in self.parameters],
            "time_coverage": self.time_coverage,
            "space_coverage": self.space_coverage,
            "constituent_files": self.constituent_files,
            "recipe_ref": self.recipe_ref,
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetadataRecord":
        return cls(
            id=d["id"],
            logical_name=d["logical_name"],
            title=d.get("title", ""),
            summary=d.get("summary", ""),
            classification=OntologyClass.from_dict(d.get("classification", {})),
            pedigree=Pedigree.from_dict(d.get("pedigree", {})),
            parameters=[dict(p) for p in d.get("parameters", [])],
            time_coverage=d.get("time_coverage"),
            space_coverage=d.get("space_coverage"),
            constituent_files=d.get("constituent_files"),
            recipe_ref=d.get("recipe_ref"),
            version=d.get("version", 0),
        )


# patchable record fields (everything except identity and version)
PATCHABLE = (
    "title", "summary", "classification", "pedigree", "parameters",
    "time_coverage", "space_coverage", "constituent_files", "recipe_ref",
)


class CatalogService:
    """Single-writer, many-reader metadata catalog with an append-only log."""

    def __init__(self, clock: Clock, security, log_path: Path | None = None,
                 declared_services: tuple[str, ...] = DEFAULT_SERVICES):
        self._clock = clock
        self._security = security
        self._log_path = Path(log_path) if log_path else None
        self._services = set(declared_services)
        self._write_lock = threading.Lock()
        self._versions: dict[str, list[MetadataRecord]] = {}
        self._by_name: dict[str, str] = {}
        self._serial = 0
        if self._log_path and self._log_path.exists():
            self._replay()

    # -- persistence -------------------------------------------------------

    def _replay(self) -> None:
        with open(self._log_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = MetadataRecord.from_dict(json.loads(line))
                self._versions.setdefault(record.id, []).append(record)
                self._by_name[record.logical_name] = record.id
                num = int(record.id.split("-")[1])
                self._serial = max(self._serial, num)

    def _append(self, record: MetadataRecord) -> None:
        if self._log_path is None:
            return
        self._log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record.to_dict()) + "\n")

    # -- validation --------------------------------------------------------

    def _validate(self, record: MetadataRecord) -> None:
        validate_lfn(record.logical_name)
        if (record.constituent_files is None) == (record.recipe_ref is None):
            raise ValidationError(
                "exactly one of constituent_files / recipe_ref must be present")
        for lfn in record.constituent_files or []:
            validate_lfn(lfn)
        for lfn in record.pedigree.derived_from:
            validate_lfn(lfn)
        cls = record.classification
        if cls.investigation_kind not in INVESTIGATION_KINDS:
            raise ValidationError(f"unknown investigation_kind: {cls.investigation_kind!r}")
        if cls.dataset_kind not in DATASET_KINDS:
            raise ValidationError(f"unknown dataset_kind: {cls.dataset_kind!r}")
        for relation, target in cls.relationships:
            if relation not in RELATIONS:
                raise ValidationError(f"unknown relation: {relation!r}")
            if not self._target_resolves(target):
                raise ValidationError(f"relationship target does not resolve: {target!r}")

    def _target_resolves(self, target: str) -> bool:
        if target in self._services:
            return True
        return target in self._versions or target in self._by_name

    # -- operations ----------------------------------------------------------

    def publish(self, record: MetadataRecord, token: str) -> str:
        self._security.check(token, record.logical_name, "publish")
        with self._write_lock:
            if record.logical_name in self._by_name:
                raise ConflictError(f"duplicate logical_name: {record.logical_name}")
            self._validate(record)
            self._serial += 1
            record.id = f"rec-{self._serial:06d}"
            record.version = 1
            self._versions[record.id] = [record]
            self._by_name[record.logical_name] = record.id
            self._append(record)
            return record.id

    def update(self, record_id: str, patch: dict, expected_version: int, token: str) -> int:
        """Apply a partial patch; prior versions stay readable."""
        with self._write_lock:
            versions = self._versions.get(record_id)
            if not versions:
                raise NotFoundError(f"unknown record: {record_id}")
            current = versions[-1]
            self._security.check(token, current.logical_name, "publish")
            if expected_version != current.version:
                raise ConflictError(
                    f"stale expected-version {expected_version}, record at {current.version}")
            unknown = set(patch) - set(PATCHABLE)
            if unknown:
                raise ValidationError(f"unpatchable fields: {sorted(unknown)}")
            merged = current.to_dict()
            for key, value in patch.items():
                merged[key] = value
            # switching between physical and virtual clears the other slot
            if "constituent_files" in patch and patch["constituent_files"] is not None \
                    and "recipe_ref" not in patch:
                merged["recipe_ref"] = None
            if "recipe_ref" in patch and patch["recipe_ref"] is not None \
                    and "constituent_files" not in patch:
                merged["constituent_files"] = None
            new = MetadataRecord.from_dict(merged)
            new.version = current.version + 1
            self._validate(new)
            versions.append(new)
            self._append(new)
            return new.version

    def get(self, record_id: str, version: int | None = None) -> MetadataRecord:
        versions = self._versions.get(record_id)
        if not versions:
            raise NotFoundError(f"unknown record: {record_id}")
        if version is None:
            return versions[-1]
        if not 1 <= version <= len(versions):
            raise NotFoundError(f"record {record_id} has no version {version}")
        return versions[version - 1]

    def by_name(self, logical_name: str) -> MetadataRecord:
        record_id = self._by_name.get(logical_name)
        if record_id is None:
            raise NotFoundError(f"unknown logical name: {logical_name}")
        return self.get(record_id)

    def has_name(self, logical_name: str) -> bool:
        return logical_name in self._by_name

    def history(self, record_id: str) -> list[MetadataRecord]:
        versions = self._versions.get(record_id)
        if not versions:
            raise NotFoundError(f"unknown record: {record_id}")
        return list(versions)

    def all_records(self) -> list[MetadataRecord]:
        return sorted((v[-1] for v in self._versions.values()),
                      key=lambda r: r.logical_name)

    # -- discovery -----------------------------------------------------------

    def _search_text(self, record: MetadataRecord) -> str:
        parts = [record.title, record.summary]
        for p in record.parameters:
            parts.extend(str(p.get(k, "")) for k in ("name", "units", "standard_name"))
        return " ".join(parts).lower()

    _FILTER_KEYS = ("investigation_kind", "dataset_kind", "logical_name",
                    "relation", "parameter")
    _PEDIGREE_KEYS = ("model_name", "model_version", "software_config", "hardware_config")

    @classmethod
    def _check_filter_key(cls, key: str) -> None:
        if key in cls._FILTER_KEYS:
            return
        if key.startswith("pedigree.") and key.split(".", 1)[1] in cls._PEDIGREE_KEYS:
            return
        raise ValidationError(f"unknown filter field: {key!r}")

    def _filter_value(self, record: MetadataRecord, key: str):
        if key == "investigation_kind":
            return record.classification.investigation_kind
        if key == "dataset_kind":
            return record.classification.dataset_kind
        if key == "logical_name":
            return record.logical_name
        if key == "relation":
            return [r for r, _ in record.effective_relationships()]
        if key == "parameter":
            return [p.get("name") for p in record.parameters]
        if key.startswith("pedigree."):
            return getattr(record.pedigree, key.split(".", 1)[1])
        raise ValidationError(f"unknown filter field: {key!r}")

    def search(self, query: str = "", filters: dict[str, str] | None = None) -> list[str]:
        """ids of records matching every term and every filter, by logical_name."""
        for key in (filters or {}):
            self._check_filter_key(key)
        terms = [t.lower() for t in (query or "").split()]
        out = []
        for record in self.all_records():
            text = self._search_text(record)
            if not all(term in text for term in terms):
                continue
            ok = True
            for key, value in (filters or {}).items():
                have = self._filter_value(record, key)
                if isinstance(have, list):
                    ok = value in have
                else:
                    ok = str(have) == value
                if not ok:
                    break
            if ok:
                out.append(record.id)
        return out

    def browse(self, path: str = "") -> list[dict]:
        """Children of an LFN hierarchy prefix with subtree record counts."""
        prefix = self._prefix_segments(path)
        children: dict[str, int] = {}
        for record in self.all_records():
            segs = lfn_segments(record.logical_name)
            if len(segs) <= len(prefix) or segs[:len(prefix)] != prefix:
                continue
            child = segs[len(prefix)]
            children[child] = children.get(child, 0) + 1
        return [{"name": name,
                 "path": "lfn://" + "/".join(prefix + [name]),
                 "records": count}
                for name, count in sorted(children.items())]

    @staticmethod
    def _prefix_segments(path: str) -> list[str]:
        if path in ("", "lfn://", "lfn:/"):
            return []
        return lfn_segments(path)

    def records_under(self, prefix: str) -> list[MetadataRecord]:
        pre = self._prefix_segments(prefix)
        return [r for r in self.all_records()
                if lfn_segments(r.logical_name)[:len(pre)] == pre]

    # -- THREDDS export --------------------------------------------------------

    def export_thredds(self, prefix: str,
                       replica_lookup: Callable[[str], list[str]],
                       data_base: str = "/data/") -> str:
        """Discovery catalog XML; records without live replicas are flagged offline."""
        root = ET.Element("catalog", name="ESG holdings")
        ET.SubElement(root, "service", name="data", serviceType="HTTP", base=data_base)
        for record in self.records_under(prefix):
            try:
                replicas = replica_lookup(record.logical_name)
            except Exception:
                replicas = []
            attrs = {"name": record.title or record.logical_name,
                     "urlPath": record.logical_name}
            if not replicas:
                attrs["offline"] = "true"
            ds = ET.SubElement(root, "dataset", **attrs)
            meta = ET.SubElement(ds, "metadata")
            if record.time_coverage:
                ET.SubElement(meta, "timeCoverage",
                              start=str(record.time_coverage[0]),
                              end=str(record.time_coverage[1]))
            if record.space_coverage:
                lat_min, lat_max, lon_min, lon_max = record.space_coverage
                ET.SubElement(meta, "spaceCoverage",
                              latMin=str(lat_min), latMax=str(lat_max),
                              lonMin=str(lon_min), lonMax=str(lon_max))
            for pfn in replicas:
                ET.SubElement(ds, "access", serviceName="data", urlPath=pfn)
        return ET.tostring(root, encoding="unicode")
