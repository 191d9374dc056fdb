"""Virtual datasets: recipes, discovery, materialization, and caching.

A virtual dataset is a catalog record whose content slot is a recipe: an
expression tree of ref/subset/concat nodes over other physical or virtual
datasets.  Instantiation resolves leaves through the replica service, pulls
bytes from storage (staging archive copies), evaluates the tree bottom-up
with the gridfmt kernels, applies the caller's constraint on top, and writes
the result to the cache site.  Cache entries remember the catalog versions
of every input and are invalidated the moment any input is republished.

Discovery is catalog search: virtual and physical names come back through
the same interface, indistinguishable to the consumer.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path

from .catalog import CatalogService, MetadataRecord
from .clock import Clock
from .errors import EsgError, NotFoundError, TransientError, ValidationError
from .events import EventBus
from .gridfmt import (
    GridDataset,
    concat,
    parse_constraint,
    read_dataset,
    render_constraint,
    subset,
    write_dataset,
)
from .naming import parse_pfn
from .replica import ReplicaService
from .security import SecurityService
from .storage import StorageManager

NODE_KINDS = ("ref", "subset", "concat")


class RecipeCycleError(ValidationError):
    code = "recipe_cycle"


def validate_expr(expr: dict) -> None:
    """Structural validation of a recipe expression tree."""
    if not isinstance(expr, dict) or expr.get("kind") not in NODE_KINDS:
        raise ValidationError(f"recipe node must have kind in {NODE_KINDS}")
    kind = expr["kind"]
    if kind == "ref":
        if not isinstance(expr.get("lfn"), str):
            raise ValidationError("ref node needs an lfn")
    elif kind == "subset":
        parse_constraint(expr.get("constraint", ""))
        validate_expr(expr.get("input"))
    else:
        inputs = expr.get("inputs")
        if not isinstance(inputs, list) or not inputs:
            raise ValidationError("concat node needs a non-empty inputs list")
        if not isinstance(expr.get("axis"), str):
            raise ValidationError("concat node needs an axis name")
        for node in inputs:
            validate_expr(node)


def expr_refs(expr: dict) -> list[str]:
    """Direct ref targets of an expression, in evaluation order."""
    kind = expr["kind"]
    if kind == "ref":
        return [expr["lfn"]]
    if kind == "subset":
        return expr_refs(expr["input"])
    out = []
    for node in expr["inputs"]:
        out.extend(expr_refs(node))
    return out


@dataclass
class CacheEntry:
    key: tuple[str, str]
    pfn: str
    digest: str
    created_at: int
    source_versions: dict[str, int]


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    builds: int = 0
    invalidations: int = 0

    def to_dict(self) -> dict:
        return {"hits": self.hits, "misses": self.misses,
                "builds": self.builds, "invalidations": self.invalidations}


class VirtualDataService:
    def __init__(self, catalog: CatalogService, replica: ReplicaService,
                 storage: StorageManager, security: SecurityService,
                 clock: Clock, events: EventBus, cache_site: str,
                 recipes_log: Path | None = None,
                 republish_materialized: bool = True,
                 service_token: str | None = None):
        self._catalog = catalog
        self._replica = replica
        self._storage = storage
        self._security = security
        self._clock = clock
        self._events = events
        self._cache_site = cache_site
        self._republish = republish_materialized
        self._service_token = service_token
        self._recipes: dict[str, dict] = {}
        self._recipes_log = Path(recipes_log) if recipes_log else None
        self._serial = 0
        self._cache: dict[tuple[str, str], CacheEntry] = {}
        self.stats = CacheStats()
        self._flight_lock = threading.Lock()
        self._builds: dict[tuple[str, str], threading.Lock] = {}
        if self._recipes_log and self._recipes_log.exists():
            self._replay()

    # -- recipes --------------------------------------------------------------

    def _replay(self) -> None:
        with open(self._recipes_log, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    entry = json.loads(line)
                    self._recipes[entry["recipe_id"]] = entry["expr"]
                    self._serial = max(self._serial,
                                       int(entry["recipe_id"].split("-")[1]))

    def _store_recipe(self, expr: dict) -> str:
        self._serial += 1
        recipe_id = f"rcp-{self._serial:05d}"
        self._recipes[recipe_id] = expr
        if self._recipes_log:
            self._recipes_log.parent.mkdir(parents=True, exist_ok=True)
            with open(self._recipes_log, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"recipe_id": recipe_id, "expr": expr}) + "\n")
        return recipe_id

    def recipe(self, name: str) -> dict:
        record = self._catalog.by_name(name)
        if not record.is_virtual():
            raise ValidationError(f"{name} is a physical dataset")
        expr = self._recipes.get(record.recipe_ref)
        if expr is None:
            raise NotFoundError(f"recipe {record.recipe_ref} not in store")
        return expr

    def define_virtual(self, name: str, expr: dict, metadata: dict, token: str) -> str:
        """Register a recipe and publish its catalog record."""
        validate_expr(expr)
        for ref in expr_refs(expr):
            if ref == name:
                raise RecipeCycleError(f"recipe {name} references itself")
            if not self._catalog.has_name(ref):
                raise NotFoundError(f"unknown input: {ref}")
        self._walk_names(expr, stack=(name,))  # deep cycle check
        recipe_id = self._store_recipe(expr)
        record = MetadataRecord.from_dict({
            "id": "", "logical_name": name, "version": 0,
            **metadata, "recipe_ref": recipe_id, "constituent_files": None,
        })
        return self._catalog.publish(record, token)

    # -- discovery --------------------------------------------------------------

    def discover(self, query: str = "", filters: dict | None = None) -> list[str]:
        """Names matching a catalog query; virtual and physical alike."""
        return [self._catalog.get(rid).logical_name
                for rid in self._catalog.search(query, filters)]

    # -- materialization -----------------------------------------------------------

    def _walk_names(self, expr: dict, stack: tuple[str, ...]) -> list[str]:
        """All dataset names an expression depends on, transitively."""
        names: list[str] = []
        for ref in expr_refs(expr):
            if ref in stack:
                raise RecipeCycleError(
                    f"recipe cycle through {ref}: {' -> '.join(stack + (ref,))}")
            if ref not in names:
                names.append(ref)
            if self._catalog.has_name(ref):
                record = self._catalog.by_name(ref)
                if record.is_virtual():
                    inner = self._recipes.get(record.recipe_ref)
                    if inner is not None:
                        for sub in self._walk_names(inner, stack + (ref,)):
                            if sub not in names:
                                names.append(sub)
        return names

    def dependencies(self, name: str) -> list[str]:
        record = self._catalog.by_name(name)
        if not record.is_virtual():
            return []
        return self._walk_names(self.recipe(name), stack=(name,))

    def canonical_key(self, name: str, constraint: str | None) -> tuple[str, str]:
        rendered = ""
        if constraint:
            rendered = render_constraint(parse_constraint(constraint))
        return (name, rendered)

    def instantiate(self, name: str, constraint: str | None, token: str,
                    ) -> tuple[bytes, str, bool]:
        """Materialize a dataset; returns (bytes, cache pfn, served_from_cache).

        Authorization covers the requested name and every resolved input and
        runs to completion before any input bytes are fetched.
        """
        record = self._catalog.by_name(name)
        needed = [name] + (self.dependencies(name) if record.is_virtual() else [])
        for dep in needed:
            self._security.check(token, dep, "read")
        key = self.canonical_key(name, constraint)

        cached = self._cache_probe(key)
        if cached is not None:
            self.stats.hits += 1
            self._events.emit(self._clock.now_ms(), "vds", "cache_hit",
                              name=name, constraint=key[1])
            return self._storage.read_file(cached.pfn), cached.pfn, True
        self.stats.misses += 1

        with self._flight_lock:
            build_lock = self._builds.setdefault(key, threading.Lock())
        with build_lock:
            cached = self._cache_probe(key)
            if cached is not None:
                self.stats.hits += 1
                return self._storage.read_file(cached.pfn), cached.pfn, True
            data, pfn = self._build(record, key)
            return data, pfn, False

    def _cache_probe(self, key: tuple[str, str]) -> CacheEntry | None:
        entry = self._cache.get(key)
        if entry is None:
            return None
        for dep, version in entry.source_versions.items():
            try:
                current = self._catalog.by_name(dep).version
            except NotFoundError:
                current = -1
            if current != version:
                self.stats.invalidations += 1
                self._cache.pop(key, None)
                return None
        meta = self._storage.stat(entry.pfn)
        if meta is None or meta.digest != entry.digest:
            # cache file evicted or replaced; rebuild
            self._cache.pop(key, None)
            return None
        return entry

    def cache_lookup(self, name: str, constraint: str | None = None) -> bool:
        return self._cache_probe(self.canonical_key(name, constraint)) is not None

    def _build(self, record: MetadataRecord, key: tuple[str, str]) -> tuple[bytes, str]:
        self.stats.builds += 1
        name, rendered = key
        ds = self._evaluate_name(name, stack=())
        if rendered:
            ds = subset(ds, parse_constraint(rendered))
        data = write_dataset(ds)
        digest = hashlib.sha256(f"{name}|{rendered}".encode()).hexdigest()[:16]
        pfn = f"site://{self._cache_site}/disk/vds/{digest}.esgn"
        self._storage.write_file(pfn, data)
        versions = {name: self._catalog.by_name(name).version}
        for dep in self.dependencies(name):
            versions[dep] = self._catalog.by_name(dep).version
        self._cache[key] = CacheEntry(
            key=key, pfn=pfn, digest=hashlib.sha256(data).hexdigest(),
            created_at=self._clock.now_ms(), source_versions=versions)
        self._events.emit(self._clock.now_ms(), "vds", "materialized",
                          name=name, constraint=rendered, bytes=len(data))
        if not rendered and self._republish and self._service_token:
            # republish the whole-dataset materialization as a live replica
            self._replica.add_replica(name, pfn, self._service_token)
        return data, pfn

    def _evaluate_name(self, name: str, stack: tuple[str, ...]) -> GridDataset:
        if name in stack:
            raise RecipeCycleError(f"recipe cycle through {name}")
        record = self._catalog.by_name(name)
        if record.is_virtual():
            expr = self._recipes.get(record.recipe_ref)
            if expr is None:
                raise NotFoundError(f"recipe {record.recipe_ref} not in store")
            return self._evaluate(expr, stack + (name,))
        return self._fetch_physical(name)

    def _evaluate(self, expr: dict, stack: tuple[str, ...]) -> GridDataset:
        kind = expr["kind"]
        if kind == "ref":
            return self._evaluate_name(expr["lfn"], stack)
        if kind == "subset":
            return subset(self._evaluate(expr["input"], stack),
                          parse_constraint(expr["constraint"]))
        parts = [self._evaluate(node, stack) for node in expr["inputs"]]
        return concat(parts, expr["axis"])

    def _fetch_physical(self, lfn: str) -> GridDataset:
        """Resolve a leaf through the RLS and read its bytes off storage."""
        replicas = self._replica.lookup(lfn)
        if not replicas:
            raise NotFoundError(f"input unreadable: no replicas for {lfn}")
        last_error: Exception | None = None
        for pfn_text in replicas:
            loc = parse_pfn(pfn_text)
            try:
                if loc.tier == "archive":
                    data = self._stage_and_read(loc, pfn_text)
                else:
                    data = self._storage.read_file(pfn_text)
                self._events.emit(self._clock.now_ms(), "vds", "input_fetch",
                                  lfn=lfn, pfn=pfn_text, bytes=len(data))
                return read_dataset(data)
            except EsgError as exc:  # try the next replica location
                last_error = exc
        raise NotFoundError(f"input unreadable: {lfn} ({last_error})")

    def _stage_and_read(self, loc, pfn_text: str) -> bytes:
        meta = self._storage.stat(pfn_text)
        if meta is None:
            raise NotFoundError(f"replica {pfn_text} has no bytes")
        disk_pfn = f"site://{loc.site}/disk/{loc.path}"
        existing = self._storage.stat(disk_pfn)
        if existing is None or existing.digest != meta.digest:
            for attempt in range(4):
                reservation = self._storage.reserve_space(loc.site, meta.size)
                try:
                    self._storage.stage(loc.site, loc.path, reservation)
                    break
                except TransientError:
                    if attempt == 3:
                        raise
                finally:
                    self._storage.release_reservation(reservation)
        return self._storage.read_file(disk_pfn)
