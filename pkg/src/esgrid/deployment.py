"""Deployment profiles and grid assembly.

One codebase, many portals: a YAML profile declares the served LFN prefix,
the storage sites with their capacity/latency/failure models, bootstrap
accounts and policies, and runtime knobs.  Grid.from_profile wires every
service together over a shared clock, event bus, and data root, so the
ESG-wide portal and a community portal differ only by configuration.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .catalog import CatalogService
from .clock import Clock, SimClock, WallClock
from .datamover import DataMoverService
from .errors import ValidationError
from .events import EventBus
from .monitor import MonitorService
from .replica import ReplicaService
from .security import GroupPolicy, SecurityService
from .storage import SiteConfig, StorageManager
from .virtualdata import VirtualDataService

CORE_SERVICES = ("portal", "catalog", "rls", "vds", "datamover", "monitor")


@dataclass
class Profile:
    name: str = "esg-wide"
    lfn_prefix: str = "lfn://"
    clock: str = "sim"  # sim | wall
    secret_key: str = "dev-secret-key"
    data_root: str | None = None
    sites: list[dict] = field(default_factory=list)
    portal_cache_site: str = "portal-cache"
    vds_cache_site: str | None = None  # defaults to the portal cache
    republish_materialized: bool = True
    job_workers: int = 4
    token_ttl_hours: int = 12
    heartbeat_interval_ms: int = 0
    # which optional service surfaces this portal exposes over HTTP
    services: list[str] = field(
        default_factory=lambda: ["catalog", "rls", "vds", "datamover", "monitor"])
    bootstrap_accounts: list[dict] = field(default_factory=list)
    policies: list[dict] = field(default_factory=list)

    @classmethod
    def load(cls, path: str | Path) -> "Profile":
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "Profile":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"unknown profile keys: {sorted(unknown)}")
        return cls(**raw)


class Grid:
    """All in-process services of one deployment."""

    def __init__(self, profile: Profile, data_root: str | Path | None = None):
        self.profile = profile
        root = Path(data_root or profile.data_root or
                    os.environ.get("ESG_DATA_ROOT", "./esg-data"))
        self.root = root
        root.mkdir(parents=True, exist_ok=True)
        self.clock: Clock = SimClock() if profile.clock == "sim" else WallClock()
        self.events = EventBus()

        self.security = SecurityService(
            self.clock, profile.secret_key.encode("utf-8"),
            audit_path=root / "audit.log",
            token_ttl_ms=profile.token_ttl_hours * 3_600_000)
        for account in profile.bootstrap_accounts:
            self.security.bootstrap_account(
                account["subject"], list(account.get("groups", [])),
                account.get("kind", "moderate"), account["passphrase"])

        site_configs = [SiteConfig.from_dict(s) for s in profile.sites]
        names = {c.site_id for c in site_configs}
        for required in {profile.portal_cache_site,
                         profile.vds_cache_site or profile.portal_cache_site}:
            if required not in names:
                site_configs.append(SiteConfig(required, 1 << 30))
        self.storage = StorageManager(root / "sites", site_configs, self.clock,
                                      self.events, rescan=True)

        self.catalog = CatalogService(self.clock, self.security,
                                      log_path=root / "catalog.log")
        self.replica = ReplicaService(self.clock, self.security,
                                      log_path=root / "rls.log")
        self.monitor = MonitorService(self.clock, self.events)
        for sid in CORE_SERVICES:
            self.monitor.register_service(sid)
        for cfg in site_configs:
            self.monitor.register_service(f"site:{cfg.site_id}")

        # service identity used when services act on their own behalf
        # (replica registration for cache copies and materializations)
        self._service_group = "esg-services"
        admin = self.security.issue_token("grid-bootstrap", ["esg-admin"], "full")
        self.security.add_policy(
            GroupPolicy(self._service_group, "lfn://**", frozenset({"read", "publish"})),
            admin)
        for policy in profile.policies:
            self.security.add_policy(
                GroupPolicy(policy["group"], policy["pattern"],
                            frozenset(policy["actions"])), admin)
        self.service_token = self.security.issue_token(
            "portal-svc", [self._service_group], "full",
            ttl_ms=365 * 24 * 3_600_000)

        self.mover = DataMoverService(
            self.storage, self.security, self.replica, self.clock, self.events,
            journals_dir=root / "journals",
            portal_cache_site=profile.portal_cache_site,
            service_token=self.service_token)
        self.vds = VirtualDataService(
            self.catalog, self.replica, self.storage, self.security, self.clock,
            self.events, cache_site=profile.vds_cache_site or profile.portal_cache_site,
            recipes_log=root / "recipes.log",
            republish_materialized=profile.republish_materialized,
            service_token=self.service_token)

    def heartbeat_all(self) -> None:
        for sid in self.monitor.services():
            self.monitor.heartbeat(sid)


def load_grid(profile_path: str | Path | None = None,
              data_root: str | Path | None = None) -> Grid:
    path = profile_path or os.environ.get("ESG_PROFILE")
    profile = Profile.load(path) if path else Profile()
    return Grid(profile, data_root=data_root)
