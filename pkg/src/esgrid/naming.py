"""Logical and physical name syntax.

LFN  lfn://project/dataset/...      location-independent identity
PFN  site://<site>/<tier>/<path>    tier is "disk" or "archive"
SVC  svc://<service>                service-oriented authorization target
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ValidationError

# a segment may contain dots but must not be made of dots only ("..", ".")
_SEGMENT = r"(?!\.+(?:/|$))[A-Za-z0-9_.\-]+"
_LFN_RE = re.compile(rf"^lfn://{_SEGMENT}(?:/{_SEGMENT})*$")
_PFN_RE = re.compile(rf"^site://(?P<site>{_SEGMENT})/(?P<tier>disk|archive)/(?P<path>{_SEGMENT}(?:/{_SEGMENT})*)$")
_SVC_RE = re.compile(rf"^svc://{_SEGMENT}$")

TIERS = ("disk", "archive")


def is_lfn(name: str) -> bool:
    return bool(_LFN_RE.match(name))


def is_svc(name: str) -> bool:
    return bool(_SVC_RE.match(name))


def validate_lfn(name: str) -> str:
    if not is_lfn(name):
        raise ValidationError(f"malformed LFN: {name!r}")
    return name


def lfn_segments(name: str) -> list[str]:
    validate_lfn(name)
    return name[len("lfn://"):].split("/")


def svc_name(resource: str) -> str:
    if not is_svc(resource):
        raise ValidationError(f"malformed service name: {resource!r}")
    return resource[len("svc://"):]


@dataclass(frozen=True)
class Pfn:
    site: str
    tier: str
    path: str

    def __str__(self) -> str:
        return f"site://{self.site}/{self.tier}/{self.path}"


def parse_pfn(name: str) -> Pfn:
    m = _PFN_RE.match(name)
    if not m:
        raise ValidationError(f"malformed PFN: {name!r}")
    return Pfn(site=m.group("site"), tier=m.group("tier"), path=m.group("path"))


def is_pfn(name: str) -> bool:
    return bool(_PFN_RE.match(name))


def pfn_tier(name: str) -> str:
    return parse_pfn(name).tier
