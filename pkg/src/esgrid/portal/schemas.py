"""Request bodies for the portal HTTP surface."""

from __future__ import annotations

from pydantic import BaseModel, Field


class RegisterIn(BaseModel):
    name: str
    email: str
    institution: str = ""
    requested_groups: list[str] = Field(default_factory=list)


class ReviewIn(BaseModel):
    request_id: str
    decision: str  # accept | reject
    groups: list[str] | None = None
    kind: str = "moderate"


class LoginIn(BaseModel):
    subject: str
    passphrase: str


class PolicyIn(BaseModel):
    group: str
    pattern: str
    actions: list[str]


class PublishIn(BaseModel):
    metadata: dict
    site: str | None = None
    tier: str = "archive"
    data_b64: str | None = None


class RecordPatchIn(BaseModel):
    patch: dict
    expected_version: int


class ReplicaIn(BaseModel):
    lfn: str
    pfn: str
    ttl_ms: int | None = None


class DefineIn(BaseModel):
    name: str
    expr: dict
    metadata: dict


class SelectionIn(BaseModel):
    dataset: str
    variable: str
    time: tuple[float, float] | None = None
    lat: tuple[float, float] | None = None
    lon: tuple[float, float] | None = None
    level: tuple[float, float] | None = None


class FetchIn(BaseModel):
    lfns: list[str]
    mode: str  # casual | frequent
    dest: str | None = None


class MoveIn(BaseModel):
    src: str
    dst: str
    max_concurrent: int = 4
    max_retries: int = 8
    backoff_base_ms: int = 100
    backoff_factor: float = 2.0
    jitter_seed: int | None = None


class HeartbeatIn(BaseModel):
    service_id: str
