"""Registration, credential store, sign-on tokens, and community authorization.

Users register, an admin accepts or rejects, and acceptance deposits a
moderate-quality credential in the credential store encrypted under a
generated passphrase (returned exactly once).  Login decrypts the credential
and issues a short-lived HMAC-signed token; group policies then drive both
file-oriented (lfn://) and service-oriented (svc://) allow/deny decisions,
deny by default.  Every decision is appended to the audit log.
"""

from __future__ import annotations

import base64
import hmac
import hashlib
import json
import os
import re
import secrets
import threading
from dataclasses import dataclass
from pathlib import Path

from cryptography.fernet import Fernet, InvalidToken
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.pbkdf2 import PBKDF2HMAC

from .clock import Clock, MS_PER_HOUR
from .errors import (
    AuthenticationError,
    AuthorizationDenied,
    ConflictError,
    NotFoundError,
    ValidationError,
)

ACTIONS = ("read", "publish", "stage", "move")
KINDS = ("moderate", "full")
ADMIN_GROUP = "esg-admin"

TOKEN_TTL_MS = 12 * MS_PER_HOUR
CREDENTIAL_TTL_MS = 365 * 24 * MS_PER_HOUR

_EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")
_SEGMENT_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")
_KDF_ITERATIONS = 50_000


def _b64(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).decode("ascii").rstrip("=")


def _unb64(text: str) -> bytes:
    pad = "=" * (-len(text) % 4)
    return base64.urlsafe_b64decode(text + pad)


@dataclass(frozen=True)
class Token:
    subject: str
    groups: tuple[str, ...]
    kind: str
    issued_at: int
    expires_at: int

    def payload_json(self) -> str:
        return json.dumps(
            {
                "subject": self.subject,
                "groups": sorted(self.groups),
                "kind": self.kind,
                "issued_at": self.issued_at,
                "expires_at": self.expires_at,
            },
            sort_keys=True,
            separators=(",", ":"),
        )


def sign_token(token: Token, key: bytes) -> str:
    payload = _b64(token.payload_json().encode("utf-8"))
    sig = hmac.new(key, payload.encode("ascii"), hashlib.sha256).digest()
    return f"{payload}.{_b64(sig)}"


def verify_token(wire: str, key: bytes, now_ms: int) -> Token | None:
    """Decode and verify a wire token; None on any tampering or expiry.

    Verification is strict: the payload must be the canonical serialization
    and the signature the canonical encoding, so flipping any byte of the
    wire form invalidates the token.
    """
    if not isinstance(wire, str) or wire.count(".") != 1:
        return None
    payload_b64, sig_b64 = wire.split(".")
    expected = _b64(hmac.new(key, payload_b64.encode("ascii"), hashlib.sha256).digest())
    if not hmac.compare_digest(sig_b64, expected):
        return None
    try:
        payload = json.loads(_unb64(payload_b64).decode("utf-8"))
        token = Token(
            subject=payload["subject"],
            groups=tuple(payload["groups"]),
            kind=payload["kind"],
            issued_at=payload["issued_at"],
            expires_at=payload["expires_at"],
        )
    except Exception:
        return None
    if _b64(token.payload_json().encode("utf-8")) != payload_b64:
        return None
    if token.kind not in KINDS or token.expires_at <= token.issued_at:
        return None
    if now_ms >= token.expires_at:
        return None
    return token


@dataclass(frozen=True)
class GroupPolicy:
    group: str
    pattern: str  # lfn:// glob or svc://<name>
    actions: frozenset[str]

    def __post_init__(self):
        compile_pattern(self.pattern)  # validates
        bad = self.actions - set(ACTIONS)
        if bad:
            raise ValidationError(f"unknown actions: {sorted(bad)}")


def compile_pattern(pattern: str) -> re.Pattern:
    """Glob pattern -> regex. '*' is one segment; trailing '**' any suffix."""
    scheme, sep, rest = pattern.partition("://")
    if sep != "://" or scheme not in ("lfn", "svc"):
        raise ValidationError(f"pattern must be lfn:// or svc://, got {pattern!r}")
    segments = rest.split("/") if rest else []
    if not segments or any(s == "" for s in segments):
        raise ValidationError(f"malformed pattern: {pattern!r}")
    parts = []
    for i, seg in enumerate(segments):
        if seg == "**":
            if i != len(segments) - 1:
                raise ValidationError("'**' is only allowed as the final segment")
            continue
        if seg == "*":
            parts.append(r"[^/]+")
        elif _SEGMENT_RE.match(seg):
            parts.append(re.escape(seg))
        else:
            raise ValidationError(f"bad pattern segment: {seg!r}")
    if segments[-1] == "**":
        if parts:
            body = "/".join(parts) + r"(?:/[^/]+)*"
        else:
            body = r"[^/]+(?:/[^/]+)*"
    else:
        body = "/".join(parts)
    return re.compile(rf"^{re.escape(scheme)}://{body}$")


@dataclass
class RegistrationRequest:
    request_id: str
    name: str
    email: str
    institution: str
    requested_groups: list[str]
    status: str = "PENDING"  # PENDING -> ACCEPTED | REJECTED

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "name": self.name,
            "email": self.email,
            "institution": self.institution,
            "requested_groups": list(self.requested_groups),
            "status": self.status,
        }


@dataclass
class _Credential:
    subject: str
    kind: str
    issued_at: int
    expires_at: int
    salt: bytes
    blob: bytes  # Fernet ciphertext of the credential payload


@dataclass
class _Account:
    subject: str
    groups: list[str]
    credential: _Credential


@dataclass(frozen=True)
class Decision:
    allow: bool
    reason: str


def _derive_key(passphrase: str, salt: bytes) -> bytes:
    kdf = PBKDF2HMAC(algorithm=SHA256(), length=32, salt=salt, iterations=_KDF_ITERATIONS)
    return base64.urlsafe_b64encode(kdf.derive(passphrase.encode("utf-8")))


class SecurityService:
    """Registration queue + credential store + policy decision point."""

    def __init__(self, clock: Clock, secret_key: bytes,
                 audit_path: Path | None = None,
                 token_ttl_ms: int = TOKEN_TTL_MS,
                 credential_ttl_ms: int = CREDENTIAL_TTL_MS,
                 service_kinds: dict[str, str] | None = None):
        self._clock = clock
        self._key = secret_key
        self._token_ttl = token_ttl_ms
        self._credential_ttl = credential_ttl_ms
        # minimum credential kind per service; DataMover is privileged-only
        self.service_kinds = dict(service_kinds or {"datamover": "full"})
        self._lock = threading.Lock()
        self._registrations: dict[str, RegistrationRequest] = {}
        self._accounts: dict[str, _Account] = {}
        self._policies: list[GroupPolicy] = []
        self._audit_path = audit_path
        self.audit_log: list[dict] = []
        self._serial = 0

    # -- registration -----------------------------------------------------

    def register(self, name: str, email: str, institution: str,
                 requested_groups: list[str] | None = None) -> RegistrationRequest:
        if not _EMAIL_RE.match(email or ""):
            raise ValidationError(f"invalid email: {email!r}")
        with self._lock:
            for req in self._registrations.values():
                if req.email == email and req.status in ("PENDING", "ACCEPTED"):
                    raise ConflictError(f"registration already {req.status.lower()} for {email}")
            self._serial += 1
            req = RegistrationRequest(
                request_id=f"reg-{self._serial:05d}",
                name=name,
                email=email,
                institution=institution,
                requested_groups=list(requested_groups or []),
            )
            self._registrations[req.request_id] = req
            return req

    def pending_registrations(self) -> list[RegistrationRequest]:
        with self._lock:
            return [r for r in self._registrations.values() if r.status == "PENDING"]

    def registration(self, request_id: str) -> RegistrationRequest:
        req = self._registrations.get(request_id)
        if req is None:
            raise NotFoundError(f"unknown registration: {request_id}")
        return req

    def review(self, request_id: str, decision: str, admin_token: str,
               groups: list[str] | None = None,
               kind: str = "moderate") -> tuple[str, str | None]:
        """Accept or reject a pending request.

        Acceptance deposits a credential in the store and returns the
        generated passphrase exactly once; group membership and credential
        kind are granted here, by the admin.
        """
        self._require_admin(admin_token)
        if decision not in ("accept", "reject"):
            raise ValidationError(f"decision must be accept or reject, got {decision!r}")
        if kind not in KINDS:
            raise ValidationError(f"unknown credential kind: {kind!r}")
        with self._lock:
            req = self._registrations.get(request_id)
            if req is None:
                raise NotFoundError(f"unknown registration: {request_id}")
            if req.status != "PENDING":
                raise ConflictError(f"registration {request_id} is not pending")
            if decision == "reject":
                req.status = "REJECTED"
                return "REJECTED", None
            req.status = "ACCEPTED"
            passphrase = secrets.token_urlsafe(12)
            granted = list(groups) if groups is not None else list(req.requested_groups)
            self._store_credential(req.email, granted, kind, passphrase)
            return "ACCEPTED", passphrase

    def _store_credential(self, subject: str, groups: list[str], kind: str,
                          passphrase: str) -> None:
        now = self._clock.now_ms()
        salt = os.urandom(16)
        payload = json.dumps({"subject": subject, "kind": kind}).encode("utf-8")
        blob = Fernet(_derive_key(passphrase, salt)).encrypt(payload)
        cred = _Credential(
            subject=subject, kind=kind, issued_at=now,
            expires_at=now + self._credential_ttl, salt=salt, blob=blob,
        )
        self._accounts[subject] = _Account(subject=subject, groups=list(groups), credential=cred)

    def bootstrap_account(self, subject: str, groups: list[str], kind: str,
                          passphrase: str) -> None:
        """Create an account directly (deployment bootstrap, e.g. first admin)."""
        if kind not in KINDS:
            raise ValidationError(f"unknown credential kind: {kind!r}")
        with self._lock:
            self._store_credential(subject, groups, kind, passphrase)

    # -- sign-on -----------------------------------------------------------

    def login(self, subject: str, passphrase: str) -> str:
        """Issue a short-lived signed token for a stored credential."""
        now = self._clock.now_ms()
        with self._lock:
            account = self._accounts.get(subject)
        if account is None:
            raise AuthenticationError("authentication failed")
        cred = account.credential
        try:
            payload = Fernet(_derive_key(passphrase, cred.salt)).decrypt(cred.blob)
            decoded = json.loads(payload)
        except (InvalidToken, ValueError):
            raise AuthenticationError("authentication failed") from None
        if decoded.get("subject") != subject:
            raise AuthenticationError("authentication failed")
        if now >= cred.expires_at:
            raise AuthenticationError("credential expired")
        token = Token(
            subject=subject,
            groups=tuple(sorted(account.groups)),
            kind=cred.kind,
            issued_at=now,
            expires_at=now + self._token_ttl,
        )
        return sign_token(token, self._key)

    def issue_token(self, subject: str, groups: list[str], kind: str,
                    ttl_ms: int | None = None) -> str:
        """Mint a token directly (tests and in-process services)."""
        now = self._clock.now_ms()
        token = Token(subject=subject, groups=tuple(sorted(groups)), kind=kind,
                      issued_at=now, expires_at=now + (ttl_ms or self._token_ttl))
        return sign_token(token, self._key)

    def peek(self, wire: str) -> Token | None:
        return verify_token(wire, self._key, self._clock.now_ms())

    # -- authorization -----------------------------------------------------

    def add_policy(self, policy: GroupPolicy, admin_token: str) -> None:
        self._require_admin(admin_token)
        with self._lock:
            if policy not in self._policies:
                self._policies.append(policy)

    def policies(self) -> list[GroupPolicy]:
        with self._lock:
            return list(self._policies)

    def authorize(self, wire_token: str | None, resource: str, action: str) -> Decision:
        """Deny-by-default group decision; file- or service-oriented by scheme."""
        token = verify_token(wire_token, self._key, self._clock.now_ms()) if wire_token else None
        decision = self._decide(token, resource, action)
        self._audit(token, resource, action, decision)
        return decision

    def _decide(self, token: Token | None, resource: str, action: str) -> Decision:
        if token is None:
            return Decision(False, "invalid token")
        if action not in ACTIONS:
            return Decision(False, f"unknown action {action!r}")
        if resource.startswith("svc://"):
            required = self.service_kinds.get(resource[len("svc://"):], "moderate")
            if required == "full" and token.kind != "full":
                return Decision(False, f"service requires kind=full, token is {token.kind}")
        with self._lock:
            policies = list(self._policies)
        for policy in policies:
            if policy.group in token.groups and action in policy.actions \
                    and compile_pattern(policy.pattern).match(resource):
                return Decision(True, f"group {policy.group} allows {action} on {policy.pattern}")
        return Decision(False, "no-matching-policy")

    def check(self, wire_token: str | None, resource: str, action: str) -> Token:
        """authorize() that raises on deny and returns the verified token."""
        decision = self.authorize(wire_token, resource, action)
        if not decision.allow:
            raise AuthorizationDenied(decision.reason, resource=resource, action=action)
        return verify_token(wire_token, self._key, self._clock.now_ms())

    def _require_admin(self, wire_token: str) -> Token:
        token = verify_token(wire_token, self._key, self._clock.now_ms())
        if token is None or ADMIN_GROUP not in token.groups:
            raise AuthorizationDenied("admin group required")
        return token

    def _audit(self, token: Token | None, resource: str, action: str,
               decision: Decision) -> None:
        record = {
            "t_ms": self._clock.now_ms(),
            "subject": token.subject if token else None,
            "resource": resource,
            "action": action,
            "allow": decision.allow,
            "reason": decision.reason,
        }
        with self._lock:
            self.audit_log.append(record)
            if self._audit_path is not None:
                with open(self._audit_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record) + "\n")
