"""Authorization engine.

Grant-only ACL over per-user home scopes and shared group scopes.  Admins
hold every file ability, owners are omnipotent in their own home, uploaders
may always delete their own files, everything else needs an explicit grant
to the user or to one of their groups.  Evaluation is a pure function so a
request is always judged against one consistent snapshot of the table.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .dn import DistinguishedName
from .errors import SfsError

NAME_RE = re.compile(r"^[a-z0-9_.-]{1,32}$")

ROLE_CLIENT = "client"
ROLE_ADMIN = "administrator"
ROLES = (ROLE_CLIENT, ROLE_ADMIN)

STATUS_ACTIVE = "active"
STATUS_SUSPENDED = "suspended"
STATUSES = (STATUS_ACTIVE, STATUS_SUSPENDED)

# Decision reasons, one per rule, in evaluation order.
REASON_SUSPENDED = "SUSPENDED"
REASON_ADMIN = "ADMIN"
REASON_OWNER = "OWNER"
REASON_UPLOADER = "UPLOADER"
REASON_GRANTED = "GRANTED"
REASON_NO_GRANT = "NO_GRANT"


class UnknownSubject(SfsError):
    code = "UNKNOWN_SUBJECT"


class UnknownScope(SfsError):
    code = "UNKNOWN_SCOPE"


class NoSuchAclEntry(SfsError):
    code = "NO_SUCH_ENTRY"


class BadScope(SfsError):
    code = "BAD_SCOPE"


class Permission(str, Enum):
    VIEW = "VIEW"
    DOWNLOAD = "DOWNLOAD"
    UPLOAD = "UPLOAD"
    DELETE = "DELETE"


ALL_PERMISSIONS = frozenset(Permission)

# Installed for a group's own scope when the group is created.
DEFAULT_GROUP_PERMISSIONS = frozenset(
    {Permission.VIEW, Permission.DOWNLOAD, Permission.UPLOAD}
)


@dataclass(frozen=True)
class Scope:
    """A file namespace: one user's home or one group's shared area."""

    kind: str  # "home" | "group"
    name: str

    def __post_init__(self) -> None:
        if self.kind not in ("home", "group"):
            raise BadScope(f"unknown scope kind {self.kind!r}")
        if not NAME_RE.match(self.name):
            raise BadScope(f"invalid scope name {self.name!r}")

    def render(self) -> str:
        return f"{self.kind}:{self.name}"

    def __str__(self) -> str:
        return self.render()


def parse_scope(text: str) -> Scope:
    """Parse ``home:{user}`` / ``group:{name}``."""
    kind, sep, name = text.partition(":")
    if not sep:
        raise BadScope(f"scope must look like home:user or group:name, got {text!r}")
    return Scope(kind, name)


@dataclass(frozen=True)
class Subject:
    """Grantee of an ACL entry: a single user or a whole group."""

    kind: str  # "user" | "group"
    name: str

    def __post_init__(self) -> None:
        if self.kind not in ("user", "group"):
            raise UnknownSubject(f"unknown subject kind {self.kind!r}")

    @classmethod
    def user(cls, name: str) -> Subject:
        return cls("user", name)

    @classmethod
    def group(cls, name: str) -> Subject:
        return cls("group", name)

    def render(self) -> str:
        return f"{self.kind}:{self.name}"


def parse_subject(text: str) -> Subject:
    kind, sep, name = text.partition(":")
    if not sep:
        raise UnknownSubject(f"subject must look like user:name or group:name, got {text!r}")
    return Subject(kind, name)


@dataclass(frozen=True)
class AclEntry:
    subject: Subject
    scope: Scope
    permissions: frozenset[Permission]

    def __post_init__(self) -> None:
        if not self.permissions:
            raise SfsError("an ACL entry must grant at least one permission")
        object.__setattr__(self, "permissions", frozenset(self.permissions))


@dataclass(frozen=True)
class Principal:
    username: str
    role: str
    status: str
    dn: DistinguishedName
    cert_fingerprint: str
    groups: tuple[str, ...]


@dataclass(frozen=True)
class Decision:
    allow: bool
    reason: str


def evaluate(
    principal: Principal,
    permission: Permission,
    scope: Scope,
    entries: list[AclEntry],
    file_uploader: str | None = None,
) -> Decision:
    """Decide one request.  Total function; rules apply in a fixed order:

    1. suspended principals are denied everything;
    2. administrators are allowed everything;
    3. the owner is allowed everything in their own home scope;
    4. DELETE of a file one uploaded oneself is always allowed;
    5. a matching user or group grant for this scope allows;
    6. otherwise deny.
    """
    if principal.status != STATUS_ACTIVE:
        return Decision(False, REASON_SUSPENDED)
    if principal.role == ROLE_ADMIN:
        return Decision(True, REASON_ADMIN)
    if scope.kind == "home" and scope.name == principal.username:
        return Decision(True, REASON_OWNER)
    if permission is Permission.DELETE and file_uploader == principal.username:
        return Decision(True, REASON_UPLOADER)
    groups = set(principal.groups)
    for entry in entries:
        if entry.scope != scope:
            continue
        subject = entry.subject
        applies = (subject.kind == "user" and subject.name == principal.username) or (
            subject.kind == "group" and subject.name in groups
        )
        if applies and permission in entry.permissions:
            return Decision(True, REASON_GRANTED)
    return Decision(False, REASON_NO_GRANT)


def grant(
    entries: list[AclEntry],
    subject: Subject,
    scope: Scope,
    permissions: frozenset[Permission] | set[Permission],
    directory,
) -> list[AclEntry]:
    """Upsert a grant; the new permission set replaces any previous one.

    ``directory`` answers has_user/has_group and is consulted so grants can
    only name existing principals and groups.
    """
    if subject.kind == "user" and not directory.has_user(subject.name):
        raise UnknownSubject(f"no such user {subject.name!r}")
    if subject.kind == "group" and not directory.has_group(subject.name):
        raise UnknownSubject(f"no such group {subject.name!r}")
    if scope.kind == "group" and not directory.has_group(scope.name):
        raise UnknownScope(f"no such group scope {scope.name!r}")
    entry = AclEntry(subject, scope, frozenset(permissions))
    kept = [e for e in entries if not (e.subject == subject and e.scope == scope)]
    kept.append(entry)
    return kept


def revoke(entries: list[AclEntry], subject: Subject, scope: Scope) -> list[AclEntry]:
    """Remove the (subject, scope) entry; later evaluations fall through."""
    kept = [e for e in entries if not (e.subject == subject and e.scope == scope)]
    if len(kept) == len(entries):
        raise NoSuchAclEntry(f"no grant for {subject.render()} on {scope.render()}")
    return kept


def effective_permissions(
    principal: Principal,
    scope: Scope,
    entries: list[AclEntry],
) -> set[Permission]:
    """Permissions evaluate() would allow with no file in play.

    Per-file allowances (DELETE of one's own upload) are excluded since they
    depend on the individual file.
    """
    return {
        perm
        for perm in Permission
        if evaluate(principal, perm, scope, entries, file_uploader=None).allow
    }
