"""Hierarchical principal directory.

DN-addressed entries held in memory and checkpointed to an LDIF file on
every mutation (temp file + atomic rename), so a crash can lose at most the
mutation in flight.  The semantics mirror what an LDAP server would give us:
tree-shaped entries, equality search over a subtree, LDIF interchange.

People live under ``ou=people``, groups under ``ou=groups``.  A person is
bound to their certificate through the ``certFingerprint`` attribute; until
a certificate has been issued the fingerprint holds a well-known all-zero
placeholder that never resolves to a session.
"""

from __future__ import annotations

import base64
import hashlib
import os
import re
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

from .acl import NAME_RE, ROLES, STATUSES, Principal
from .dn import DistinguishedName, parse_dn
from .errors import SfsError

PEOPLE_OU = "people"
GROUPS_OU = "groups"

ATTR_UID = "uid"
ATTR_ROLE = "role"
ATTR_STATUS = "status"
ATTR_FINGERPRINT = "certFingerprint"
ATTR_CERTIFICATE = "userCertificate;binary"
ATTR_CN = "cn"
ATTR_MEMBER = "member"

# Fingerprint of a person who has no certificate yet.  Never matched by
# lookup_principal_by_fingerprint.
NO_CERT_FINGERPRINT = "0" * 64

FINGERPRINT_RE = re.compile(r"^[0-9a-f]{64}$")


class DuplicateDn(SfsError):
    code = "DUPLICATE_DN"


class NoSuchParent(SfsError):
    code = "NO_SUCH_PARENT"


class SchemaViolation(SfsError):
    code = "SCHEMA_VIOLATION"


class NoSuchEntry(SfsError):
    code = "NO_SUCH_ENTRY"


class HasChildren(SfsError):
    code = "HAS_CHILDREN"


class NotFound(SfsError):
    code = "NOT_FOUND"


class Ambiguous(SfsError):
    code = "AMBIGUOUS"


class MalformedLdif(SfsError):
    code = "MALFORMED_LDIF"

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass
class DirectoryEntry:
    dn: DistinguishedName
    attributes: dict[str, list[bytes]]

    def first_text(self, attr: str) -> str | None:
        values = self.attributes.get(attr)
        if not values:
            return None
        return values[0].decode()

    def texts(self, attr: str) -> list[str]:
        return [v.decode() for v in self.attributes.get(attr, [])]

    def copy(self) -> DirectoryEntry:
        return DirectoryEntry(self.dn, {k: list(v) for k, v in self.attributes.items()})


@dataclass(frozen=True)
class SearchFilter:
    attribute_type: str
    value: bytes

    def __post_init__(self) -> None:
        if not self.attribute_type:
            raise SfsError("search filter needs an attribute type")
        if isinstance(self.value, str):
            object.__setattr__(self, "value", self.value.encode())


def attrs(**kwargs: str | bytes | list) -> dict[str, list[bytes]]:
    """Convenience builder turning str/bytes/list values into the multimap."""
    out: dict[str, list[bytes]] = {}
    for key, value in kwargs.items():
        if not isinstance(value, list):
            value = [value]
        out[key] = [v.encode() if isinstance(v, str) else bytes(v) for v in value]
    return out


class Directory:
    """In-memory DN tree with LDIF checkpointing.

    Mutations are serialized under one lock; reads hand out copies so a
    caller never observes a partially applied change.
    """

    def __init__(self, base_dn: DistinguishedName, path: Path | str | None = None):
        self.base_dn = base_dn
        self.path = Path(path) if path is not None else None
        self._entries: dict[DistinguishedName, DirectoryEntry] = {}
        self._lock = threading.RLock()
        if self.path is not None and self.path.exists():
            for entry in _parse_ldif(self.path.read_text()):
                self._insert(entry, defer_member_existence=True)
            problems = self.validate()
            if problems:
                raise SfsError(f"checkpoint failed validation: {problems[0]}")

    # -- tree helpers ------------------------------------------------------

    @property
    def people_base(self) -> DistinguishedName:
        return self.base_dn.child("ou", PEOPLE_OU)

    @property
    def groups_base(self) -> DistinguishedName:
        return self.base_dn.child("ou", GROUPS_OU)

    def user_dn(self, username: str) -> DistinguishedName:
        return self.people_base.child("uid", username)

    def group_dn(self, name: str) -> DistinguishedName:
        return self.groups_base.child("cn", name)

    def _is_person(self, dn: DistinguishedName) -> bool:
        return dn.parent() == self.people_base and dn.rdns[0][0] == "uid"

    def _is_group(self, dn: DistinguishedName) -> bool:
        return dn.parent() == self.groups_base and dn.rdns[0][0] == "cn"

    # -- schema ------------------------------------------------------------

    def _check_schema(self, entry: DirectoryEntry, defer_member_existence: bool = False) -> None:
        rdn_type, rdn_value = entry.dn.rdns[0]
        naming = entry.attributes.get(rdn_type)
        if naming is None or rdn_value.encode() not in naming:
            raise SchemaViolation(f"entry must carry its naming attribute {rdn_type}")
        if self._is_person(entry.dn):
            username = entry.first_text(ATTR_UID)
            if username != entry.dn.rdns[0][1]:
                raise SchemaViolation("uid attribute must equal the uid RDN")
            if not NAME_RE.match(username or ""):
                raise SchemaViolation(f"invalid username {username!r}")
            role = entry.first_text(ATTR_ROLE)
            if role not in ROLES:
                raise SchemaViolation(f"role must be one of {ROLES}, got {role!r}")
            status = entry.first_text(ATTR_STATUS)
            if status not in STATUSES:
                raise SchemaViolation(f"status must be one of {STATUSES}, got {status!r}")
            fp = entry.first_text(ATTR_FINGERPRINT)
            if fp is None or not FINGERPRINT_RE.match(fp):
                raise SchemaViolation("certFingerprint must be 64 lowercase hex chars")
            der_values = entry.attributes.get(ATTR_CERTIFICATE, [])
            if fp == NO_CERT_FINGERPRINT:
                if der_values:
                    raise SchemaViolation("placeholder fingerprint with a stored certificate")
            else:
                if len(der_values) != 1 or not der_values[0]:
                    raise SchemaViolation("missing userCertificate;binary for bound fingerprint")
                if hashlib.sha256(der_values[0]).hexdigest() != fp:
                    raise SchemaViolation("certFingerprint does not match stored certificate")
        elif self._is_group(entry.dn):
            name = entry.first_text(ATTR_CN)
            if name != entry.dn.rdns[0][1]:
                raise SchemaViolation("cn attribute must equal the cn RDN")
            if not NAME_RE.match(name or ""):
                raise SchemaViolation(f"invalid group name {name!r}")
            normalized: list[bytes] = []
            for raw in entry.texts(ATTR_MEMBER):
                member_dn = parse_dn(raw)
                if not self._is_person(member_dn):
                    raise SchemaViolation(f"member {raw!r} is not a people entry DN")
                if not defer_member_existence and member_dn not in self._entries:
                    raise SchemaViolation(f"member {raw!r} does not exist")
                normalized.append(member_dn.render().encode())
            if ATTR_MEMBER in entry.attributes:
                entry.attributes[ATTR_MEMBER] = normalized

    # -- core operations ----------------------------------------------------

    def _insert(self, entry: DirectoryEntry, defer_member_existence: bool = False) -> None:
        if entry.dn in self._entries:
            raise DuplicateDn(f"entry {entry.dn} already exists")
        if entry.dn != self.base_dn:
            parent = entry.dn.parent()
            if parent is None or parent not in self._entries:
                raise NoSuchParent(f"parent of {entry.dn} does not exist")
        entry = entry.copy()
        rdn_type, rdn_value = entry.dn.rdns[0]
        entry.attributes.setdefault(rdn_type, [rdn_value.encode()])
        self._check_schema(entry, defer_member_existence)
        self._entries[entry.dn] = entry

    def add_entry(self, entry: DirectoryEntry) -> None:
        with self._lock:
            self._insert(entry)
            self._checkpoint()

    def get_entry(self, dn: DistinguishedName) -> DirectoryEntry:
        with self._lock:
            entry = self._entries.get(dn)
            if entry is None:
                raise NoSuchEntry(f"no entry {dn}")
            return entry.copy()

    def has_entry(self, dn: DistinguishedName) -> bool:
        with self._lock:
            return dn in self._entries

    def delete_entry(self, dn: DistinguishedName) -> None:
        """Remove a leaf entry and scrub any group memberships pointing at it."""
        with self._lock:
            if dn not in self._entries:
                raise NoSuchEntry(f"no entry {dn}")
            if any(other.parent() == dn for other in self._entries):
                raise HasChildren(f"{dn} still has children")
            del self._entries[dn]
            rendered = dn.render().encode()
            for entry in self._entries.values():
                members = entry.attributes.get(ATTR_MEMBER)
                if members and rendered in members:
                    entry.attributes[ATTR_MEMBER] = [m for m in members if m != rendered]
            self._checkpoint()

    def modify_entry(self, dn: DistinguishedName, replace: dict[str, list[bytes]]) -> None:
        """Replace the listed attributes wholesale; an empty list removes one."""
        with self._lock:
            entry = self._entries.get(dn)
            if entry is None:
                raise NoSuchEntry(f"no entry {dn}")
            candidate = entry.copy()
            for attr, values in replace.items():
                values = [v.encode() if isinstance(v, str) else bytes(v) for v in values]
                if values:
                    candidate.attributes[attr] = values
                else:
                    candidate.attributes.pop(attr, None)
            self._check_schema(candidate)
            self._entries[dn] = candidate
            self._checkpoint()

    def search(self, base: DistinguishedName, flt: SearchFilter) -> list[DirectoryEntry]:
        """Equality search over the subtree rooted at ``base`` (inclusive)."""
        with self._lock:
            if base not in self._entries:
                raise NoSuchEntry(f"no entry {base}")
            attr_lower = flt.attribute_type.lower()
            hits = []
            for dn, entry in self._entries.items():
                if dn != base and not dn.is_under(base):
                    continue
                for attr, values in entry.attributes.items():
                    if attr.lower() == attr_lower and flt.value in values:
                        hits.append(entry.copy())
                        break
            hits.sort(key=lambda e: e.dn.render())
            return hits

    # -- principal projection ------------------------------------------------

    def _principal_from_entry(self, entry: DirectoryEntry) -> Principal:
        return Principal(
            username=entry.first_text(ATTR_UID) or "",
            role=entry.first_text(ATTR_ROLE) or "",
            status=entry.first_text(ATTR_STATUS) or "",
            dn=entry.dn,
            cert_fingerprint=entry.first_text(ATTR_FINGERPRINT) or "",
            groups=tuple(self._groups_of_locked(entry.dn)),
        )

    def lookup_principal_by_fingerprint(self, fp: str) -> Principal:
        """Resolve a TLS peer's certificate fingerprint to a principal."""
        if not FINGERPRINT_RE.match(fp):
            raise ValueError(f"fingerprint must be 64 lowercase hex chars, got {fp!r}")
        with self._lock:
            if fp == NO_CERT_FINGERPRINT:
                raise NotFound("placeholder fingerprint")
            matches = [
                e
                for dn, e in self._entries.items()
                if self._is_person(dn) and e.first_text(ATTR_FINGERPRINT) == fp
            ]
            if not matches:
                raise NotFound(f"no principal with fingerprint {fp}")
            if len(matches) > 1:
                raise Ambiguous(f"{len(matches)} principals share fingerprint {fp}")
            return self._principal_from_entry(matches[0])

    def _groups_of_locked(self, user_dn: DistinguishedName) -> list[str]:
        rendered = user_dn.render().encode()
        names = [
            entry.first_text(ATTR_CN)
            for dn, entry in self._entries.items()
            if self._is_group(dn) and rendered in entry.attributes.get(ATTR_MEMBER, [])
        ]
        return sorted(n for n in names if n)

    def groups_of(self, user_dn: DistinguishedName) -> list[str]:
        with self._lock:
            if user_dn not in self._entries:
                raise NoSuchEntry(f"no entry {user_dn}")
            return self._groups_of_locked(user_dn)

    # -- LDIF ---------------------------------------------------------------

    def export_ldif(self, base: DistinguishedName | None = None) -> str:
        """LDIF v1 text for the subtree at ``base`` (default: whole tree)."""
        base = base or self.base_dn
        with self._lock:
            if self._entries and base not in self._entries:
                raise NoSuchEntry(f"no entry {base}")
            entries = [
                e for dn, e in self._entries.items() if dn == base or dn.is_under(base)
            ]
            # Parents have strictly fewer RDNs, so depth-then-name order keeps
            # every parent ahead of its children.
            entries.sort(key=lambda e: (len(e.dn.rdns), e.dn.render()))
            lines = ["version: 1"]
            for entry in entries:
                lines.append("")
                lines.append(_ldif_line("dn", entry.dn.render().encode()))
                for attr, values in entry.attributes.items():
                    for value in values:
                        lines.append(_ldif_line(attr, value))
            return "\n".join(lines) + "\n"

    def import_ldif(self, text: str, force: bool = False) -> int:
        """Load LDIF records; all-or-nothing.  ``force`` replaces existing state."""
        with self._lock:
            if self._entries and not force:
                raise SfsError("directory is not empty; pass force to replace it")
            parsed = _parse_ldif(text)
            previous = self._entries
            self._entries = {}
            try:
                # Entries arrive parents-first but sibling order is arbitrary,
                # so groups may precede the people they reference; check member
                # existence only once the whole tree is staged.
                for entry in parsed:
                    self._insert(entry, defer_member_existence=True)
                for entry in self._entries.values():
                    for raw in entry.texts(ATTR_MEMBER):
                        if parse_dn(raw) not in self._entries:
                            raise SchemaViolation(f"member {raw!r} does not exist")
            except SfsError:
                self._entries = previous
                raise
            self._checkpoint()
            return len(parsed)

    def _checkpoint(self) -> None:
        if self.path is None:
            return
        text = self.export_ldif(self.base_dn) if self._entries else "version: 1\n"
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=".directory-")
        try:
            with os.fdopen(fd, "w") as fh:
                fh.write(text)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise

    # -- integrity ------------------------------------------------------------

    def validate(self) -> list[str]:
        """Full-scan integrity check; returns human-readable violations."""
        problems = []
        with self._lock:
            for dn, entry in self._entries.items():
                if dn != self.base_dn:
                    parent = dn.parent()
                    if parent is None or parent not in self._entries:
                        problems.append(f"{dn}: parent missing")
                for raw in entry.texts(ATTR_MEMBER):
                    try:
                        member_dn = parse_dn(raw)
                    except SfsError:
                        problems.append(f"{dn}: unparseable member {raw!r}")
                        continue
                    if member_dn not in self._entries:
                        problems.append(f"{dn}: dangling member {raw!r}")
                try:
                    self._check_schema(entry.copy())
                except SfsError as exc:
                    problems.append(f"{dn}: {exc}")
        return problems

    def is_pristine(self) -> bool:
        """True when the tree holds nothing beyond the base scaffolding."""
        with self._lock:
            scaffolding = {self.base_dn, self.people_base, self.groups_base}
            return all(dn in scaffolding for dn in self._entries)

    def snapshot(self) -> dict[str, dict[str, tuple[bytes, ...]]]:
        """Structural snapshot used by tests and backup comparison."""
        with self._lock:
            return {
                dn.render(): {a: tuple(v) for a, v in e.attributes.items()}
                for dn, e in self._entries.items()
            }

    def wipe(self) -> None:
        with self._lock:
            self._entries = {}
            self._checkpoint()

    # -- conveniences used by the service ------------------------------------

    def ensure_base(self) -> None:
        """Create the base entry and the people/groups containers if absent."""
        with self._lock:
            for dn in (self.base_dn, self.people_base, self.groups_base):
                if dn not in self._entries:
                    self._insert(DirectoryEntry(dn, {}))
            self._checkpoint()

    def add_user(self, username: str, role: str) -> DistinguishedName:
        dn = self.user_dn(username)
        entry = DirectoryEntry(
            dn,
            attrs(
                uid=username,
                role=role,
                status="active",
                certFingerprint=NO_CERT_FINGERPRINT,
            ),
        )
        self.add_entry(entry)
        return dn

    def set_certificate(self, username: str, der: bytes) -> str:
        fp = hashlib.sha256(der).hexdigest()
        self.modify_entry(
            self.user_dn(username),
            {ATTR_FINGERPRINT: [fp.encode()], ATTR_CERTIFICATE: [der]},
        )
        return fp

    def has_user(self, username: str) -> bool:
        return NAME_RE.match(username) is not None and self.has_entry(self.user_dn(username))

    def has_group(self, name: str) -> bool:
        return NAME_RE.match(name) is not None and self.has_entry(self.group_dn(name))

    def principal_by_username(self, username: str) -> Principal:
        with self._lock:
            entry = self._entries.get(self.user_dn(username))
            if entry is None:
                raise NoSuchEntry(f"no user {username!r}")
            return self._principal_from_entry(entry)

    def list_users(self) -> list[Principal]:
        with self._lock:
            return sorted(
                (
                    self._principal_from_entry(e)
                    for dn, e in self._entries.items()
                    if self._is_person(dn)
                ),
                key=lambda p: p.username,
            )

    def add_group(self, name: str) -> DistinguishedName:
        dn = self.group_dn(name)
        self.add_entry(DirectoryEntry(dn, attrs(cn=name)))
        return dn

    def group_members(self, name: str) -> list[str]:
        entry = self.get_entry(self.group_dn(name))
        usernames = []
        for raw in entry.texts(ATTR_MEMBER):
            member_dn = parse_dn(raw)
            usernames.append(member_dn.rdns[0][1])
        return sorted(usernames)

    def list_groups(self) -> list[tuple[str, list[str]]]:
        with self._lock:
            names = sorted(
                e.first_text(ATTR_CN)
                for dn, e in self._entries.items()
                if self._is_group(dn)
            )
        return [(name, self.group_members(name)) for name in names if name]

    def add_member(self, group: str, username: str) -> None:
        """Idempotent: adding an existing member leaves the group unchanged."""
        with self._lock:
            entry = self._entries.get(self.group_dn(group))
            if entry is None:
                raise NoSuchEntry(f"no group {group!r}")
            member = self.user_dn(username)
            if member not in self._entries:
                raise NoSuchEntry(f"no user {username!r}")
            members = entry.attributes.get(ATTR_MEMBER, [])
            rendered = member.render().encode()
            if rendered not in members:
                self.modify_entry(
                    entry.dn, {ATTR_MEMBER: [*members, rendered]}
                )

    def remove_member(self, group: str, username: str) -> None:
        with self._lock:
            entry = self._entries.get(self.group_dn(group))
            if entry is None:
                raise NoSuchEntry(f"no group {group!r}")
            rendered = self.user_dn(username).render().encode()
            members = entry.attributes.get(ATTR_MEMBER, [])
            if rendered not in members:
                raise NoSuchEntry(f"{username!r} is not a member of {group!r}")
            self.modify_entry(
                entry.dn, {ATTR_MEMBER: [m for m in members if m != rendered]}
            )


# -- LDIF encoding ------------------------------------------------------------

_SAFE_INIT = set(range(0x21, 0x7F)) - {0x3A, 0x3C}  # printable minus ':' '<'
_SAFE_BODY = set(range(0x20, 0x7F))


def _ldif_safe(value: bytes) -> bool:
    if not value:
        return False
    if value[0] not in _SAFE_INIT or value[-1] == 0x20:
        return False
    return all(b in _SAFE_BODY for b in value)


def _ldif_line(attr: str, value: bytes) -> str:
    if not attr.endswith(";binary") and _ldif_safe(value):
        return f"{attr}: {value.decode('ascii')}"
    return f"{attr}:: {base64.b64encode(value).decode('ascii')}"


def _parse_ldif(text: str) -> list[DirectoryEntry]:
    # Unfold RFC 2849 continuations (we never emit them, but accept them).
    logical: list[tuple[int, str]] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        if raw.startswith(" "):
            if not logical:
                raise MalformedLdif("continuation before any line", lineno)
            prev_no, prev = logical[-1]
            logical[-1] = (prev_no, prev + raw[1:])
        else:
            logical.append((lineno, raw))

    entries: list[DirectoryEntry] = []
    current_dn: DistinguishedName | None = None
    current_attrs: dict[str, list[bytes]] = {}

    def flush() -> None:
        nonlocal current_dn, current_attrs
        if current_dn is not None:
            entries.append(DirectoryEntry(current_dn, current_attrs))
        current_dn, current_attrs = None, {}

    for lineno, line in logical:
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            continue
        attr, sep, rest = line.partition(":")
        if not sep or not attr.strip():
            raise MalformedLdif(f"expected 'attr: value', got {line!r}", lineno)
        attr = attr.strip()
        if rest.startswith(":"):
            b64 = rest[1:].strip()
            try:
                value = base64.b64decode(b64, validate=True)
            except Exception:
                raise MalformedLdif(f"invalid base64 value for {attr}", lineno) from None
        else:
            value = rest.lstrip(" ").encode()
        if attr == "version":
            if current_dn is not None or current_attrs:
                raise MalformedLdif("version line inside a record", lineno)
            if value != b"1":
                raise MalformedLdif(f"unsupported LDIF version {value!r}", lineno)
            continue
        if attr == "dn":
            if current_dn is not None:
                raise MalformedLdif("dn line inside a record", lineno)
            try:
                current_dn = parse_dn(value.decode())
            except (SfsError, UnicodeDecodeError) as exc:
                raise MalformedLdif(f"bad dn: {exc}", lineno) from None
            continue
        if current_dn is None:
            raise MalformedLdif("attribute line before dn", lineno)
        current_attrs.setdefault(attr, []).append(value)
    flush()
    return entries
