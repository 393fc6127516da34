"""Service facade tying the directory, store, ACL engine and CA together.

Every endpoint handler delegates here.  Mutations across the directory and
the store's mirror tables run under one lock so backup snapshots and the
relational mirror never observe a half-applied change.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import BinaryIO

from .. import acl, backup, pki
from ..acl import AclEntry, Permission, Scope, Subject
from ..config import ServerConfig
from ..directory import (
    ATTR_ROLE,
    ATTR_STATUS,
    Directory,
    DuplicateDn,
    NoSuchEntry,
)
from ..errors import SfsError
from ..store import FileRecord, Store
from .auth import Session


class ApiError(SfsError):
    """An SfsError carrying the HTTP status the REST layer should use."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code


def _http(status: int, exc: SfsError) -> ApiError:
    return ApiError(status, exc.code, exc.message)


class SfsSystem:
    def __init__(self, config: ServerConfig):
        self.config = config
        self.ca_cert = pki.load_certificate(config.ca_cert)
        self.ca_key = pki.load_key(config.ca_key)
        self.directory = Directory(config.base_dn, config.directory_path)
        self.store = Store(config.store_path, max_upload_bytes=config.max_upload_bytes)
        self.lock = threading.RLock()
        if not self.directory.snapshot():
            self.directory.ensure_base()
        self._sync_mirror()

    def close(self) -> None:
        self.store.close()

    # -- plumbing ---------------------------------------------------------

    def _sync_mirror(self) -> None:
        principals = [
            (p.username, p.role, p.status, p.cert_fingerprint, p.dn.render())
            for p in self.directory.list_users()
        ]
        groups, memberships = [], []
        for name, members in self.directory.list_groups():
            groups.append((name, self.directory.group_dn(name).render()))
            memberships.extend((name, m) for m in members)
        self.store.sync_directory(principals, groups, memberships)

    def _fresh_principal(self, session: Session) -> acl.Principal:
        """Re-read status and groups so suspensions apply to live connections."""
        try:
            return self.directory.principal_by_username(session.principal.username)
        except NoSuchEntry:
            raise ApiError(401, "UNKNOWN_PRINCIPAL", "principal no longer exists") from None

    def _parse_scope(self, text: str) -> Scope:
        try:
            return acl.parse_scope(text)
        except SfsError as exc:
            raise _http(400, exc) from None

    def _authorize(
        self,
        session: Session,
        permission: Permission,
        scope: Scope,
        file_uploader: str | None = None,
    ) -> acl.Principal:
        principal = self._fresh_principal(session)
        decision = acl.evaluate(
            principal, permission, scope, self.store.list_acl_entries(), file_uploader
        )
        if not decision.allow:
            raise ApiError(403, decision.reason, f"{permission.value} on {scope} denied")
        return principal

    def _require_admin(self, session: Session) -> acl.Principal:
        principal = self._fresh_principal(session)
        if principal.status != acl.STATUS_ACTIVE:
            raise ApiError(403, "SUSPENDED", "principal is suspended")
        if principal.role != acl.ROLE_ADMIN:
            raise ApiError(403, "NOT_ADMIN", "administrator role required")
        return principal

    def _scope_owner_exists(self, scope: Scope) -> bool:
        if scope.kind == "home":
            return self.directory.has_user(scope.name)
        return self.directory.has_group(scope.name)

    def _check_scope(self, scope: Scope, creating: bool = False) -> None:
        """404 for scopes that point at nothing.

        New content needs a live owner; reads and deletes stay possible as
        long as records remain, so retained files of deleted principals can
        still be inspected and cleaned up.
        """
        if self._scope_owner_exists(scope):
            return
        if not creating and self.store.list_files(scope):
            return
        raise ApiError(404, "UNKNOWN_SCOPE", f"scope {scope.render()} does not exist")

    # -- session views ------------------------------------------------------

    def whoami(self, session: Session) -> dict:
        principal = self._fresh_principal(session)
        entries = self.store.list_acl_entries()
        scopes = {Scope("home", principal.username)}
        scopes.update(Scope("group", g) for g in principal.groups)
        for entry in entries:
            subject = entry.subject
            if (subject.kind == "user" and subject.name == principal.username) or (
                subject.kind == "group" and subject.name in principal.groups
            ):
                scopes.add(entry.scope)
        effective = {
            scope.render(): sorted(
                p.value for p in acl.effective_permissions(principal, scope, entries)
            )
            for scope in scopes
        }
        return {
            "username": principal.username,
            "role": principal.role,
            "status": principal.status,
            "dn": principal.dn.render(),
            "fingerprint": principal.cert_fingerprint,
            "groups": list(principal.groups),
            "tls_version": session.tls_version,
            "effective_permissions": effective,
        }

    # -- file operations -------------------------------------------------------

    def list_files(self, session: Session, scope_text: str) -> list[dict]:
        scope = self._parse_scope(scope_text)
        self._authorize(session, Permission.VIEW, scope)
        self._check_scope(scope)
        return [
            {**r.to_dict(), "orphan": not self.directory.has_user(r.uploader)}
            for r in self.store.list_files(scope)
        ]

    def download(self, session: Session, scope_text: str, name: str) -> tuple[FileRecord, BinaryIO]:
        scope = self._parse_scope(scope_text)
        try:
            record = self.store.get_record(scope, name)
            uploader: str | None = record.uploader
        except SfsError:
            uploader = None
        self._authorize(session, Permission.DOWNLOAD, scope, uploader)
        self._check_scope(scope)
        try:
            return self.store.get_file(scope, name)
        except SfsError as exc:
            status = 404 if exc.code == "NOT_FOUND" else 500
            raise _http(status, exc) from None

    def upload(
        self,
        session: Session,
        scope_text: str,
        name: str,
        content: BinaryIO,
        if_match: str | None = None,
    ) -> FileRecord:
        scope = self._parse_scope(scope_text)
        principal = self._authorize(session, Permission.UPLOAD, scope)
        self._check_scope(scope, creating=True)
        with self.lock:
            if if_match is not None:
                try:
                    expected = int(if_match)
                except ValueError:
                    raise ApiError(400, "BAD_IF_MATCH", f"If-Match must be an integer, got {if_match!r}")
                try:
                    current = self.store.get_record(scope, name).version
                except SfsError:
                    current = 0
                if current != expected:
                    raise ApiError(
                        409,
                        "VERSION_CONFLICT",
                        f"live version is {current}, If-Match said {expected}",
                    )
            try:
                return self.store.put_file(scope, name, content, principal.username)
            except SfsError as exc:
                status = {"NAME_INVALID": 400, "TOO_LARGE": 413}.get(exc.code, 500)
                raise _http(status, exc) from None

    def delete_file(self, session: Session, scope_text: str, name: str) -> FileRecord:
        scope = self._parse_scope(scope_text)
        try:
            record = self.store.get_record(scope, name)
            uploader: str | None = record.uploader
        except SfsError:
            uploader = None
        self._authorize(session, Permission.DELETE, scope, uploader)
        self._check_scope(scope)
        with self.lock:
            try:
                return self.store.delete_file(scope, name)
            except SfsError as exc:
                raise _http(404, exc) from None

    # -- admin: users ---------------------------------------------------------

    def user_out(self, username: str) -> dict:
        try:
            p = self.directory.principal_by_username(username)
        except NoSuchEntry as exc:
            raise _http(404, exc) from None
        return {
            "username": p.username,
            "role": p.role,
            "status": p.status,
            "dn": p.dn.render(),
            "fingerprint": p.cert_fingerprint,
            "groups": list(p.groups),
        }

    def list_users(self, session: Session) -> list[dict]:
        self._require_admin(session)
        return [
            {
                "username": p.username,
                "role": p.role,
                "status": p.status,
                "dn": p.dn.render(),
                "fingerprint": p.cert_fingerprint,
                "groups": list(p.groups),
            }
            for p in self.directory.list_users()
        ]

    def user_add(self, session: Session, username: str, role: str) -> dict:
        self._require_admin(session)
        if role not in acl.ROLES:
            raise ApiError(400, "BAD_ROLE", f"role must be one of {acl.ROLES}")
        with self.lock:
            try:
                self.directory.add_user(username, role)
            except DuplicateDn as exc:
                raise ApiError(409, "DUPLICATE", exc.message) from None
            except SfsError as exc:
                raise _http(400, exc) from None
            self._sync_mirror()
        return self.user_out(username)

    def user_del(self, session: Session, username: str) -> None:
        self._require_admin(session)
        with self.lock:
            try:
                self.directory.delete_entry(self.directory.user_dn(username))
            except NoSuchEntry as exc:
                raise _http(404, exc) from None
            subject = Subject.user(username)
            for entry in self.store.list_acl_entries():
                if entry.subject == subject:
                    self.store.delete_acl_entry(entry.subject, entry.scope)
            self._sync_mirror()

    def user_mod(
        self, session: Session, username: str, role: str | None, status: str | None
    ) -> dict:
        self._require_admin(session)
        if role is None and status is None:
            raise ApiError(400, "NO_CHANGES", "nothing to modify: give role and/or status")
        if role is not None and role not in acl.ROLES:
            raise ApiError(400, "BAD_ROLE", f"role must be one of {acl.ROLES}")
        if status is not None and status not in acl.STATUSES:
            raise ApiError(400, "BAD_STATUS", f"status must be one of {acl.STATUSES}")
        replace: dict[str, list[bytes]] = {}
        if role is not None:
            replace[ATTR_ROLE] = [role.encode()]
        if status is not None:
            replace[ATTR_STATUS] = [status.encode()]
        with self.lock:
            try:
                self.directory.modify_entry(self.directory.user_dn(username), replace)
            except NoSuchEntry as exc:
                raise _http(404, exc) from None
            except SfsError as exc:
                raise _http(400, exc) from None
            self._sync_mirror()
        return self.user_out(username)

    def cert_issue(self, session: Session, username: str, validity_days: int) -> bytes:
        """Issue a fresh key+certificate for a user; returns the bundle zip."""
        self._require_admin(session)
        with self.lock:
            if not self.directory.has_user(username):
                raise ApiError(404, "NO_SUCH_ENTRY", f"no user {username!r}")
            profile = pki.CertificateProfile(
                kind=pki.CertKind.CLIENT,
                subject=self.directory.user_dn(username),
                validity_days=validity_days,
            )
            try:
                cert, key = pki.issue_certificate(self.ca_cert, self.ca_key, profile)
            except SfsError as exc:
                raise _http(400, exc) from None
            self.directory.set_certificate(username, cert.der_bytes)
            self._sync_mirror()
        return pki.credential_bundle_zip(username, cert, key, self.ca_cert)

    # -- admin: groups ----------------------------------------------------------

    def list_groups(self, session: Session) -> list[dict]:
        self._require_admin(session)
        return [
            {"name": name, "members": members}
            for name, members in self.directory.list_groups()
        ]

    def group_add(self, session: Session, name: str) -> dict:
        """Create a group plus its default share grant on the group scope."""
        self._require_admin(session)
        with self.lock:
            try:
                self.directory.add_group(name)
            except DuplicateDn as exc:
                raise ApiError(409, "DUPLICATE", exc.message) from None
            except SfsError as exc:
                raise _http(400, exc) from None
            self.store.set_acl_entry(
                AclEntry(
                    Subject.group(name),
                    Scope("group", name),
                    frozenset(acl.DEFAULT_GROUP_PERMISSIONS),
                )
            )
            self._sync_mirror()
        return {"name": name, "members": []}

    def group_del(self, session: Session, name: str) -> None:
        self._require_admin(session)
        with self.lock:
            try:
                self.directory.delete_entry(self.directory.group_dn(name))
            except NoSuchEntry as exc:
                raise _http(404, exc) from None
            scope = Scope("group", name)
            subject = Subject.group(name)
            for entry in self.store.list_acl_entries():
                if entry.subject == subject or entry.scope == scope:
                    self.store.delete_acl_entry(entry.subject, entry.scope)
            self._sync_mirror()

    def member_add(self, session: Session, group: str, username: str) -> dict:
        self._require_admin(session)
        with self.lock:
            try:
                self.directory.add_member(group, username)
            except NoSuchEntry as exc:
                raise _http(404, exc) from None
            self._sync_mirror()
        return {"name": group, "members": self.directory.group_members(group)}

    def member_del(self, session: Session, group: str, username: str) -> dict:
        self._require_admin(session)
        with self.lock:
            try:
                self.directory.remove_member(group, username)
            except NoSuchEntry as exc:
                raise _http(404, exc) from None
            self._sync_mirror()
        return {"name": group, "members": self.directory.group_members(group)}

    # -- admin: ACL ----------------------------------------------------------------

    def acl_set(self, session: Session, subject: str, scope: str, permissions: list[str]) -> dict:
        self._require_admin(session)
        try:
            parsed_subject = acl.parse_subject(subject)
            parsed_scope = acl.parse_scope(scope)
            perms = frozenset(Permission(p) for p in permissions)
        except (SfsError, ValueError) as exc:
            raise ApiError(400, "BAD_REQUEST", str(exc)) from None
        if not perms:
            raise ApiError(400, "BAD_REQUEST", "permissions must be non-empty")
        with self.lock:
            try:
                updated = acl.grant(
                    self.store.list_acl_entries(),
                    parsed_subject,
                    parsed_scope,
                    perms,
                    self.directory,
                )
            except SfsError as exc:
                raise _http(404, exc) from None
            self.store.replace_acl_entries(updated)
        return {
            "subject": subject,
            "scope": scope,
            "permissions": sorted(p.value for p in perms),
        }

    def acl_del(self, session: Session, subject: str, scope: str) -> None:
        self._require_admin(session)
        try:
            parsed_subject = acl.parse_subject(subject)
            parsed_scope = acl.parse_scope(scope)
        except SfsError as exc:
            raise ApiError(400, "BAD_REQUEST", str(exc)) from None
        with self.lock:
            try:
                updated = acl.revoke(self.store.list_acl_entries(), parsed_subject, parsed_scope)
            except SfsError as exc:
                raise _http(404, exc) from None
            self.store.replace_acl_entries(updated)

    def acl_list(self, session: Session) -> list[dict]:
        self._require_admin(session)
        return [
            {
                "subject": e.subject.render(),
                "scope": e.scope.render(),
                "permissions": sorted(p.value for p in e.permissions),
            }
            for e in self.store.list_acl_entries()
        ]

    # -- admin: audit and backup ---------------------------------------------------

    def audit_query(
        self,
        session: Session,
        principal: str | None,
        action: str | None,
        from_seq: int | None,
        to_seq: int | None,
    ) -> list[dict]:
        self._require_admin(session)
        events = self.store.query_audit(principal, action, from_seq, to_seq)
        return [e.to_dict() for e in events]

    def backup_to(self, session: Session, out: Path) -> dict:
        self._require_admin(session)
        with self.lock:
            return backup.backup_export(self.store, self.directory, out)
