"""Relational persistence: file metadata, ACL entries, audit log, blobs.

Six tables in an embedded sqlite database — principals, groups and
memberships mirror the directory so the relational model covers users and
groups as well as files; the directory itself stays authoritative and the
service re-syncs the mirror after each directory mutation.

File content lives outside the database as content-addressed blobs
(``blobs/<sha256>``), deduplicated and garbage-collected when the last
referencing record goes away.  A blob is fully durable on disk before its
metadata row commits, so a crash in between leaves an invisible orphan
rather than a record pointing at missing bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import sqlite3
import tempfile
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import BinaryIO, Callable, Iterable

from .acl import AclEntry, Permission, Scope, Subject, parse_scope, parse_subject
from .errors import SfsError

DEFAULT_MAX_UPLOAD = 256 * 1024 * 1024

AUDIT_ACTIONS = frozenset(
    {
        "AUTH",
        "LIST",
        "DOWNLOAD",
        "UPLOAD",
        "DELETE",
        "ADMIN_USER_ADD",
        "ADMIN_USER_DEL",
        "ADMIN_USER_MOD",
        "ADMIN_CERT_ISSUE",
        "ADMIN_GROUP_ADD",
        "ADMIN_GROUP_DEL",
        "ADMIN_MEMBER_ADD",
        "ADMIN_MEMBER_DEL",
        "ADMIN_ACL_SET",
        "ADMIN_ACL_DEL",
        "ADMIN_BACKUP",
        "ADMIN_RESTORE",
        "ADMIN_AUDIT_READ",
    }
)

AUDIT_OUTCOMES = frozenset({"success", "denied", "error"})

TABLES = ("principals", "groups", "memberships", "files", "acl_entries", "audit_log")

_SCHEMA = """
CREATE TABLE IF NOT EXISTS principals (
    username TEXT PRIMARY KEY,
    role TEXT NOT NULL,
    status TEXT NOT NULL,
    cert_fingerprint TEXT NOT NULL,
    dn TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS groups (
    name TEXT PRIMARY KEY,
    dn TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS memberships (
    group_name TEXT NOT NULL,
    username TEXT NOT NULL,
    PRIMARY KEY (group_name, username)
);
CREATE TABLE IF NOT EXISTS files (
    file_id TEXT PRIMARY KEY,
    scope TEXT NOT NULL,
    name TEXT NOT NULL,
    size_bytes INTEGER NOT NULL,
    sha256 TEXT NOT NULL,
    uploader TEXT NOT NULL,
    uploaded_at TEXT NOT NULL,
    version INTEGER NOT NULL,
    UNIQUE (scope, name)
);
CREATE TABLE IF NOT EXISTS acl_entries (
    subject TEXT NOT NULL,
    scope TEXT NOT NULL,
    permissions TEXT NOT NULL,
    PRIMARY KEY (subject, scope)
);
CREATE TABLE IF NOT EXISTS audit_log (
    seq INTEGER PRIMARY KEY,
    at TEXT NOT NULL,
    principal TEXT NOT NULL,
    action TEXT NOT NULL,
    target TEXT NOT NULL,
    outcome TEXT NOT NULL,
    detail TEXT NOT NULL
);
"""


class NameInvalid(SfsError):
    code = "NAME_INVALID"


class TooLarge(SfsError):
    code = "TOO_LARGE"


class NotFound(SfsError):
    code = "NOT_FOUND"


class CorruptBlob(SfsError):
    code = "CORRUPT_BLOB"


class IoFailure(SfsError):
    code = "IO_FAILURE"


def check_name(name: str) -> None:
    raw = name.encode("utf-8", errors="surrogatepass")
    if not 1 <= len(raw) <= 255:
        raise NameInvalid(f"name must be 1-255 bytes, got {len(raw)}")
    if "/" in name or "\x00" in name:
        raise NameInvalid("name must not contain '/' or NUL")
    if name in (".", ".."):
        raise NameInvalid(f"name must not be {name!r}")


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class FileRecord:
    file_id: str
    scope: Scope
    name: str
    size_bytes: int
    sha256: str
    uploader: str
    uploaded_at: str
    version: int

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["scope"] = self.scope.render()
        return d


@dataclass(frozen=True)
class AuditEvent:
    seq: int
    at: str
    principal: str
    action: str
    target: str
    outcome: str
    detail: str

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def _record_from_row(row: sqlite3.Row) -> FileRecord:
    return FileRecord(
        file_id=row["file_id"],
        scope=parse_scope(row["scope"]),
        name=row["name"],
        size_bytes=row["size_bytes"],
        sha256=row["sha256"],
        uploader=row["uploader"],
        uploaded_at=row["uploaded_at"],
        version=row["version"],
    )


class Store:
    """Embedded store rooted at a directory: ``store.db`` plus ``blobs/``."""

    def __init__(self, root: Path | str, max_upload_bytes: int = DEFAULT_MAX_UPLOAD):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.blob_dir = self.root / "blobs"
        self.blob_dir.mkdir(exist_ok=True)
        self.max_upload_bytes = max_upload_bytes
        self._lock = threading.RLock()
        self._db = sqlite3.connect(self.root / "store.db", check_same_thread=False)
        self._db.row_factory = sqlite3.Row
        self._db.execute("PRAGMA journal_mode=WAL")
        self._db.execute("PRAGMA synchronous=FULL")
        self._db.execute("PRAGMA foreign_keys=ON")
        with self._lock, self._db:
            self._db.executescript(_SCHEMA)
        # Test seam: called after the blob is durably on disk but before the
        # metadata row commits, to simulate a crash at the worst moment.
        self.fault_after_blob_write: Callable[[], None] | None = None

    def close(self) -> None:
        with self._lock:
            self._db.close()

    # -- blobs ---------------------------------------------------------------

    def blob_path(self, sha256: str) -> Path:
        return self.blob_dir / sha256

    def _write_blob(self, content: BinaryIO) -> tuple[str, int]:
        """Spool the stream to a temp file while hashing, then rename into place."""
        digest = hashlib.sha256()
        size = 0
        fd, tmp = tempfile.mkstemp(dir=self.blob_dir, prefix=".upload-")
        try:
            with os.fdopen(fd, "wb") as out:
                while True:
                    chunk = content.read(1024 * 1024)
                    if not chunk:
                        break
                    size += len(chunk)
                    if size > self.max_upload_bytes:
                        raise TooLarge(
                            f"content exceeds {self.max_upload_bytes} bytes"
                        )
                    digest.update(chunk)
                    out.write(chunk)
                out.flush()
                os.fsync(out.fileno())
            sha = digest.hexdigest()
            final = self.blob_path(sha)
            if final.exists():
                Path(tmp).unlink()
            else:
                os.replace(tmp, final)
            return sha, size
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise

    def _gc_blob(self, sha256: str) -> None:
        row = self._db.execute(
            "SELECT COUNT(*) AS n FROM files WHERE sha256 = ?", (sha256,)
        ).fetchone()
        if row["n"] == 0:
            self.blob_path(sha256).unlink(missing_ok=True)

    # -- files ---------------------------------------------------------------

    def put_file(self, scope: Scope, name: str, content: BinaryIO, uploader: str) -> FileRecord:
        check_name(name)
        with self._lock:
            sha, size = self._write_blob(content)
            if self.fault_after_blob_write is not None:
                self.fault_after_blob_write()
            old = self._db.execute(
                "SELECT sha256, version FROM files WHERE scope = ? AND name = ?",
                (scope.render(), name),
            ).fetchone()
            record = FileRecord(
                file_id=str(uuid.uuid4()),
                scope=scope,
                name=name,
                size_bytes=size,
                sha256=sha,
                uploader=uploader,
                uploaded_at=_utcnow(),
                version=(old["version"] + 1) if old else 1,
            )
            try:
                with self._db:
                    self._db.execute(
                        "DELETE FROM files WHERE scope = ? AND name = ?",
                        (scope.render(), name),
                    )
                    self._db.execute(
                        "INSERT INTO files VALUES (?,?,?,?,?,?,?,?)",
                        (
                            record.file_id,
                            scope.render(),
                            name,
                            size,
                            sha,
                            uploader,
                            record.uploaded_at,
                            record.version,
                        ),
                    )
            except sqlite3.Error as exc:
                raise IoFailure(f"metadata commit failed: {exc}") from exc
            if old and old["sha256"] != sha:
                self._gc_blob(old["sha256"])
            return record

    def get_record(self, scope: Scope, name: str) -> FileRecord:
        with self._lock:
            row = self._db.execute(
                "SELECT * FROM files WHERE scope = ? AND name = ?",
                (scope.render(), name),
            ).fetchone()
        if row is None:
            raise NotFound(f"no file {name!r} in {scope}")
        return _record_from_row(row)

    def get_file(self, scope: Scope, name: str) -> tuple[FileRecord, BinaryIO]:
        """Return the record plus an open handle whose bytes were just verified.

        The handle is verified in a first pass and rewound, so the caller can
        stream from it even if the blob is unlinked concurrently.
        """
        record = self.get_record(scope, name)
        try:
            handle = open(self.blob_path(record.sha256), "rb")
        except FileNotFoundError:
            raise CorruptBlob(f"blob {record.sha256} missing") from None
        digest = hashlib.sha256()
        while True:
            chunk = handle.read(1024 * 1024)
            if not chunk:
                break
            digest.update(chunk)
        if digest.hexdigest() != record.sha256:
            handle.close()
            raise CorruptBlob(
                f"blob for {name!r} hashes to {digest.hexdigest()}, expected {record.sha256}"
            )
        handle.seek(0)
        return record, handle

    def read_file(self, scope: Scope, name: str) -> tuple[FileRecord, bytes]:
        record, handle = self.get_file(scope, name)
        with handle:
            return record, handle.read()

    def delete_file(self, scope: Scope, name: str) -> FileRecord:
        with self._lock:
            record = self.get_record(scope, name)
            with self._db:
                self._db.execute(
                    "DELETE FROM files WHERE scope = ? AND name = ?",
                    (scope.render(), name),
                )
            self._gc_blob(record.sha256)
            return record

    def list_files(self, scope: Scope) -> list[FileRecord]:
        with self._lock:
            rows = self._db.execute(
                "SELECT * FROM files WHERE scope = ? ORDER BY name",
                (scope.render(),),
            ).fetchall()
        return [_record_from_row(r) for r in rows]

    def iter_records(self) -> list[FileRecord]:
        with self._lock:
            rows = self._db.execute("SELECT * FROM files ORDER BY scope, name").fetchall()
        return [_record_from_row(r) for r in rows]

    def verify_all(self) -> list[str]:
        """Re-hash every live blob; returns one line per violation."""
        problems = []
        for record in self.iter_records():
            path = self.blob_path(record.sha256)
            if not path.exists():
                problems.append(f"{record.scope}/{record.name}: blob missing")
                continue
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            if digest != record.sha256:
                problems.append(
                    f"{record.scope}/{record.name}: hash {digest} != {record.sha256}"
                )
        return problems

    # -- audit ----------------------------------------------------------------

    def append_audit(
        self, principal: str, action: str, target: str, outcome: str, detail: str = ""
    ) -> AuditEvent:
        if action not in AUDIT_ACTIONS:
            raise SfsError(f"unknown audit action {action!r}")
        if outcome not in AUDIT_OUTCOMES:
            raise SfsError(f"unknown audit outcome {outcome!r}")
        with self._lock:
            try:
                with self._db:
                    cur = self._db.execute(
                        "INSERT INTO audit_log (seq, at, principal, action, target, outcome, detail) "
                        "VALUES ((SELECT COALESCE(MAX(seq), 0) + 1 FROM audit_log), ?, ?, ?, ?, ?, ?)",
                        (_utcnow(), principal, action, target, outcome, detail),
                    )
                    seq = self._db.execute(
                        "SELECT seq, at FROM audit_log WHERE rowid = ?", (cur.lastrowid,)
                    ).fetchone()
            except sqlite3.Error as exc:
                raise IoFailure(f"audit append failed: {exc}") from exc
            return AuditEvent(seq["seq"], seq["at"], principal, action, target, outcome, detail)

    def query_audit(
        self,
        principal: str | None = None,
        action: str | None = None,
        seq_min: int | None = None,
        seq_max: int | None = None,
    ) -> list[AuditEvent]:
        clauses, params = [], []
        if principal is not None:
            clauses.append("principal = ?")
            params.append(principal)
        if action is not None:
            clauses.append("action = ?")
            params.append(action)
        if seq_min is not None:
            clauses.append("seq >= ?")
            params.append(seq_min)
        if seq_max is not None:
            clauses.append("seq <= ?")
            params.append(seq_max)
        sql = "SELECT * FROM audit_log"
        if clauses:
            sql += " WHERE " + " AND ".join(clauses)
        sql += " ORDER BY seq"
        with self._lock:
            rows = self._db.execute(sql, params).fetchall()
        return [
            AuditEvent(
                r["seq"], r["at"], r["principal"], r["action"], r["target"],
                r["outcome"], r["detail"],
            )
            for r in rows
        ]

    # -- ACL persistence --------------------------------------------------------

    def set_acl_entry(self, entry: AclEntry) -> None:
        perms = json.dumps(sorted(p.value for p in entry.permissions))
        with self._lock, self._db:
            self._db.execute(
                "INSERT INTO acl_entries (subject, scope, permissions) VALUES (?,?,?) "
                "ON CONFLICT (subject, scope) DO UPDATE SET permissions = excluded.permissions",
                (entry.subject.render(), entry.scope.render(), perms),
            )

    def delete_acl_entry(self, subject: Subject, scope: Scope) -> bool:
        with self._lock, self._db:
            cur = self._db.execute(
                "DELETE FROM acl_entries WHERE subject = ? AND scope = ?",
                (subject.render(), scope.render()),
            )
            return cur.rowcount > 0

    def list_acl_entries(self) -> list[AclEntry]:
        with self._lock:
            rows = self._db.execute(
                "SELECT * FROM acl_entries ORDER BY subject, scope"
            ).fetchall()
        return [
            AclEntry(
                subject=parse_subject(r["subject"]),
                scope=parse_scope(r["scope"]),
                permissions=frozenset(Permission(p) for p in json.loads(r["permissions"])),
            )
            for r in rows
        ]

    def replace_acl_entries(self, entries: Iterable[AclEntry]) -> None:
        with self._lock, self._db:
            self._db.execute("DELETE FROM acl_entries")
            for entry in entries:
                self._db.execute(
                    "INSERT INTO acl_entries (subject, scope, permissions) VALUES (?,?,?)",
                    (
                        entry.subject.render(),
                        entry.scope.render(),
                        json.dumps(sorted(p.value for p in entry.permissions)),
                    ),
                )

    # -- directory mirror ---------------------------------------------------------

    def sync_directory(
        self,
        principals: Iterable[tuple[str, str, str, str, str]],
        groups: Iterable[tuple[str, str]],
        memberships: Iterable[tuple[str, str]],
    ) -> None:
        """Replace the mirror tables with the directory's current contents.

        Rows: principals (username, role, status, cert_fingerprint, dn),
        groups (name, dn), memberships (group_name, username).
        """
        with self._lock, self._db:
            self._db.execute("DELETE FROM principals")
            self._db.execute("DELETE FROM groups")
            self._db.execute("DELETE FROM memberships")
            self._db.executemany("INSERT INTO principals VALUES (?,?,?,?,?)", principals)
            self._db.executemany("INSERT INTO groups VALUES (?,?)", groups)
            self._db.executemany("INSERT INTO memberships VALUES (?,?)", memberships)

    # -- bulk access for backup -----------------------------------------------------

    def table_rows(self, table: str) -> list[dict]:
        if table not in TABLES:
            raise SfsError(f"unknown table {table!r}")
        with self._lock:
            rows = self._db.execute(f"SELECT * FROM {table}").fetchall()  # noqa: S608
        return [dict(r) for r in rows]

    def table_counts(self) -> dict[str, int]:
        with self._lock:
            return {
                t: self._db.execute(f"SELECT COUNT(*) AS n FROM {t}").fetchone()["n"]  # noqa: S608
                for t in TABLES
            }

    def blob_hashes(self) -> list[str]:
        with self._lock:
            return sorted(
                p.name for p in self.blob_dir.iterdir() if not p.name.startswith(".")
            )

    def replace_all(self, tables: dict[str, list[dict]], blobs: dict[str, bytes]) -> None:
        """All-or-nothing restore of every table and blob (used by backup import)."""
        with self._lock:
            with self._db:
                for table in TABLES:
                    self._db.execute(f"DELETE FROM {table}")  # noqa: S608
                    for row in tables.get(table, []):
                        cols = ",".join(row.keys())
                        marks = ",".join("?" for _ in row)
                        self._db.execute(
                            f"INSERT INTO {table} ({cols}) VALUES ({marks})",  # noqa: S608
                            list(row.values()),
                        )
            for path in self.blob_dir.iterdir():
                path.unlink()
            for sha, content in blobs.items():
                tmp = self.blob_dir / f".restore-{sha}"
                tmp.write_bytes(content)
                os.replace(tmp, self.blob_path(sha))

    def is_empty(self) -> bool:
        counts = self.table_counts()
        return sum(counts.values()) == 0 and not self.blob_hashes()

    def wipe(self) -> None:
        self.replace_all({}, {})
