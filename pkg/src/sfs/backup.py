"""Zip-archive backup and restore.

Archive layout (format version 1):

    manifest.json          format_version, created_at, tables, blobs, checksums
    tables/<name>.jsonl    one JSON object per row, LF line endings
    directory.ldif         full directory export
    blobs/<sha256>         raw file content

The manifest carries a SHA-256 checksum for every other member; import
verifies all of them before touching any state, so a damaged archive
restores nothing at all.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from datetime import datetime, timezone
from pathlib import Path

from .directory import Directory
from .errors import SfsError
from .store import TABLES, IoFailure, Store

FORMAT_VERSION = 1


class ChecksumMismatch(SfsError):
    code = "CHECKSUM_MISMATCH"


class FormatVersionUnsupported(SfsError):
    code = "FORMAT_VERSION_UNSUPPORTED"


class NotEmpty(SfsError):
    code = "NOT_EMPTY"


def _jsonl(rows: list[dict]) -> bytes:
    return "".join(json.dumps(row, sort_keys=True) + "\n" for row in rows).encode()


def backup_export(store: Store, directory: Directory, out: Path | str) -> dict:
    """Write a backup archive; returns the manifest that was embedded in it."""
    out = Path(out)
    members: dict[str, bytes] = {}
    counts: dict[str, int] = {}
    # Store reads happen under the store lock per call; taking the snapshot
    # table-by-table is consistent because the service serializes mutations
    # against backup through its own lock.
    for table in TABLES:
        rows = store.table_rows(table)
        counts[table] = len(rows)
        members[f"tables/{table}.jsonl"] = _jsonl(rows)
    members["directory.ldif"] = directory.export_ldif().encode()
    referenced = {row["sha256"] for row in store.table_rows("files")}
    for sha in sorted(referenced):
        path = store.blob_path(sha)
        if not path.exists():
            raise IoFailure(f"blob {sha} referenced but missing on disk")
        members[f"blobs/{sha}"] = path.read_bytes()
    manifest = {
        "format_version": FORMAT_VERSION,
        "created_at": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
        "tables": counts,
        "blobs": len(referenced),
        "checksums": {
            name: hashlib.sha256(data).hexdigest() for name, data in members.items()
        },
    }
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        with zipfile.ZipFile(out, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            zf.writestr("manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
            for name, data in sorted(members.items()):
                zf.writestr(name, data)
    except OSError as exc:
        raise IoFailure(f"cannot write archive: {exc}") from exc
    return manifest


def read_manifest(archive: Path | str) -> dict:
    with zipfile.ZipFile(archive) as zf:
        return json.loads(zf.read("manifest.json"))


def backup_import(
    store: Store, directory: Directory, archive: Path | str, force: bool = False
) -> dict:
    """Restore an archive into the store and directory; all-or-nothing.

    Returns the row/blob counts that were restored.
    """
    if not force and not (store.is_empty() and directory.is_pristine()):
        raise NotEmpty("target system is not empty; pass force to replace it")
    try:
        zf = zipfile.ZipFile(archive)
    except (OSError, zipfile.BadZipFile) as exc:
        raise IoFailure(f"cannot read archive: {exc}") from exc
    with zf:
        manifest = json.loads(zf.read("manifest.json"))
        version = manifest.get("format_version")
        if version != FORMAT_VERSION:
            raise FormatVersionUnsupported(
                f"archive format_version {version!r}, supported: {FORMAT_VERSION}"
            )
        checksums: dict[str, str] = manifest.get("checksums", {})
        present = {n for n in zf.namelist() if n != "manifest.json"}
        if present != set(checksums):
            raise ChecksumMismatch(
                "archive members do not match manifest checksums list"
            )
        contents: dict[str, bytes] = {}
        for name, expected in checksums.items():
            data = zf.read(name)
            if hashlib.sha256(data).hexdigest() != expected:
                raise ChecksumMismatch(f"member {name} fails its checksum")
            contents[name] = data

    tables: dict[str, list[dict]] = {}
    for table in TABLES:
        member = f"tables/{table}.jsonl"
        if member not in contents:
            raise ChecksumMismatch(f"archive is missing {member}")
        rows = [
            json.loads(line)
            for line in contents[member].decode().splitlines()
            if line.strip()
        ]
        tables[table] = rows
    ldif_text = contents["directory.ldif"].decode() if "directory.ldif" in contents else None
    if ldif_text is None:
        raise ChecksumMismatch("archive is missing directory.ldif")
    blobs = {
        name.split("/", 1)[1]: data
        for name, data in contents.items()
        if name.startswith("blobs/")
    }
    for sha, data in blobs.items():
        if hashlib.sha256(data).hexdigest() != sha:
            raise ChecksumMismatch(f"blob member {sha} content does not match its name")

    # Validate the LDIF in a scratch directory before mutating anything.
    scratch = Directory(directory.base_dn)
    scratch.import_ldif(ldif_text, force=True)

    store.replace_all(tables, blobs)
    directory.import_ldif(ldif_text, force=True)
    return {
        "tables": {t: len(rows) for t, rows in tables.items()},
        "blobs": len(blobs),
    }
