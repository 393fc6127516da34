"""Backup archives: layout, checksum verification, all-or-nothing restore."""

import io
import json
import zipfile

import pytest

from sfs.acl import AclEntry, Permission, parse_scope, parse_subject
from sfs.backup import (
    ChecksumMismatch,
    FormatVersionUnsupported,
    NotEmpty,
    backup_export,
    backup_import,
    read_manifest,
)
from sfs.directory import Directory
from sfs.dn import parse_dn
from sfs.store import TABLES, Store

BASE = parse_dn("dc=sfs,dc=local")


def populated_system(root):
    """A small but representative system: users, groups, files, ACL, audit."""
    directory = Directory(BASE, root / "directory.ldif")
    directory.ensure_base()
    directory.add_user("ann", "administrator")
    directory.add_user("bob", "client")
    directory.set_certificate("ann", b"fake-der-ann")
    directory.add_group("dev")
    directory.add_member("dev", "bob")

    store = Store(root / "store")
    home = parse_scope("home:bob")
    store.put_file(home, "notes.txt", io.BytesIO(b"hello"), "bob")
    store.put_file(parse_scope("group:dev"), "spec.pdf", io.BytesIO(b"%PDF"), "ann")
    store.set_acl_entry(
        AclEntry(
            subject=parse_subject("group:dev"),
            scope=parse_scope("group:dev"),
            permissions=frozenset({Permission.VIEW, Permission.DOWNLOAD}),
        )
    )
    store.append_audit("ann", "ADMIN_USER_ADD", "user:bob", "success")
    store.append_audit("bob", "UPLOAD", "home:bob/notes.txt", "success")
    principals = [
        (p.username, p.role, p.status, p.cert_fingerprint, p.dn.render())
        for p in directory.list_users()
    ]
    groups, memberships = [], []
    for name, members in directory.list_groups():
        groups.append((name, directory.group_dn(name).render()))
        memberships.extend((name, m) for m in members)
    store.sync_directory(principals, groups, memberships)
    return store, directory


def observable_state(store, directory):
    return {
        "tables": {t: store.table_rows(t) for t in TABLES},
        "blobs": sorted(store.blob_hashes()),
        "directory": directory.snapshot(),
    }


@pytest.fixture
def archive(tmp_path):
    store, directory = populated_system(tmp_path / "src")
    path = tmp_path / "backup.zip"
    manifest = backup_export(store, directory, path)
    state = observable_state(store, directory)
    store.close()
    return path, manifest, state


class TestExport:
    def test_member_layout(self, archive):
        path, manifest, _ = archive
        with zipfile.ZipFile(path) as zf:
            names = set(zf.namelist())
        assert "manifest.json" in names
        assert "directory.ldif" in names
        for table in TABLES:
            assert f"tables/{table}.jsonl" in names
        assert sum(1 for n in names if n.startswith("blobs/")) == manifest["blobs"] == 2

    def test_manifest_checksums_cover_every_member(self, archive):
        path, manifest, _ = archive
        assert manifest["format_version"] == 1
        with zipfile.ZipFile(path) as zf:
            names = set(zf.namelist()) - {"manifest.json"}
            assert set(manifest["checksums"]) == names
            import hashlib

            for name, expected in manifest["checksums"].items():
                assert hashlib.sha256(zf.read(name)).hexdigest() == expected

    def test_embedded_manifest_matches_returned_one(self, archive):
        path, manifest, _ = archive
        assert read_manifest(path) == manifest

    def test_table_counts(self, archive):
        _, manifest, _ = archive
        assert manifest["tables"]["principals"] == 2
        assert manifest["tables"]["files"] == 2
        assert manifest["tables"]["acl_entries"] == 1
        assert manifest["tables"]["audit_log"] == 2


class TestRestore:
    def test_round_trip_reproduces_observable_state(self, archive, tmp_path):
        path, _, state = archive
        store = Store(tmp_path / "dst")
        directory = Directory(BASE, tmp_path / "dst.ldif")
        counts = backup_import(store, directory, path)
        assert observable_state(store, directory) == state
        assert counts["tables"]["audit_log"] == 2
        # restored files actually read back
        assert store.read_file(parse_scope("home:bob"), "notes.txt")[1] == b"hello"
        store.close()

    def test_restore_appends_no_audit_events(self, archive, tmp_path):
        path, _, _ = archive
        store = Store(tmp_path / "dst")
        directory = Directory(BASE)
        backup_import(store, directory, path)
        assert [e.seq for e in store.query_audit()] == [1, 2]
        store.close()

    def test_refuses_nonempty_target(self, archive, tmp_path):
        path, _, state = archive
        store, directory = populated_system(tmp_path / "busy")
        with pytest.raises(NotEmpty):
            backup_import(store, directory, path)
        backup_import(store, directory, path, force=True)
        assert observable_state(store, directory) == state
        store.close()

    def test_export_import_idempotent(self, archive, tmp_path):
        path, manifest, _ = archive
        store = Store(tmp_path / "dst")
        directory = Directory(BASE)
        backup_import(store, directory, path)
        second = backup_export(store, directory, tmp_path / "second.zip")
        first = dict(manifest, created_at=None)
        assert dict(second, created_at=None) == first
        store.close()


def rewrite_archive(src, dst, mutate):
    """Copy a zip, applying ``mutate(name, data) -> data | None`` to members."""
    with zipfile.ZipFile(src) as zin, zipfile.ZipFile(dst, "w") as zout:
        for name in zin.namelist():
            data = mutate(name, zin.read(name))
            if data is not None:
                zout.writestr(name, data)


class TestRejection:
    def assert_untouched_after(self, tmp_path, bad_archive, exc_type):
        store = Store(tmp_path / "dst")
        directory = Directory(BASE)
        with pytest.raises(exc_type):
            backup_import(store, directory, bad_archive)
        assert store.is_empty()
        assert directory.snapshot() == {}
        store.close()

    def test_corrupted_table_member(self, archive, tmp_path):
        path, _, _ = archive
        bad = tmp_path / "bad.zip"
        rewrite_archive(
            path, bad,
            lambda n, d: d + b"{}\n" if n == "tables/files.jsonl" else d,
        )
        self.assert_untouched_after(tmp_path, bad, ChecksumMismatch)

    def test_corrupted_blob_member(self, archive, tmp_path):
        path, _, _ = archive
        bad = tmp_path / "bad.zip"
        rewrite_archive(
            path, bad,
            lambda n, d: d[:-1] + b"?" if n.startswith("blobs/") else d,
        )
        self.assert_untouched_after(tmp_path, bad, ChecksumMismatch)

    def test_missing_member(self, archive, tmp_path):
        path, _, _ = archive
        bad = tmp_path / "bad.zip"
        rewrite_archive(path, bad, lambda n, d: None if n == "directory.ldif" else d)
        self.assert_untouched_after(tmp_path, bad, ChecksumMismatch)

    def test_unexpected_extra_member(self, archive, tmp_path):
        path, _, _ = archive
        with zipfile.ZipFile(path) as zin:
            members = {n: zin.read(n) for n in zin.namelist()}
        bad = tmp_path / "bad.zip"
        with zipfile.ZipFile(bad, "w") as zout:
            for name, data in members.items():
                zout.writestr(name, data)
            zout.writestr("blobs/deadbeef", b"stowaway")
        self.assert_untouched_after(tmp_path, bad, ChecksumMismatch)

    def test_future_format_version(self, archive, tmp_path):
        path, _, _ = archive

        def bump(name, data):
            if name == "manifest.json":
                manifest = json.loads(data)
                manifest["format_version"] = 2
                return json.dumps(manifest).encode()
            return data

        bad = tmp_path / "bad.zip"
        rewrite_archive(path, bad, bump)
        self.assert_untouched_after(tmp_path, bad, FormatVersionUnsupported)

    def test_blob_name_must_match_content(self, archive, tmp_path):
        """A blob whose checksum passes but whose name lies is still refused."""
        path, _, _ = archive
        with zipfile.ZipFile(path) as zin:
            members = {n: zin.read(n) for n in zin.namelist()}
        manifest = json.loads(members["manifest.json"])
        victim = next(n for n in members if n.startswith("blobs/"))
        forged = b"forged content"
        import hashlib

        manifest["checksums"][victim] = hashlib.sha256(forged).hexdigest()
        members[victim] = forged
        members["manifest.json"] = json.dumps(manifest).encode()
        bad = tmp_path / "bad.zip"
        with zipfile.ZipFile(bad, "w") as zout:
            for name, data in members.items():
                zout.writestr(name, data)
        self.assert_untouched_after(tmp_path, bad, ChecksumMismatch)

    def test_not_a_zip(self, tmp_path):
        bogus = tmp_path / "bogus.zip"
        bogus.write_bytes(b"this is not an archive")
        from sfs.store import IoFailure

        self.assert_untouched_after(tmp_path, bogus, IoFailure)
