"""Operator entry point: run the service, bootstrap it, restore a backup.

Bootstrap solves the first-admin problem: certificates can only be issued
over the API by an administrator, but the very first administrator has no
certificate yet.  It runs offline against the data directories and leaves
a ready-to-use credential bundle on disk.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .. import backup, pki
from ..acl import ROLE_ADMIN
from ..config import ServerConfig
from ..errors import SfsError
from .core import SfsSystem
from .runner import build_server


def _load_config(path: str | None) -> ServerConfig:
    return ServerConfig.load(path)


def cmd_run(args: argparse.Namespace) -> int:
    system = SfsSystem(_load_config(args.config))
    server = build_server(system)
    print(
        f"sfs-server listening on https://{system.config.listen_host}:{system.config.listen_port}",
        flush=True,
    )
    server.run()
    return 0


def cmd_bootstrap(args: argparse.Namespace) -> int:
    system = SfsSystem(_load_config(args.config))
    username = args.admin
    if system.directory.has_user(username):
        print(f"error: user {username!r} already exists", file=sys.stderr)
        return 1
    system.directory.ensure_base()
    system.directory.add_user(username, ROLE_ADMIN)
    profile = pki.CertificateProfile(
        kind=pki.CertKind.CLIENT,
        subject=system.directory.user_dn(username),
        validity_days=args.validity_days,
    )
    cert, key = pki.issue_certificate(system.ca_cert, system.ca_key, profile)
    system.directory.set_certificate(username, cert.der_bytes)
    system._sync_mirror()
    out = Path(args.out)
    paths = pki.write_credential_bundle(out, username, cert, key, system.ca_cert)
    print(f"administrator {username!r} created")
    for label, path in paths.items():
        print(f"  {label}: {path}")
    return 0


def cmd_restore(args: argparse.Namespace) -> int:
    system = SfsSystem(_load_config(args.config))
    counts = backup.backup_import(system.store, system.directory, args.archive, force=args.force)
    system.store.append_audit(
        principal="anonymous",
        action="ADMIN_RESTORE",
        target=str(args.archive),
        outcome="success",
        detail="offline restore",
    )
    print(f"restored {sum(counts['tables'].values())} rows, {counts['blobs']} blobs")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sfs-server")
    parser.add_argument("--config", help="config file (falls back to $SFS_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("run", help="serve the API")

    p_boot = sub.add_parser("bootstrap", help="create the first administrator")
    p_boot.add_argument("--admin", required=True, help="administrator username")
    p_boot.add_argument("--out", required=True, help="directory for the credential bundle")
    p_boot.add_argument("--validity-days", type=int, default=365)

    p_restore = sub.add_parser("restore", help="import a backup archive")
    p_restore.add_argument("archive")
    p_restore.add_argument("--force", action="store_true", help="replace existing state")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "bootstrap":
            return cmd_bootstrap(args)
        if args.command == "restore":
            return cmd_restore(args)
    except SfsError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
