#!/usr/bin/env python3
"""Disposable live server for the console's end-to-end tests.

Builds a one-off CA and server certificate, registers an administrator
(root) and a client (mika, member of group dev with the group's default
grant), prints one JSON line with the port and credential paths, then
serves until the process is killed.

Usage: python3 serve_fixture.py <state-dir> [--with-ui <dist-dir>]
"""

import json
import socket
import sys
import threading
import time
from pathlib import Path

from sfs import pki
from sfs.acl import DEFAULT_GROUP_PERMISSIONS, AclEntry, Scope, Subject
from sfs.config import ServerConfig
from sfs.dn import parse_dn
from sfs.server.core import SfsSystem
from sfs.server.runner import build_server

BASE = "dc=sfs,dc=local"


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def issue_client(ca_cert, ca_key, username: str):
    profile = pki.CertificateProfile(
        kind=pki.CertKind.CLIENT,
        subject=parse_dn(f"uid={username},ou=people,{BASE}"),
        validity_days=30,
    )
    return pki.issue_certificate(ca_cert, ca_key, profile)


def main() -> int:
    root = Path(sys.argv[1])
    root.mkdir(parents=True, exist_ok=True)
    ui_dir = None
    if len(sys.argv) > 3 and sys.argv[2] == "--with-ui":
        candidate = Path(sys.argv[3])
        if (candidate / "index.html").exists():
            ui_dir = candidate

    ca_cert, ca_key = pki.init_ca(parse_dn("cn=Console Test Root"), 30, root / "ca")
    server_cert, server_key = pki.issue_certificate(
        ca_cert,
        ca_key,
        pki.CertificateProfile(
            kind=pki.CertKind.SERVER,
            subject=parse_dn("cn=localhost"),
            validity_days=30,
            san_dns_names=("localhost",),
        ),
    )
    (root / "server.crt.pem").write_text(server_cert.pem())
    pki.write_key(root / "server.key.pem", server_key)

    port = free_port()
    values = {
        "listen.host": "127.0.0.1",
        "listen.port": str(port),
        "ca_cert": str(root / "ca" / "ca.crt.pem"),
        "ca_key": str(root / "ca" / "ca.key.pem"),
        "server_cert": str(root / "server.crt.pem"),
        "server_key": str(root / "server.key.pem"),
        "directory.path": str(root / "directory.ldif"),
        "store.path": str(root / "store"),
    }
    if ui_dir is not None:
        values["ui.path"] = str(ui_dir)
    system = SfsSystem(ServerConfig.from_values(values))

    bundles = {}
    for username, role in (("root", "administrator"), ("mika", "client")):
        system.directory.add_user(username, role)
        cert, key = issue_client(ca_cert, ca_key, username)
        system.directory.set_certificate(username, cert.der_bytes)
        bundles[username] = pki.write_credential_bundle(
            root / "bundles" / username, username, cert, key, ca_cert
        )
    system.directory.add_group("dev")
    system.directory.add_member("dev", "mika")
    system.store.set_acl_entry(
        AclEntry(Subject.group("dev"), Scope("group", "dev"), frozenset(DEFAULT_GROUP_PERMISSIONS))
    )
    system._sync_mirror()

    server = build_server(system)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not server.started:
        if time.time() > deadline:
            print(json.dumps({"error": "server did not start"}), flush=True)
            return 1
        time.sleep(0.02)

    print(
        json.dumps(
            {
                "base_url": f"https://localhost:{port}",
                "ca": str(root / "ca" / "ca.crt.pem"),
                "admin_cert": str(bundles["root"]["cert"]),
                "admin_key": str(bundles["root"]["key"]),
                "client_cert": str(bundles["mika"]["cert"]),
                "client_key": str(bundles["mika"]["key"]),
                "ui": ui_dir is not None,
            }
        ),
        flush=True,
    )
    thread.join()
    return 0


if __name__ == "__main__":
    sys.exit(main())
