"""Shared fixtures: a throwaway PKI, an in-process API harness, and a live
mTLS server for the tests that need real sockets.

The canonical population used throughout: administrator admin-ann, clients
bob and carol, groups dev = {bob, carol} and qa = {carol}, with the dev
group's default grant on its own scope.  Fixtures build it through the
directory/store layers directly so the audit log starts empty.
"""

from __future__ import annotations

import socket
import ssl
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import pytest
from fastapi.testclient import TestClient

from sfs import pki
from sfs.acl import DEFAULT_GROUP_PERMISSIONS, AclEntry, Scope, Subject
from sfs.config import ServerConfig
from sfs.dn import parse_dn
from sfs.server.app import create_app
from sfs.server.auth import PeerInfo
from sfs.server.core import SfsSystem
from sfs.server.runner import build_server


# -- acceptance criteria reporting --------------------------------------------
#
# Tests marked @pytest.mark.acceptance(n, "label") get a one-line verdict in
# the terminal summary so the release checklist can be read off a plain
# ``pytest`` run.

_ACCEPTANCE_BY_NODEID: dict[str, tuple[int, str]] = {}
_ACCEPTANCE_RESULTS: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(order, label): release acceptance criterion"
    )


def pytest_collection_modifyitems(config, items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker is not None:
            order, label = marker.args
            _ACCEPTANCE_BY_NODEID[item.nodeid] = (order, label)


def pytest_runtest_logreport(report):
    tagged = _ACCEPTANCE_BY_NODEID.get(report.nodeid)
    if tagged is None:
        return
    order, label = tagged
    if report.when == "call":
        _ACCEPTANCE_RESULTS[order] = (label, report.passed)
    elif report.failed or report.skipped:
        # setup/teardown failure, or a skip: either way the criterion is
        # not demonstrated.
        _ACCEPTANCE_RESULTS[order] = (label, False)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for order in sorted(_ACCEPTANCE_RESULTS):
        label, ok = _ACCEPTANCE_RESULTS[order]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{verdict}  criterion {order}: {label}")


@dataclass
class PkiFixture:
    root: Path
    ca_cert: pki.IssuedCertificate
    ca_key: pki.KeyMaterial
    ca_cert_path: Path
    ca_key_path: Path
    server_cert_path: Path
    server_key_path: Path

    def issue_client(self, username: str, base_dn: str = "dc=sfs,dc=local", days: int = 365):
        profile = pki.CertificateProfile(
            kind=pki.CertKind.CLIENT,
            subject=parse_dn(f"uid={username},ou=people,{base_dn}"),
            validity_days=days,
        )
        return pki.issue_certificate(self.ca_cert, self.ca_key, profile)


def build_pki(root: Path) -> PkiFixture:
    ca_dir = root / "ca"
    ca_cert, ca_key = pki.init_ca(parse_dn("cn=Exchange Root"), 3650, ca_dir)
    server_cert, server_key = pki.issue_certificate(
        ca_cert,
        ca_key,
        pki.CertificateProfile(
            kind=pki.CertKind.SERVER,
            subject=parse_dn("cn=localhost"),
            validity_days=825,
            san_dns_names=("localhost",),
        ),
    )
    server_cert_path = root / "server.crt.pem"
    server_key_path = root / "server.key.pem"
    server_cert_path.write_text(server_cert.pem())
    pki.write_key(server_key_path, server_key)
    return PkiFixture(
        root=root,
        ca_cert=ca_cert,
        ca_key=ca_key,
        ca_cert_path=ca_dir / "ca.crt.pem",
        ca_key_path=ca_dir / "ca.key.pem",
        server_cert_path=server_cert_path,
        server_key_path=server_key_path,
    )


def make_config(root: Path, infra: PkiFixture, port: int = 8443, **overrides) -> ServerConfig:
    values = {
        "listen.host": "127.0.0.1",
        "listen.port": str(port),
        "ca_cert": str(infra.ca_cert_path),
        "ca_key": str(infra.ca_key_path),
        "server_cert": str(infra.server_cert_path),
        "server_key": str(infra.server_key_path),
        "directory.path": str(root / "directory.ldif"),
        "store.path": str(root / "store"),
    }
    values.update(overrides)
    return ServerConfig.from_values(values)


@dataclass
class Harness:
    """In-process API: a TestClient whose TLS peer is whoever you say it is."""

    infra: PkiFixture
    system: SfsSystem
    client: TestClient
    certs: dict[str, pki.IssuedCertificate] = field(default_factory=dict)
    keys: dict[str, pki.KeyMaterial] = field(default_factory=dict)
    current_peer: PeerInfo | None = None

    def register_user(self, username: str, role: str = "client") -> None:
        """Create a user with an issued, directory-bound certificate."""
        self.system.directory.add_user(username, role)
        cert, key = self.infra.issue_client(username)
        self.system.directory.set_certificate(username, cert.der_bytes)
        self.certs[username], self.keys[username] = cert, key
        self.system._sync_mirror()

    def connect(self, username: str | None) -> None:
        """Select whose certificate subsequent requests present (None = no cert)."""
        if username is None:
            self.current_peer = None
        else:
            self.current_peer = PeerInfo(self.certs[username].der_bytes, "TLSv1.3")

    def connect_cert(self, der: bytes) -> None:
        self.current_peer = PeerInfo(der, "TLSv1.3")


def build_harness(root: Path, canonical: bool = True, **config_overrides) -> Harness:
    infra = build_pki(root / "pki")
    system = SfsSystem(make_config(root, infra, **config_overrides))
    app = create_app(system)
    harness = Harness(infra=infra, system=system, client=TestClient(app))
    app.state.peer_resolver = lambda request: harness.current_peer
    if canonical:
        populate_canonical(harness)
    return harness


def populate_canonical(harness: Harness) -> None:
    harness.register_user("admin-ann", "administrator")
    harness.register_user("bob", "client")
    harness.register_user("carol", "client")
    directory = harness.system.directory
    for group, members in (("dev", ["bob", "carol"]), ("qa", ["carol"])):
        directory.add_group(group)
        for member in members:
            directory.add_member(group, member)
    harness.system.store.set_acl_entry(
        AclEntry(Subject.group("dev"), Scope("group", "dev"), frozenset(DEFAULT_GROUP_PERMISSIONS))
    )
    harness.system._sync_mirror()


@pytest.fixture
def harness(tmp_path: Path) -> Harness:
    h = build_harness(tmp_path)
    yield h
    h.system.close()


@pytest.fixture
def empty_harness(tmp_path: Path) -> Harness:
    h = build_harness(tmp_path, canonical=False)
    yield h
    h.system.close()


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@dataclass
class LiveServer:
    """A real uvicorn server on localhost with mutual TLS."""

    infra: PkiFixture
    system: SfsSystem
    port: int
    server: object
    thread: threading.Thread
    bundles: dict[str, dict[str, Path]] = field(default_factory=dict)

    @property
    def base_url(self) -> str:
        return f"https://localhost:{self.port}"

    def register_user(self, username: str, role: str = "client") -> dict[str, Path]:
        self.system.directory.add_user(username, role)
        return self.issue_bundle(username)

    def issue_bundle(self, username: str) -> dict[str, Path]:
        cert, key = self.infra.issue_client(username)
        self.system.directory.set_certificate(username, cert.der_bytes)
        self.system._sync_mirror()
        out = self.infra.root / "bundles" / username
        paths = pki.write_credential_bundle(out, username, cert, key, self.infra.ca_cert)
        self.bundles[username] = paths
        return paths

    def ssl_context(self, username: str | None = None) -> ssl.SSLContext:
        ctx = ssl.create_default_context(cafile=str(self.infra.ca_cert_path))
        if username is not None:
            bundle = self.bundles[username]
            ctx.load_cert_chain(str(bundle["cert"]), str(bundle["key"]))
        return ctx

    def client(self, username: str | None = None, **kwargs) -> httpx.Client:
        return httpx.Client(
            base_url=self.base_url, verify=self.ssl_context(username), timeout=10, **kwargs
        )

    def cli_env(self, username: str) -> dict[str, str]:
        bundle = self.bundles[username]
        return {
            "SFS_SERVER": self.base_url,
            "SFS_CA": str(self.infra.ca_cert_path),
            "SFS_CERT": str(bundle["cert"]),
            "SFS_KEY": str(bundle["key"]),
        }

    def stop(self) -> None:
        self.server.should_exit = True
        self.thread.join(timeout=10)
        self.system.close()


def start_live_server(root: Path, canonical: bool = True) -> LiveServer:
    infra = build_pki(root / "pki")
    port = free_port()
    system = SfsSystem(make_config(root, infra, port=port))
    server = build_server(system)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("live server did not start")
        time.sleep(0.02)
    live = LiveServer(infra=infra, system=system, port=port, server=server, thread=thread)
    if canonical:
        live.register_user("admin-ann", "administrator")
        live.register_user("bob", "client")
        live.register_user("carol", "client")
        for group, members in (("dev", ["bob", "carol"]), ("qa", ["carol"])):
            system.directory.add_group(group)
            for member in members:
                system.directory.add_member(group, member)
        system.store.set_acl_entry(
            AclEntry(
                Subject.group("dev"), Scope("group", "dev"), frozenset(DEFAULT_GROUP_PERMISSIONS)
            )
        )
        system._sync_mirror()
    return live


@pytest.fixture(scope="module")
def live_server(tmp_path_factory: pytest.TempPathFactory) -> LiveServer:
    live = start_live_server(tmp_path_factory.mktemp("live"))
    yield live
    live.stop()
