"""Run the app under uvicorn with mutual TLS.

The ASGI scope never carries the peer certificate, so a protocol subclass
captures it at connection time: when the TLS handshake completes the
transport's ssl object knows the client certificate, and the connection's
(host, port) matches what uvicorn later puts in ``scope["client"]``.  A
registry keyed by that address bridges the two worlds; the app's
``peer_resolver`` looks sessions up there.
"""

from __future__ import annotations

import ssl
import threading

import uvicorn
from fastapi import Request
from uvicorn.protocols.http.h11_impl import H11Protocol

from .app import create_app
from .auth import PeerInfo
from .core import SfsSystem


class PeerRegistry:
    """Live map of connected-client address -> TLS peer info."""

    def __init__(self) -> None:
        self._peers: dict[tuple[str, int], PeerInfo] = {}
        self._lock = threading.Lock()

    def register(self, addr: tuple[str, int], peer: PeerInfo) -> None:
        with self._lock:
            self._peers[addr] = peer

    def unregister(self, addr: tuple[str, int]) -> None:
        with self._lock:
            self._peers.pop(addr, None)

    def get(self, addr: tuple[str, int]) -> PeerInfo | None:
        with self._lock:
            return self._peers.get(addr)

    def __len__(self) -> int:
        with self._lock:
            return len(self._peers)


def make_protocol_class(registry: PeerRegistry) -> type[H11Protocol]:
    class PeerCapturingProtocol(H11Protocol):
        def connection_made(self, transport) -> None:  # type: ignore[override]
            super().connection_made(transport)
            ssl_object = transport.get_extra_info("ssl_object")
            if ssl_object is not None and self.client is not None:
                der = ssl_object.getpeercert(binary_form=True)
                if der:
                    registry.register(
                        tuple(self.client), PeerInfo(der, ssl_object.version() or "")
                    )

        def connection_lost(self, exc) -> None:  # type: ignore[override]
            if self.client is not None:
                registry.unregister(tuple(self.client))
            super().connection_lost(exc)

    return PeerCapturingProtocol


def registry_resolver(registry: PeerRegistry):
    def resolve(request: Request) -> PeerInfo | None:
        if request.client is None:
            return None
        return registry.get((request.client.host, request.client.port))

    return resolve


def build_server(system: SfsSystem) -> uvicorn.Server:
    """Assemble the uvicorn server: app, peer registry, and mTLS context."""
    registry = PeerRegistry()
    app = create_app(system)
    app.state.peer_resolver = registry_resolver(registry)
    config = uvicorn.Config(
        app=app,
        host=system.config.listen_host,
        port=system.config.listen_port,
        http=make_protocol_class(registry),
        ssl_certfile=str(system.config.server_cert),
        ssl_keyfile=str(system.config.server_key),
        ssl_ca_certs=str(system.config.ca_cert),
        ssl_cert_reqs=ssl.CERT_REQUIRED,
        log_level="warning",
    )
    config.load()
    if config.ssl is not None:
        config.ssl.minimum_version = ssl.TLSVersion.TLSv1_2
    return uvicorn.Server(config)
