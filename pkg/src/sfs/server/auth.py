"""Application-layer session authentication.

The TLS handshake already guarantees the peer certificate chains to the
service CA; what remains is binding that certificate to a directory
principal.  The checks run in a fixed order — existence, username binding,
status, certificate validity — and the first failure wins, so error codes
are deterministic for a given broken state.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

from ..acl import STATUS_ACTIVE, Principal
from ..directory import Ambiguous, Directory, NotFound
from ..errors import SfsError
from ..pki import IssuedCertificate, fingerprint, validate_chain


class AuthFailure(SfsError):
    code = "AUTH_FAILED"

    def __init__(self, message: str, username: str | None = None):
        super().__init__(message)
        self.username = username


class UnknownPrincipal(AuthFailure):
    code = "UNKNOWN_PRINCIPAL"


class UsernameMismatch(AuthFailure):
    code = "USERNAME_MISMATCH"


class Suspended(AuthFailure):
    code = "SUSPENDED"


class CertInvalid(AuthFailure):
    code = "CERT_INVALID"


@dataclass(frozen=True)
class PeerInfo:
    """What the TLS layer knows about a connected peer."""

    cert_der: bytes
    tls_version: str


@dataclass(frozen=True)
class Session:
    peer_fingerprint: str
    principal: Principal
    tls_version: str
    established_at: datetime


def authenticate_session(
    directory: Directory,
    ca_cert: IssuedCertificate,
    peer: PeerInfo,
    at_time: datetime | None = None,
) -> Session:
    """Resolve a TLS peer to a directory principal or raise an AuthFailure."""
    at_time = at_time or datetime.now(timezone.utc)
    fp = fingerprint(peer.cert_der)
    try:
        principal = directory.lookup_principal_by_fingerprint(fp)
    except NotFound:
        raise UnknownPrincipal(f"no principal registered for fingerprint {fp}") from None
    except Ambiguous as exc:
        raise UnknownPrincipal(str(exc)) from None

    leaf = IssuedCertificate.from_der(peer.cert_der)
    cert_uid = leaf.subject_dn.value_of("uid")
    if cert_uid is None:
        raise UsernameMismatch("certificate subject carries no uid", principal.username)
    if cert_uid != principal.username:
        raise UsernameMismatch(
            f"certificate uid {cert_uid!r} does not match directory uid {principal.username!r}",
            principal.username,
        )

    if principal.status != STATUS_ACTIVE:
        raise Suspended(f"principal {principal.username!r} is suspended", principal.username)

    result = validate_chain(leaf, ca_cert, at_time)
    if not result.ok:
        raise CertInvalid(f"certificate invalid: {result.reason}", principal.username)

    return Session(
        peer_fingerprint=fp,
        principal=principal,
        tls_version=peer.tls_version,
        established_at=at_time,
    )
