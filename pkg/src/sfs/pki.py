"""Certificate-authority toolkit.

Creates the service's self-signed root CA, issues server and client leaf
certificates, computes SHA-256 fingerprints over DER bytes and validates a
leaf against the CA.  Key material is ECDSA P-256 everywhere; certificates
and keys travel as PEM files, DER is the canonical fingerprint input.

Profile fixed by this module: 16-byte random serials, the username carried
in the subject's ``uid`` RDN, clientAuth/serverAuth extended key usage on
leaves, CA=true pathlen 0 on the root.  There is no CRL or OCSP: revocation
happens at the application layer by suspending the principal in the
directory.
"""

from __future__ import annotations

import hashlib
import io
import os
import secrets
import zipfile
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path

from cryptography import x509
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.x509.oid import ExtendedKeyUsageOID, NameOID

from .dn import DistinguishedName, MalformedDn
from .errors import SfsError

CA_CERT_FILE = "ca.crt.pem"
CA_KEY_FILE = "ca.key.pem"

MAX_VALIDITY_DAYS = 3650

# Tolerated clock skew when checking not_before, and the backdate applied at
# issuance so freshly issued certificates verify on slightly-behind clocks.
CLOCK_SKEW = timedelta(seconds=60)

_OID_BY_TYPE = {
    "dc": NameOID.DOMAIN_COMPONENT,
    "ou": NameOID.ORGANIZATIONAL_UNIT_NAME,
    "uid": NameOID.USER_ID,
    "cn": NameOID.COMMON_NAME,
    "o": NameOID.ORGANIZATION_NAME,
}
_TYPE_BY_OID = {oid: t for t, oid in _OID_BY_TYPE.items()}


class CaAlreadyExists(SfsError):
    code = "CA_ALREADY_EXISTS"


class NotACa(SfsError):
    code = "NOT_A_CA"


class InvalidProfile(SfsError):
    code = "INVALID_PROFILE"


class EmptyInput(SfsError):
    code = "EMPTY_INPUT"


class ParseFailure(SfsError):
    code = "PARSE_FAILURE"


class IoFailure(SfsError):
    code = "IO_FAILURE"


class CertKind(str, Enum):
    CA = "ca"
    SERVER = "server"
    CLIENT = "client"


@dataclass(frozen=True)
class CertificateProfile:
    kind: CertKind
    subject: DistinguishedName
    validity_days: int
    san_dns_names: tuple[str, ...] = ()

    def check(self) -> None:
        """Raise InvalidProfile unless the profile invariants hold."""
        if not 1 <= self.validity_days <= MAX_VALIDITY_DAYS:
            raise InvalidProfile(
                f"validity_days must be in 1..{MAX_VALIDITY_DAYS}, got {self.validity_days}"
            )
        uid_count = sum(1 for t, _ in self.subject.rdns if t == "uid")
        if self.kind is CertKind.CLIENT and uid_count != 1:
            raise InvalidProfile("client subject must contain exactly one uid RDN")
        if self.kind is CertKind.SERVER:
            if not self.san_dns_names:
                raise InvalidProfile("server profile requires at least one SAN hostname")
        elif self.san_dns_names:
            raise InvalidProfile("san_dns_names only apply to server certificates")


@dataclass(frozen=True)
class IssuedCertificate:
    serial: int
    subject_dn: DistinguishedName
    issuer_dn: DistinguishedName
    not_before: datetime
    not_after: datetime
    der_bytes: bytes
    fingerprint_sha256: str

    @classmethod
    def from_der(cls, der: bytes) -> IssuedCertificate:
        try:
            cert = x509.load_der_x509_certificate(der)
            subject = x509_name_to_dn(cert.subject)
            issuer = x509_name_to_dn(cert.issuer)
        except (ValueError, MalformedDn) as exc:
            raise ParseFailure(f"undecodable certificate: {exc}") from exc
        return cls(
            serial=cert.serial_number,
            subject_dn=subject,
            issuer_dn=issuer,
            not_before=cert.not_valid_before_utc,
            not_after=cert.not_valid_after_utc,
            der_bytes=der,
            fingerprint_sha256=fingerprint(der),
        )

    @classmethod
    def from_pem(cls, pem: bytes | str) -> IssuedCertificate:
        if isinstance(pem, str):
            pem = pem.encode()
        try:
            cert = x509.load_pem_x509_certificate(pem)
        except ValueError as exc:
            raise ParseFailure(f"undecodable PEM: {exc}") from exc
        return cls.from_der(cert.public_bytes(serialization.Encoding.DER))

    def to_x509(self) -> x509.Certificate:
        try:
            return x509.load_der_x509_certificate(self.der_bytes)
        except ValueError as exc:
            raise ParseFailure(f"undecodable certificate: {exc}") from exc

    def pem(self) -> str:
        return self.to_x509().public_bytes(serialization.Encoding.PEM).decode()


@dataclass(frozen=True)
class KeyMaterial:
    algorithm: str
    private_key_pem: str
    public_key_der: bytes


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reason: str | None = None


def dn_to_x509_name(dn: DistinguishedName) -> x509.Name:
    # x509.Name wants DER order: most general first, i.e. our RDNs reversed.
    return x509.Name([x509.NameAttribute(_OID_BY_TYPE[t], v) for t, v in reversed(dn.rdns)])


def x509_name_to_dn(name: x509.Name) -> DistinguishedName:
    rdns: list[tuple[str, str]] = []
    for rdn in name.rdns:
        attrs = list(rdn)
        if len(attrs) != 1:
            raise MalformedDn("multi-valued RDNs are not supported")
        attr = attrs[0]
        attr_type = _TYPE_BY_OID.get(attr.oid)
        if attr_type is None:
            raise MalformedDn(f"unsupported attribute {attr.oid.dotted_string}")
        value = attr.value if isinstance(attr.value, str) else attr.value.decode()
        rdns.append((attr_type, value))
    return DistinguishedName(tuple(reversed(rdns)))


def fingerprint(der_bytes: bytes) -> str:
    """Lowercase hex SHA-256 over the exact DER bytes."""
    if not der_bytes:
        raise EmptyInput("cannot fingerprint empty input")
    return hashlib.sha256(der_bytes).hexdigest()


def generate_key() -> ec.EllipticCurvePrivateKey:
    return ec.generate_private_key(ec.SECP256R1())


def _key_material(key: ec.EllipticCurvePrivateKey) -> KeyMaterial:
    return KeyMaterial(
        algorithm="ecdsa_p256",
        private_key_pem=key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        ).decode(),
        public_key_der=key.public_key().public_bytes(
            serialization.Encoding.DER,
            serialization.PublicFormat.SubjectPublicKeyInfo,
        ),
    )


def _random_serial() -> int:
    serial = 0
    while serial == 0:
        serial = int.from_bytes(secrets.token_bytes(16), "big")
    return serial


def _issued(cert: x509.Certificate) -> IssuedCertificate:
    return IssuedCertificate.from_der(cert.public_bytes(serialization.Encoding.DER))


def _build(
    kind: CertKind,
    subject: x509.Name,
    issuer: x509.Name,
    public_key: ec.EllipticCurvePublicKey,
    signing_key: ec.EllipticCurvePrivateKey,
    validity_days: int,
    san_dns_names: tuple[str, ...] = (),
    issuer_cert: x509.Certificate | None = None,
) -> x509.Certificate:
    now = datetime.now(timezone.utc)
    builder = (
        x509.CertificateBuilder()
        .subject_name(subject)
        .issuer_name(issuer)
        .public_key(public_key)
        .serial_number(_random_serial())
        .not_valid_before(now - CLOCK_SKEW)
        .not_valid_after(now + timedelta(days=validity_days))
        .add_extension(x509.SubjectKeyIdentifier.from_public_key(public_key), critical=False)
    )
    if kind is CertKind.CA:
        builder = builder.add_extension(
            x509.BasicConstraints(ca=True, path_length=0), critical=True
        ).add_extension(
            x509.KeyUsage(
                digital_signature=False,
                content_commitment=False,
                key_encipherment=False,
                data_encipherment=False,
                key_agreement=False,
                key_cert_sign=True,
                crl_sign=True,
                encipher_only=False,
                decipher_only=False,
            ),
            critical=True,
        )
    else:
        eku = ExtendedKeyUsageOID.SERVER_AUTH if kind is CertKind.SERVER else ExtendedKeyUsageOID.CLIENT_AUTH
        builder = (
            builder.add_extension(x509.BasicConstraints(ca=False, path_length=None), critical=True)
            .add_extension(x509.ExtendedKeyUsage([eku]), critical=False)
            .add_extension(
                x509.KeyUsage(
                    digital_signature=True,
                    content_commitment=False,
                    key_encipherment=False,
                    data_encipherment=False,
                    key_agreement=False,
                    key_cert_sign=False,
                    crl_sign=False,
                    encipher_only=False,
                    decipher_only=False,
                ),
                critical=True,
            )
        )
        if san_dns_names:
            builder = builder.add_extension(
                x509.SubjectAlternativeName([x509.DNSName(h) for h in san_dns_names]),
                critical=False,
            )
        if issuer_cert is not None:
            ski = issuer_cert.extensions.get_extension_for_class(x509.SubjectKeyIdentifier).value
            builder = builder.add_extension(
                x509.AuthorityKeyIdentifier(
                    key_identifier=ski.digest,
                    authority_cert_issuer=None,
                    authority_cert_serial_number=None,
                ),
                critical=False,
            )
    return builder.sign(signing_key, hashes.SHA256())


def init_ca(
    subject: DistinguishedName,
    validity_days: int,
    out_dir: Path | str,
    force: bool = False,
) -> tuple[IssuedCertificate, KeyMaterial]:
    """Create the self-signed root CA and write ca.crt.pem / ca.key.pem.

    The key file is created exclusively (mode 0600); a second run fails with
    CA_ALREADY_EXISTS unless ``force`` is given.
    """
    CertificateProfile(CertKind.CA, subject, validity_days).check()
    out_dir = Path(out_dir)
    cert_path = out_dir / CA_CERT_FILE
    key_path = out_dir / CA_KEY_FILE
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_dir}: {exc}") from exc
    if not force and (cert_path.exists() or key_path.exists()):
        raise CaAlreadyExists(f"CA files already present in {out_dir}")

    key = generate_key()
    material = _key_material(key)
    name = dn_to_x509_name(subject)
    cert = _build(CertKind.CA, name, name, key.public_key(), key, validity_days)
    try:
        if force:
            key_path.unlink(missing_ok=True)
        # Exclusive create guards against a concurrent init racing us.
        fd = os.open(key_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o600)
    except FileExistsError:
        raise CaAlreadyExists(f"CA key already present at {key_path}") from None
    except OSError as exc:
        raise IoFailure(f"cannot write {key_path}: {exc}") from exc
    with os.fdopen(fd, "w") as fh:
        fh.write(material.private_key_pem)
    cert_path.write_bytes(cert.public_bytes(serialization.Encoding.PEM))
    return _issued(cert), material


def issue_certificate(
    ca_cert: IssuedCertificate,
    ca_key: KeyMaterial,
    profile: CertificateProfile,
) -> tuple[IssuedCertificate, KeyMaterial]:
    """Issue a leaf certificate signed by the CA."""
    ca_x509 = ca_cert.to_x509()
    try:
        bc = ca_x509.extensions.get_extension_for_class(x509.BasicConstraints).value
    except x509.ExtensionNotFound:
        raise NotACa("certificate has no BasicConstraints extension") from None
    if not bc.ca:
        raise NotACa("signing certificate is not a CA")
    if profile.kind is CertKind.CA:
        raise InvalidProfile("the root CA has pathlen 0; intermediate CAs cannot be issued")
    profile.check()

    signing_key = serialization.load_pem_private_key(ca_key.private_key_pem.encode(), password=None)
    key = generate_key()
    cert = _build(
        profile.kind,
        dn_to_x509_name(profile.subject),
        ca_x509.subject,
        key.public_key(),
        signing_key,
        profile.validity_days,
        profile.san_dns_names,
        issuer_cert=ca_x509,
    )
    return _issued(cert), _key_material(key)


def validate_chain(
    leaf: IssuedCertificate,
    ca: IssuedCertificate,
    at_time: datetime,
) -> ValidationResult:
    """Check signature, validity window (60 s skew on not_before) and CA-ness.

    A certificate with CA=true is rejected as UNEXPECTED_CA unless it is the
    CA certificate itself (the self-signed root validates against itself).
    """
    if at_time.tzinfo is None:
        at_time = at_time.replace(tzinfo=timezone.utc)
    leaf_x509 = leaf.to_x509()
    ca_public = ca.to_x509().public_key()
    if not isinstance(ca_public, ec.EllipticCurvePublicKey):
        return ValidationResult(False, "BAD_SIGNATURE")
    try:
        ca_public.verify(
            leaf_x509.signature,
            leaf_x509.tbs_certificate_bytes,
            ec.ECDSA(leaf_x509.signature_hash_algorithm),
        )
    except InvalidSignature:
        return ValidationResult(False, "BAD_SIGNATURE")
    if at_time < leaf_x509.not_valid_before_utc - CLOCK_SKEW:
        return ValidationResult(False, "NOT_YET_VALID")
    if at_time > leaf_x509.not_valid_after_utc:
        return ValidationResult(False, "EXPIRED")
    try:
        bc = leaf_x509.extensions.get_extension_for_class(x509.BasicConstraints).value
        is_ca = bc.ca
    except x509.ExtensionNotFound:
        is_ca = False
    if is_ca and leaf.der_bytes != ca.der_bytes:
        return ValidationResult(False, "UNEXPECTED_CA")
    return ValidationResult(True)


def load_certificate(path: Path | str) -> IssuedCertificate:
    return IssuedCertificate.from_pem(Path(path).read_bytes())


def load_key(path: Path | str) -> KeyMaterial:
    pem = Path(path).read_bytes()
    key = serialization.load_pem_private_key(pem, password=None)
    if not isinstance(key, ec.EllipticCurvePrivateKey):
        raise ParseFailure("expected an ECDSA private key")
    return _key_material(key)


def write_key(path: Path | str, material: KeyMaterial) -> None:
    """Write a private key PEM with owner-only permissions."""
    path = Path(path)
    path.unlink(missing_ok=True)
    fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o600)
    with os.fdopen(fd, "w") as fh:
        fh.write(material.private_key_pem)


def credential_bundle_zip(
    username: str,
    cert: IssuedCertificate,
    key: KeyMaterial,
    ca_cert: IssuedCertificate,
) -> bytes:
    """Zip handed to a freshly registered user: cert, key and the CA cert."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        zf.writestr(f"{username}.crt.pem", cert.pem())
        zf.writestr(f"{username}.key.pem", key.private_key_pem)
        zf.writestr(CA_CERT_FILE, ca_cert.pem())
    return buf.getvalue()


def write_credential_bundle(
    out_dir: Path | str,
    username: str,
    cert: IssuedCertificate,
    key: KeyMaterial,
    ca_cert: IssuedCertificate,
) -> dict[str, Path]:
    """Materialize a credential bundle as a directory of PEM files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cert_path = out_dir / f"{username}.crt.pem"
    key_path = out_dir / f"{username}.key.pem"
    ca_path = out_dir / CA_CERT_FILE
    cert_path.write_text(cert.pem())
    write_key(key_path, key)
    ca_path.write_text(ca_cert.pem())
    return {"cert": cert_path, "key": key_path, "ca": ca_path}
