"""Command-line client.

A thin wrapper over the REST API: it never makes authorization decisions
itself, it just presents credentials and renders responses.  The server
certificate is verified against the configured CA bundle (with hostname
checking) before any request body leaves the machine, and downloads are
re-hashed locally against the X-SFS-SHA256 header.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import ssl
import sys
import zipfile
from pathlib import Path

import click
import httpx

from . import pki
from .config import ClientConfig
from .dn import parse_dn
from .errors import SfsError

CONNECT_TIMEOUT = 10.0


def _fail(obj: dict, code: str, reason: str) -> None:
    if obj.get("json"):
        print(json.dumps({"error": code, "reason": reason}), file=sys.stderr)
    else:
        print(f"error: {code}: {reason}", file=sys.stderr)
    sys.exit(1)


def _emit(obj: dict, data, human: str | None = None) -> None:
    if obj.get("json"):
        print(json.dumps(data, indent=2, sort_keys=True))
    elif human is not None:
        print(human)


def _ssl_context(cfg: ClientConfig) -> ssl.SSLContext:
    ctx = ssl.create_default_context(cafile=str(cfg.ca_cert))
    ctx.minimum_version = ssl.TLSVersion.TLSv1_2
    if cfg.client_cert is not None:
        ctx.load_cert_chain(str(cfg.client_cert), str(cfg.client_key))
    return ctx


def _client(obj: dict) -> httpx.Client:
    try:
        cfg = ClientConfig.resolve(obj)
        context = _ssl_context(cfg)
    except SfsError as exc:
        _fail(obj, exc.code, exc.message)
    except ssl.SSLError as exc:
        _fail(obj, "BAD_CREDENTIALS", f"cannot load certificate/key: {exc}")
    return httpx.Client(base_url=cfg.server, verify=context, timeout=CONNECT_TIMEOUT)


def _check(obj: dict, resp: httpx.Response) -> httpx.Response:
    if resp.status_code >= 400:
        try:
            body = resp.json()
            code, reason = body["error"], body["reason"]
        except Exception:
            code, reason = f"HTTP_{resp.status_code}", resp.text[:500]
        _fail(obj, code, reason)
    return resp


def _request(obj: dict, method: str, path: str, **kwargs) -> httpx.Response:
    with _client(obj) as client:
        try:
            resp = client.request(method, path, **kwargs)
        except httpx.HTTPError as exc:
            _fail(obj, "CONNECTION", str(exc))
        return _check(obj, resp)


def connection_options(fn):
    for opt in reversed(
        [
            click.option("--server", help="server base URL, e.g. https://host:8443"),
            click.option("--ca", help="CA certificate bundle (PEM)"),
            click.option("--cert", help="client certificate (PEM)"),
            click.option("--key", help="client private key (PEM)"),
            click.option("--config", help="config file (default ~/.sfs/config)"),
            click.option("--json", "json_out", is_flag=True, help="machine-readable output"),
        ]
    ):
        fn = opt(fn)
    return fn


def _collect(ctx: click.Context, **kwargs) -> dict:
    obj = dict(ctx.obj or {})
    json_out = kwargs.pop("json_out", False)
    for key, value in kwargs.items():
        if value is not None:
            obj[key] = value
    if json_out:
        obj["json"] = True
    return obj


@click.group()
def main() -> None:
    """Secure file exchange client."""


# -- file operations ---------------------------------------------------------


@main.command("ls")
@click.argument("scope")
@connection_options
def cmd_ls(scope: str, **kwargs) -> None:
    """List files in SCOPE (home:USER or group:NAME)."""
    obj = _collect(click.get_current_context(), **kwargs)
    data = _request(obj, "GET", f"/v1/files/{scope}").json()
    if obj.get("json"):
        _emit(obj, data)
        return
    files = data["files"]
    if not files:
        print(f"{scope}: empty")
        return
    width = max(len(f["name"]) for f in files)
    for f in files:
        flag = " (orphan)" if f.get("orphan") else ""
        print(
            f"{f['name']:<{width}}  {f['size_bytes']:>10}  v{f['version']}"
            f"  {f['uploader']:<12}  {f['sha256'][:12]}…  {f['uploaded_at']}{flag}"
        )


@main.command("get")
@click.argument("scope")
@click.argument("name")
@click.option("-o", "--output", help="local destination path (default: NAME)")
@connection_options
def cmd_get(scope: str, name: str, output: str | None, **kwargs) -> None:
    """Download NAME from SCOPE, verifying its SHA-256 en route."""
    obj = _collect(click.get_current_context(), **kwargs)
    dest = Path(output) if output else Path(name)
    with _client(obj) as client:
        try:
            with client.stream("GET", f"/v1/files/{scope}/{name}") as resp:
                if resp.status_code >= 400:
                    resp.read()
                    _check(obj, resp)
                expected = resp.headers.get("x-sfs-sha256", "")
                digest = hashlib.sha256()
                tmp = dest.with_name(dest.name + ".part")
                with open(tmp, "wb") as out:
                    for chunk in resp.iter_bytes(1024 * 1024):
                        digest.update(chunk)
                        out.write(chunk)
        except httpx.HTTPError as exc:
            _fail(obj, "CONNECTION", str(exc))
    actual = digest.hexdigest()
    if expected and actual != expected:
        tmp.unlink(missing_ok=True)
        _fail(obj, "INTEGRITY", f"download hashed to {actual}, server declared {expected}")
    os.replace(tmp, dest)
    _emit(
        obj,
        {"scope": scope, "name": name, "path": str(dest), "sha256": actual},
        f"{dest} ({dest.stat().st_size} bytes, sha256 verified)",
    )


@main.command("put")
@click.argument("scope")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--name", help="remote name (default: local basename)")
@connection_options
def cmd_put(scope: str, file: str, name: str | None, **kwargs) -> None:
    """Upload FILE into SCOPE."""
    obj = _collect(click.get_current_context(), **kwargs)
    path = Path(file)
    remote = name or path.name
    with open(path, "rb") as handle:
        resp = _request(
            obj,
            "PUT",
            f"/v1/files/{scope}/{remote}",
            content=handle,
            headers={"Content-Type": "application/octet-stream"},
        )
    record = resp.json()
    _emit(
        obj,
        record,
        f"uploaded {remote} to {scope} "
        f"(v{record['version']}, {record['size_bytes']} bytes, {record['sha256'][:12]}…)",
    )


@main.command("rm")
@click.argument("scope")
@click.argument("name")
@connection_options
def cmd_rm(scope: str, name: str, **kwargs) -> None:
    """Delete NAME from SCOPE."""
    obj = _collect(click.get_current_context(), **kwargs)
    record = _request(obj, "DELETE", f"/v1/files/{scope}/{name}").json()
    _emit(obj, record, f"deleted {name} from {scope}")


@main.command("whoami")
@connection_options
def cmd_whoami(**kwargs) -> None:
    """Show the authenticated principal and effective permissions."""
    obj = _collect(click.get_current_context(), **kwargs)
    data = _request(obj, "GET", "/v1/whoami").json()
    if obj.get("json"):
        _emit(obj, data)
        return
    print(f"{data['username']} ({data['role']}, {data['status']})")
    print(f"dn: {data['dn']}")
    print(f"fingerprint: {data['fingerprint']}")
    print(f"groups: {', '.join(data['groups']) or '-'}")
    print(f"tls: {data['tls_version']}")
    for scope, perms in sorted(data["effective_permissions"].items()):
        print(f"  {scope}: {', '.join(perms) or '-'}")


# -- admin -------------------------------------------------------------------


@main.group("admin")
def admin() -> None:
    """Administrator operations."""


@admin.group("user")
def admin_user() -> None:
    """Manage users."""


@admin_user.command("add")
@click.argument("username")
@click.option("--role", default="client", show_default=True)
@connection_options
def user_add(username: str, role: str, **kwargs) -> None:
    obj = _collect(click.get_current_context(), **kwargs)
    data = _request(obj, "POST", "/v1/admin/users", json={"username": username, "role": role}).json()
    _emit(obj, data, f"user {username} added ({role})")


@admin_user.command("del")
@click.argument("username")
@connection_options
def user_del(username: str, **kwargs) -> None:
    obj = _collect(click.get_current_context(), **kwargs)
    data = _request(obj, "DELETE", f"/v1/admin/users/{username}").json()
    _emit(obj, data, f"user {username} deleted")


@admin_user.command("mod")
@click.argument("username")
@click.option("--role")
@click.option("--status")
@connection_options
def user_mod(username: str, role: str | None, status: str | None, **kwargs) -> None:
    obj = _collect(click.get_current_context(), **kwargs)
    body = {}
    if role is not None:
        body["role"] = role
    if status is not None:
        body["status"] = status
    data = _request(obj, "PATCH", f"/v1/admin/users/{username}", json=body).json()
    _emit(obj, data, f"user {username}: role={data['role']} status={data['status']}")


@admin_user.command("list")
@connection_options
def user_list(**kwargs) -> None:
    obj = _collect(click.get_current_context(), **kwargs)
    data = _request(obj, "GET", "/v1/admin/users").json()
    if obj.get("json"):
        _emit(obj, data)
        return
    for u in data:
        groups = f" [{', '.join(u['groups'])}]" if u["groups"] else ""
        print(f"{u['username']:<16} {u['role']:<14} {u['status']}{groups}")


@admin.group("cert")
def admin_cert() -> None:
    """Issue credentials."""


@admin_cert.command("issue")
@click.argument("username")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="directory for the bundle")
@click.option("--validity-days", default=365, show_default=True)
@connection_options
def cert_issue(username: str, out: str, validity_days: int, **kwargs) -> None:
    """Issue a certificate for USERNAME and unpack the bundle into --out."""
    obj = _collect(click.get_current_context(), **kwargs)
    resp = _request(
        obj,
        "POST",
        f"/v1/admin/users/{username}/certificate",
        json={"validity_days": validity_days},
    )
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    fingerprint = None
    with zipfile.ZipFile(io.BytesIO(resp.content)) as zf:
        for member in zf.namelist():
            target = out_dir / Path(member).name
            target.write_bytes(zf.read(member))
            if target.suffix == ".pem" and ".key." in target.name:
                target.chmod(0o600)
            if target.name == f"{username}.crt.pem":
                fingerprint = pki.IssuedCertificate.from_pem(target.read_bytes()).fingerprint_sha256
            written.append(str(target))
    _emit(
        obj,
        {"username": username, "fingerprint": fingerprint, "files": written},
        "issued credentials for {} (fingerprint {}):\n  {}".format(
            username, fingerprint, "\n  ".join(written)
        ),
    )


@admin.group("group")
def admin_group() -> None:
    """Manage groups."""


@admin_group.command("add")
@click.argument("name")
@connection_options
def group_add(name: str, **kwargs) -> None:
    obj = _collect(click.get_current_context(), **kwargs)
    data = _request(obj, "POST", "/v1/admin/groups", json={"name": name}).json()
    _emit(obj, data, f"group {name} added")


@admin_group.command("del")
@click.argument("name")
@connection_options
def group_del(name: str, **kwargs) -> None:
    obj = _collect(click.get_current_context(), **kwargs)
    data = _request(obj, "DELETE", f"/v1/admin/groups/{name}").json()
    _emit(obj, data, f"group {name} deleted")


@admin_group.command("list")
@connection_options
def group_list(**kwargs) -> None:
    obj = _collect(click.get_current_context(), **kwargs)
    data = _request(obj, "GET", "/v1/admin/groups").json()
    if obj.get("json"):
        _emit(obj, data)
        return
    for g in data:
        print(f"{g['name']}: {', '.join(g['members']) or '-'}")


@admin_group.group("member")
def admin_member() -> None:
    """Manage group membership."""


@admin_member.command("add")
@click.argument("group")
@click.argument("username")
@connection_options
def member_add(group: str, username: str, **kwargs) -> None:
    obj = _collect(click.get_current_context(), **kwargs)
    data = _request(obj, "PUT", f"/v1/admin/groups/{group}/members/{username}").json()
    _emit(obj, data, f"{username} added to {group} (members: {', '.join(data['members'])})")


@admin_member.command("del")
@click.argument("group")
@click.argument("username")
@connection_options
def member_del(group: str, username: str, **kwargs) -> None:
    obj = _collect(click.get_current_context(), **kwargs)
    data = _request(obj, "DELETE", f"/v1/admin/groups/{group}/members/{username}").json()
    _emit(obj, data, f"{username} removed from {group} (members: {', '.join(data['members']) or '-'})")


@admin.group("acl")
def admin_acl() -> None:
    """Manage access grants."""


@admin_acl.command("set")
@click.argument("subject")
@click.argument("scope")
@click.argument("permissions")
@connection_options
def acl_set(subject: str, scope: str, permissions: str, **kwargs) -> None:
    """Grant SUBJECT (user:NAME or group:NAME) PERMISSIONS on SCOPE.

    PERMISSIONS is a comma-separated subset of VIEW,DOWNLOAD,UPLOAD,DELETE.
    """
    obj = _collect(click.get_current_context(), **kwargs)
    perms = [p.strip().upper() for p in permissions.split(",") if p.strip()]
    data = _request(
        obj,
        "PUT",
        "/v1/admin/acl",
        json={"subject": subject, "scope": scope, "permissions": perms},
    ).json()
    _emit(obj, data, f"granted {subject} on {scope}: {', '.join(data['permissions'])}")


@admin_acl.command("del")
@click.argument("subject")
@click.argument("scope")
@connection_options
def acl_del(subject: str, scope: str, **kwargs) -> None:
    obj = _collect(click.get_current_context(), **kwargs)
    data = _request(
        obj, "DELETE", "/v1/admin/acl", json={"subject": subject, "scope": scope}
    ).json()
    _emit(obj, data, f"revoked {subject} on {scope}")


@admin_acl.command("list")
@connection_options
def acl_list(**kwargs) -> None:
    obj = _collect(click.get_current_context(), **kwargs)
    data = _request(obj, "GET", "/v1/admin/acl").json()
    if obj.get("json"):
        _emit(obj, data)
        return
    for entry in data["entries"]:
        print(f"{entry['subject']:<24} {entry['scope']:<24} {', '.join(entry['permissions'])}")


@admin.command("audit")
@click.option("--principal")
@click.option("--action")
@click.option("--from-seq", type=int)
@click.option("--to-seq", type=int)
@connection_options
def admin_audit(
    principal: str | None, action: str | None, from_seq: int | None, to_seq: int | None, **kwargs
) -> None:
    """Read the audit log."""
    obj = _collect(click.get_current_context(), **kwargs)
    params = {
        k: v
        for k, v in {
            "principal": principal,
            "action": action,
            "from_seq": from_seq,
            "to_seq": to_seq,
        }.items()
        if v is not None
    }
    data = _request(obj, "GET", "/v1/admin/audit", params=params).json()
    if obj.get("json"):
        _emit(obj, data)
        return
    for e in data["events"]:
        detail = f"  # {e['detail']}" if e["detail"] else ""
        print(
            f"{e['seq']:>5}  {e['at']}  {e['principal']:<12} {e['action']:<18}"
            f" {e['outcome']:<8} {e['target']}{detail}"
        )


@admin.command("backup")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="archive destination")
@connection_options
def admin_backup(out: str, **kwargs) -> None:
    """Download a full backup archive."""
    obj = _collect(click.get_current_context(), **kwargs)
    dest = Path(out)
    with _client(obj) as client:
        try:
            with client.stream("POST", "/v1/admin/backup") as resp:
                if resp.status_code >= 400:
                    resp.read()
                    _check(obj, resp)
                with open(dest, "wb") as fh:
                    for chunk in resp.iter_bytes(1024 * 1024):
                        fh.write(chunk)
        except httpx.HTTPError as exc:
            _fail(obj, "CONNECTION", str(exc))
    _emit(obj, {"path": str(dest), "bytes": dest.stat().st_size}, f"backup written to {dest}")


# -- local CA management -------------------------------------------------------


@main.group("ca")
def ca() -> None:
    """Local certificate-authority bootstrap (no server involved)."""


@ca.command("init")
@click.option("--cn", required=True, help="CA common name")
@click.option("--out", default=".", show_default=True, type=click.Path(file_okay=False))
@click.option("--days", default=3650, show_default=True)
@click.option("--force", is_flag=True, help="overwrite an existing CA")
@click.option("--json", "json_out", is_flag=True)
def ca_init(cn: str, out: str, days: int, force: bool, json_out: bool) -> None:
    """Create a self-signed root CA: ca.crt.pem and ca.key.pem in --out."""
    obj = {"json": json_out}
    subject = parse_dn(f"cn={cn}")
    try:
        cert, _ = pki.init_ca(subject, days, out, force=force)
    except SfsError as exc:
        _fail(obj, exc.code, exc.message)
    _emit(
        obj,
        {"subject": cert.subject_dn.render(), "fingerprint": cert.fingerprint_sha256, "out": out},
        f"CA created in {out} (fingerprint {cert.fingerprint_sha256})",
    )


@ca.command("issue-server")
@click.option("--host", "hosts", multiple=True, required=True, help="DNS name (repeatable)")
@click.option("--ca-dir", default=".", show_default=True, help="directory holding ca.crt.pem/ca.key.pem")
@click.option("--out", default=".", show_default=True, type=click.Path(file_okay=False))
@click.option("--days", default=825, show_default=True)
@click.option("--json", "json_out", is_flag=True)
def ca_issue_server(hosts: tuple[str, ...], ca_dir: str, out: str, days: int, json_out: bool) -> None:
    """Issue a TLS server certificate: server.crt.pem and server.key.pem."""
    obj = {"json": json_out}
    try:
        ca_cert = pki.load_certificate(Path(ca_dir) / "ca.crt.pem")
        ca_key = pki.load_key(Path(ca_dir) / "ca.key.pem")
        profile = pki.CertificateProfile(
            kind=pki.CertKind.SERVER,
            subject=parse_dn(f"cn={hosts[0]}"),
            validity_days=days,
            san_dns_names=tuple(hosts),
        )
        cert, key = pki.issue_certificate(ca_cert, ca_key, profile)
    except SfsError as exc:
        _fail(obj, exc.code, exc.message)
    except OSError as exc:
        _fail(obj, "IO_FAILURE", str(exc))
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cert_path = out_dir / "server.crt.pem"
    key_path = out_dir / "server.key.pem"
    cert_path.write_text(cert.pem())
    pki.write_key(key_path, key)
    _emit(
        obj,
        {
            "hosts": list(hosts),
            "cert": str(cert_path),
            "key": str(key_path),
            "fingerprint": cert.fingerprint_sha256,
        },
        f"server certificate for {', '.join(hosts)} written to {cert_path}",
    )


if __name__ == "__main__":
    main()
