"""REST surface.

One middleware does both halves of the per-request envelope: it resolves
the TLS peer to a session before the handler runs, and appends exactly one
audit event after the handler produces a response — so the audit log grows
by precisely one row per API request, including denied and malformed ones.
"""

from __future__ import annotations

import tempfile
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from starlette.background import BackgroundTask

from ..errors import SfsError
from . import schemas
from .auth import AuthFailure, PeerInfo, Session, authenticate_session
from .core import ApiError, SfsSystem

API_PREFIX = "/v1"

# Resolves a request to what the TLS layer saw for that connection.  The
# production runner installs a registry-backed resolver; tests inject one.
PeerResolver = Callable[[Request], "PeerInfo | None"]


def _no_peer(request: Request) -> PeerInfo | None:
    return None


def _default_action(method: str, path: str) -> tuple[str, str]:
    """Map (method, path) to the audit action/target used when a handler
    never runs (auth failures, validation errors, unknown routes)."""
    parts = [p for p in path[len(API_PREFIX) :].split("/") if p]
    if not parts:
        return "AUTH", path
    head = parts[0]
    if head == "files":
        target = "/".join(parts[1:]) or path
        if method == "PUT":
            return "UPLOAD", target
        if method == "DELETE":
            return "DELETE", target
        if len(parts) >= 3:
            return "DOWNLOAD", target
        return "LIST", target
    if head == "whoami":
        return "AUTH", "whoami"
    if head == "admin" and len(parts) >= 2:
        section = parts[1]
        if section == "users":
            if len(parts) == 2:
                return ("ADMIN_USER_ADD" if method == "POST" else "LIST"), "users"
            if len(parts) == 4 and parts[3] == "certificate":
                return "ADMIN_CERT_ISSUE", parts[2]
            if method == "DELETE":
                return "ADMIN_USER_DEL", parts[2]
            return "ADMIN_USER_MOD", parts[2]
        if section == "groups":
            if len(parts) == 2:
                return ("ADMIN_GROUP_ADD" if method == "POST" else "LIST"), "groups"
            if len(parts) == 5 and parts[3] == "members":
                action = "ADMIN_MEMBER_ADD" if method == "PUT" else "ADMIN_MEMBER_DEL"
                return action, f"{parts[2]}/{parts[4]}"
            return "ADMIN_GROUP_DEL", parts[2]
        if section == "acl":
            if method == "PUT":
                return "ADMIN_ACL_SET", "acl"
            if method == "DELETE":
                return "ADMIN_ACL_DEL", "acl"
            return "LIST", "acl"
        if section == "audit":
            return "ADMIN_AUDIT_READ", "audit"
        if section == "backup":
            return "ADMIN_BACKUP", "backup"
    return "AUTH", path


def create_app(system: SfsSystem) -> FastAPI:
    app = FastAPI(title="sfs", docs_url=None, redoc_url=None, openapi_url=None)
    app.state.system = system
    app.state.peer_resolver = _no_peer

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status, content={"error": exc.code, "reason": exc.message}
        )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(
            status_code=400, content={"error": "VALIDATION", "reason": str(exc.errors())}
        )

    @app.exception_handler(SfsError)
    async def sfs_error_handler(request: Request, exc: SfsError) -> JSONResponse:
        return JSONResponse(
            status_code=500, content={"error": exc.code, "reason": exc.message}
        )

    @app.middleware("http")
    async def session_and_audit(request: Request, call_next) -> Response:
        if not request.url.path.startswith(API_PREFIX):
            return await call_next(request)
        action, target = _default_action(request.method, request.url.path)
        request.state.audit_action = action
        request.state.audit_target = target
        request.state.audit_outcome = None
        request.state.audit_detail = ""
        principal_name = "anonymous"

        peer: PeerInfo | None = app.state.peer_resolver(request)
        if peer is None:
            response: Response = JSONResponse(
                status_code=401,
                content={"error": "NO_CLIENT_CERT", "reason": "no client certificate presented"},
            )
            request.state.audit_action = "AUTH"
            request.state.audit_detail = "no client certificate"
        else:
            try:
                session = authenticate_session(system.directory, system.ca_cert, peer)
            except AuthFailure as exc:
                response = JSONResponse(
                    status_code=401, content={"error": exc.code, "reason": exc.message}
                )
                request.state.audit_action = "AUTH"
                request.state.audit_detail = exc.message
                if exc.username:
                    principal_name = exc.username
            else:
                request.state.session = session
                principal_name = session.principal.username
                response = await call_next(request)

        outcome = request.state.audit_outcome
        if outcome is None:
            if response.status_code < 400:
                outcome = "success"
            elif response.status_code in (401, 403):
                outcome = "denied"
            else:
                outcome = "error"
        system.store.append_audit(
            principal=principal_name,
            action=request.state.audit_action,
            target=request.state.audit_target,
            outcome=outcome,
            detail=request.state.audit_detail,
        )
        return response

    def session_of(request: Request) -> Session:
        return request.state.session

    # -- files -------------------------------------------------------------

    @app.get("/v1/files/{scope}", response_model=schemas.FileListOut)
    async def list_files(scope: str, request: Request):
        request.state.audit_target = scope
        files = system.list_files(session_of(request), scope)
        return {"scope": scope, "files": files}

    @app.get("/v1/files/{scope}/{name}")
    async def download_file(scope: str, name: str, request: Request):
        request.state.audit_target = f"{scope}/{name}"
        record, handle = system.download(session_of(request), scope, name)

        def chunks():
            try:
                while True:
                    chunk = handle.read(1024 * 1024)
                    if not chunk:
                        break
                    yield chunk
            finally:
                handle.close()

        return StreamingResponse(
            chunks(),
            media_type="application/octet-stream",
            headers={
                "X-SFS-SHA256": record.sha256,
                "Content-Length": str(record.size_bytes),
                "Content-Disposition": f'attachment; filename="{record.name}"',
            },
        )

    @app.put("/v1/files/{scope}/{name}", response_model=schemas.FileOut, status_code=201)
    async def upload_file(scope: str, name: str, request: Request):
        request.state.audit_target = f"{scope}/{name}"
        declared = request.headers.get("content-length")
        if declared and declared.isdigit() and int(declared) > system.config.max_upload_bytes:
            raise ApiError(413, "TOO_LARGE", f"content exceeds {system.config.max_upload_bytes} bytes")
        spool = tempfile.SpooledTemporaryFile(max_size=4 * 1024 * 1024)
        try:
            received = 0
            async for chunk in request.stream():
                received += len(chunk)
                if received > system.config.max_upload_bytes:
                    raise ApiError(
                        413, "TOO_LARGE", f"content exceeds {system.config.max_upload_bytes} bytes"
                    )
                spool.write(chunk)
            spool.seek(0)
            record = system.upload(
                session_of(request), scope, name, spool, request.headers.get("if-match")
            )
        finally:
            spool.close()
        return {**record.to_dict(), "orphan": False}

    @app.delete("/v1/files/{scope}/{name}", response_model=schemas.FileOut)
    async def delete_file(scope: str, name: str, request: Request):
        request.state.audit_target = f"{scope}/{name}"
        record = system.delete_file(session_of(request), scope, name)
        return {**record.to_dict(), "orphan": False}

    # -- session -----------------------------------------------------------

    @app.get("/v1/whoami", response_model=schemas.WhoAmIOut)
    async def whoami(request: Request):
        return system.whoami(session_of(request))

    # -- admin: users ---------------------------------------------------------

    @app.get("/v1/admin/users", response_model=list[schemas.UserOut])
    async def admin_list_users(request: Request):
        return system.list_users(session_of(request))

    @app.post("/v1/admin/users", response_model=schemas.UserOut, status_code=201)
    async def admin_user_add(body: schemas.UserCreate, request: Request):
        request.state.audit_target = body.username
        return system.user_add(session_of(request), body.username, body.role)

    @app.delete("/v1/admin/users/{username}", response_model=schemas.OkOut)
    async def admin_user_del(username: str, request: Request):
        request.state.audit_target = username
        system.user_del(session_of(request), username)
        return {"ok": True}

    @app.patch("/v1/admin/users/{username}", response_model=schemas.UserOut)
    async def admin_user_mod(username: str, body: schemas.UserPatch, request: Request):
        request.state.audit_target = username
        detail = []
        if body.role is not None:
            detail.append(f"role={body.role}")
        if body.status is not None:
            detail.append(f"status={body.status}")
        request.state.audit_detail = " ".join(detail)
        return system.user_mod(session_of(request), username, body.role, body.status)

    @app.post("/v1/admin/users/{username}/certificate")
    async def admin_cert_issue(
        username: str, request: Request, body: schemas.CertIssueBody | None = None
    ):
        request.state.audit_target = username
        days = body.validity_days if body else 365
        bundle = system.cert_issue(session_of(request), username, days)
        return Response(
            content=bundle,
            media_type="application/zip",
            headers={
                "Content-Disposition": f'attachment; filename="{username}-credentials.zip"'
            },
        )

    # -- admin: groups ----------------------------------------------------------

    @app.get("/v1/admin/groups", response_model=list[schemas.GroupOut])
    async def admin_list_groups(request: Request):
        return system.list_groups(session_of(request))

    @app.post("/v1/admin/groups", response_model=schemas.GroupOut, status_code=201)
    async def admin_group_add(body: schemas.GroupCreate, request: Request):
        request.state.audit_target = body.name
        return system.group_add(session_of(request), body.name)

    @app.delete("/v1/admin/groups/{name}", response_model=schemas.OkOut)
    async def admin_group_del(name: str, request: Request):
        request.state.audit_target = name
        system.group_del(session_of(request), name)
        return {"ok": True}

    @app.put("/v1/admin/groups/{name}/members/{username}", response_model=schemas.GroupOut)
    async def admin_member_add(name: str, username: str, request: Request):
        request.state.audit_target = f"{name}/{username}"
        return system.member_add(session_of(request), name, username)

    @app.delete("/v1/admin/groups/{name}/members/{username}", response_model=schemas.GroupOut)
    async def admin_member_del(name: str, username: str, request: Request):
        request.state.audit_target = f"{name}/{username}"
        return system.member_del(session_of(request), name, username)

    # -- admin: ACL ----------------------------------------------------------------

    @app.get("/v1/admin/acl", response_model=schemas.AclListOut)
    async def admin_acl_list(request: Request):
        return {"entries": system.acl_list(session_of(request))}

    @app.put("/v1/admin/acl", response_model=schemas.AclEntryBody)
    async def admin_acl_set(body: schemas.AclEntryBody, request: Request):
        request.state.audit_target = f"{body.subject}|{body.scope}"
        request.state.audit_detail = ",".join(sorted(body.permissions))
        return system.acl_set(session_of(request), body.subject, body.scope, body.permissions)

    @app.delete("/v1/admin/acl", response_model=schemas.OkOut)
    async def admin_acl_del(body: schemas.AclDeleteBody, request: Request):
        request.state.audit_target = f"{body.subject}|{body.scope}"
        system.acl_del(session_of(request), body.subject, body.scope)
        return {"ok": True}

    # -- admin: audit and backup ---------------------------------------------------

    @app.get("/v1/admin/audit", response_model=schemas.AuditListOut)
    async def admin_audit(
        request: Request,
        principal: str | None = Query(default=None),
        action: str | None = Query(default=None),
        from_seq: int | None = Query(default=None),
        to_seq: int | None = Query(default=None),
    ):
        events = system.audit_query(session_of(request), principal, action, from_seq, to_seq)
        return {"events": events}

    @app.post("/v1/admin/backup")
    async def admin_backup(request: Request):
        tmp = tempfile.NamedTemporaryFile(suffix=".zip", delete=False)
        tmp.close()
        path = Path(tmp.name)
        try:
            system.backup_to(session_of(request), path)
        except BaseException:
            path.unlink(missing_ok=True)
            raise
        return FileResponse(
            path,
            media_type="application/zip",
            filename="sfs-backup.zip",
            background=BackgroundTask(path.unlink, missing_ok=True),
        )

    if system.config.ui_path is not None:
        app.mount("/ui", StaticFiles(directory=system.config.ui_path, html=True), name="ui")

    return app
