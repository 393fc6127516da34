"""Request and response bodies for the REST surface."""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..acl import NAME_RE, ROLES

NAME_PATTERN = NAME_RE.pattern


class ErrorBody(BaseModel):
    error: str
    reason: str


class FileOut(BaseModel):
    file_id: str
    scope: str
    name: str
    size_bytes: int
    sha256: str
    uploader: str
    uploaded_at: str
    version: int
    orphan: bool = False


class FileListOut(BaseModel):
    scope: str
    files: list[FileOut]


class WhoAmIOut(BaseModel):
    username: str
    role: str
    status: str
    dn: str
    fingerprint: str
    groups: list[str]
    tls_version: str
    effective_permissions: dict[str, list[str]]


class UserCreate(BaseModel):
    username: str = Field(pattern=NAME_PATTERN)
    role: str

    def checked_role(self) -> str:
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        return self.role


class UserPatch(BaseModel):
    role: str | None = None
    status: str | None = None


class UserOut(BaseModel):
    username: str
    role: str
    status: str
    dn: str
    fingerprint: str
    groups: list[str]


class GroupCreate(BaseModel):
    name: str = Field(pattern=NAME_PATTERN)


class GroupOut(BaseModel):
    name: str
    members: list[str]


class AclEntryBody(BaseModel):
    subject: str
    scope: str
    permissions: list[str]


class AclDeleteBody(BaseModel):
    subject: str
    scope: str


class AclListOut(BaseModel):
    entries: list[AclEntryBody]


class AuditEventOut(BaseModel):
    seq: int
    at: str
    principal: str
    action: str
    target: str
    outcome: str
    detail: str


class AuditListOut(BaseModel):
    events: list[AuditEventOut]


class CertIssueBody(BaseModel):
    validity_days: int = 365


class OkOut(BaseModel):
    ok: bool = True
