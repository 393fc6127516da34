import type { AclEntry, AuditEvent, FileEntry, Group, User, WhoAmI } from "../src/types.js";

export const ADMIN: WhoAmI = {
  username: "root",
  role: "administrator",
  status: "active",
  dn: "uid=root,ou=people,dc=sfs,dc=local",
  fingerprint: "ab".repeat(32),
  groups: [],
  tls_version: "TLSv1.3",
  effective_permissions: { "home:root": ["VIEW", "DOWNLOAD", "UPLOAD", "DELETE"] },
};

export const MEMBER: WhoAmI = {
  username: "mika",
  role: "client",
  status: "active",
  dn: "uid=mika,ou=people,dc=sfs,dc=local",
  fingerprint: "cd".repeat(32),
  groups: ["dev"],
  tls_version: "TLSv1.3",
  effective_permissions: {
    "home:mika": ["VIEW", "DOWNLOAD", "UPLOAD", "DELETE"],
    "group:dev": ["VIEW", "DOWNLOAD", "UPLOAD"],
  },
};

export const USERS: User[] = [
  {
    username: "root",
    role: "administrator",
    status: "active",
    dn: "uid=root,ou=people,dc=sfs,dc=local",
    fingerprint: "ab".repeat(32),
    groups: [],
  },
  {
    username: "mika",
    role: "client",
    status: "active",
    dn: "uid=mika,ou=people,dc=sfs,dc=local",
    fingerprint: "cd".repeat(32),
    groups: ["dev"],
  },
];

export const GROUPS: Group[] = [{ name: "dev", members: ["mika"] }];

export const ACL: AclEntry[] = [
  { subject: "group:dev", scope: "group:dev", permissions: ["VIEW", "DOWNLOAD", "UPLOAD"] },
];

export const AUDIT: AuditEvent[] = [
  {
    seq: 1,
    at: "2026-08-17T10:00:00Z",
    principal: "root",
    action: "AUTH",
    target: "-",
    outcome: "success",
    detail: "",
  },
  {
    seq: 2,
    at: "2026-08-17T10:00:05Z",
    principal: "mika",
    action: "LIST",
    target: "group:dev",
    outcome: "denied",
    detail: "NO_GRANT",
  },
];

export function fileIn(scope: string, name: string, uploader: string): FileEntry {
  return {
    file_id: `${scope}/${name}`,
    scope,
    name,
    size_bytes: 1234,
    sha256: "00".repeat(32),
    uploader,
    uploaded_at: "2026-08-17T09:00:00Z",
    version: 1,
    orphan: false,
  };
}
