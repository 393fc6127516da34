// Wire types for /v1 — field names match the server's JSON exactly.

export type Role = "administrator" | "client";
export type Permission = "VIEW" | "DOWNLOAD" | "UPLOAD" | "DELETE";

export const ALL_PERMISSIONS: Permission[] = ["VIEW", "DOWNLOAD", "UPLOAD", "DELETE"];

export interface WhoAmI {
  username: string;
  role: Role;
  status: string;
  dn: string;
  fingerprint: string;
  groups: string[];
  tls_version: string;
  effective_permissions: Record<string, Permission[]>;
}

export interface FileEntry {
  file_id: string;
  scope: string;
  name: string;
  size_bytes: number;
  sha256: string;
  uploader: string;
  uploaded_at: string;
  version: number;
  orphan: boolean;
}

export interface FileList {
  scope: string;
  files: FileEntry[];
}

export interface User {
  username: string;
  role: Role;
  status: string;
  dn: string;
  fingerprint: string;
  groups: string[];
}

export interface Group {
  name: string;
  members: string[];
}

export interface AclEntry {
  subject: string;
  scope: string;
  permissions: Permission[];
}

export interface AuditEvent {
  seq: number;
  at: string;
  principal: string;
  action: string;
  target: string;
  outcome: "success" | "denied" | "error";
  detail: string;
}

export interface AuditFilter {
  principal?: string;
  action?: string;
  from_seq?: number;
  to_seq?: number;
}
