// Console state and the pure rules that shape it.
//
// Two invariants rule this module: every rendered row comes from a server
// response (nothing is fabricated client-side), and at most one mutation is
// in flight at a time.  Controls mirror the server's reported effective
// permissions; they never make an authorization decision of their own.

import type {
  AclEntry,
  AuditEvent,
  FileEntry,
  Group,
  Permission,
  User,
  WhoAmI,
} from "./types.js";
import { ALL_PERMISSIONS } from "./types.js";

export type Panel = "whoami" | "users" | "groups" | "acl" | "audit" | "files";

export interface Denied {
  status: number;
  code: string;
  reason: string;
}

export interface ConsoleState {
  principal: WhoAmI | null;
  denied: Denied | null;
  users: User[];
  groups: Group[];
  acl: AclEntry[];
  audit: AuditEvent[];
  browsing: { scope: string; files: FileEntry[] } | null;
  pending: boolean;
  formError: string | null;
}

export function initialState(): ConsoleState {
  return {
    principal: null,
    denied: null,
    users: [],
    groups: [],
    acl: [],
    audit: [],
    browsing: null,
    pending: false,
    formError: null,
  };
}

export function isAdmin(state: ConsoleState): boolean {
  return state.principal?.role === "administrator";
}

export function visiblePanels(state: ConsoleState): Panel[] {
  if (state.denied || !state.principal) return [];
  if (isAdmin(state)) return ["whoami", "users", "groups", "acl", "audit", "files"];
  return ["whoami", "files"];
}

export class MutationInFlight extends Error {
  constructor() {
    super("a mutation is already in flight");
  }
}

/** Guard around every mutation: refuse to start a second one. */
export function beginMutation(state: ConsoleState): void {
  if (state.pending) throw new MutationInFlight();
  state.pending = true;
  state.formError = null;
}

export function endMutation(state: ConsoleState, error?: string): void {
  state.pending = false;
  state.formError = error ?? null;
}

/** Scopes worth offering in the file browser, from server data only. */
export function knownScopes(state: ConsoleState): string[] {
  const scopes = new Set<string>();
  const principal = state.principal;
  if (principal) {
    scopes.add(`home:${principal.username}`);
    for (const group of principal.groups) scopes.add(`group:${group}`);
    for (const scope of Object.keys(principal.effective_permissions)) scopes.add(scope);
  }
  if (isAdmin(state)) {
    for (const user of state.users) scopes.add(`home:${user.username}`);
    for (const group of state.groups) scopes.add(`group:${group.name}`);
  }
  return [...scopes].sort();
}

export interface FileControls {
  download: boolean;
  remove: boolean;
}

/**
 * Which controls a file row gets.  Mirrors the server's own published
 * rules — administrator, reported effective permissions, and
 * delete-your-own-upload — and nothing else; the server re-checks every
 * action regardless.
 */
export function fileControls(
  principal: WhoAmI,
  scope: string,
  file: FileEntry,
): FileControls {
  if (principal.role === "administrator") return { download: true, remove: true };
  const permissions = principal.effective_permissions[scope] ?? [];
  return {
    download: permissions.includes("DOWNLOAD"),
    remove: permissions.includes("DELETE") || file.uploader === principal.username,
  };
}

export function canUpload(principal: WhoAmI, scope: string): boolean {
  if (principal.role === "administrator") return true;
  return (principal.effective_permissions[scope] ?? []).includes("UPLOAD");
}

// -- ACL matrix ---------------------------------------------------------------

export interface AclRow {
  subject: string;
  scope: string;
  cells: Record<Permission, boolean>;
}

export function aclMatrix(entries: AclEntry[]): AclRow[] {
  return [...entries]
    .sort((a, b) =>
      a.subject === b.subject
        ? a.scope.localeCompare(b.scope)
        : a.subject.localeCompare(b.subject),
    )
    .map((entry) => {
      const cells = {} as Record<Permission, boolean>;
      for (const permission of ALL_PERMISSIONS) {
        cells[permission] = entry.permissions.includes(permission);
      }
      return { subject: entry.subject, scope: entry.scope, cells };
    });
}

export type AclToggle =
  | { action: "set"; entry: AclEntry }
  | { action: "delete"; subject: string; scope: string };

/**
 * Flip one permission cell.  Removing the last permission deletes the
 * entry outright so the table never holds empty grants.
 */
export function toggleAcl(
  entries: AclEntry[],
  subject: string,
  scope: string,
  permission: Permission,
): AclToggle {
  const existing = entries.find((e) => e.subject === subject && e.scope === scope);
  const current = new Set(existing?.permissions ?? []);
  if (current.has(permission)) {
    current.delete(permission);
  } else {
    current.add(permission);
  }
  if (current.size === 0) return { action: "delete", subject, scope };
  const permissions = ALL_PERMISSIONS.filter((p) => current.has(p));
  return { action: "set", entry: { subject, scope, permissions } };
}
