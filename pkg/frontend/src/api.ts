// Thin typed client over fetch.  Everything the console knows about the
// server it learns through these calls; there are no side channels.
//
// The fetch implementation and base URL are injectable so tests can run the
// same code against a stub or against a live server over mutual TLS.

import type {
  AclEntry,
  AuditEvent,
  AuditFilter,
  FileEntry,
  FileList,
  Group,
  User,
  WhoAmI,
} from "./types.js";

export interface HttpResponse {
  status: number;
  ok: boolean;
  headers: { get(name: string): string | null };
  json(): Promise<unknown>;
  arrayBuffer(): Promise<ArrayBuffer>;
}

export type FetchLike = (
  url: string,
  init?: {
    method?: string;
    headers?: Record<string, string>;
    body?: string | Uint8Array;
  },
) => Promise<HttpResponse>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly reason: string,
  ) {
    super(`${code}: ${reason}`);
    this.name = "ApiError";
  }
}

export interface ApiOptions {
  baseUrl?: string;
  fetchImpl?: FetchLike;
}

async function raiseFor(response: HttpResponse): Promise<never> {
  let code = "HTTP_" + response.status;
  let reason = "request failed";
  try {
    const body = (await response.json()) as { error?: string; reason?: string };
    if (body.error) code = body.error;
    if (body.reason) reason = body.reason;
  } catch {
    // non-JSON error body; keep the status-based fallback
  }
  throw new ApiError(response.status, code, reason);
}

export function createApi(options: ApiOptions = {}) {
  const base = options.baseUrl ?? "";
  const doFetch: FetchLike =
    options.fetchImpl ?? ((url, init) => globalThis.fetch(url, init as RequestInit));

  async function request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: Parameters<FetchLike>[1] = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await doFetch(base + path, init);
    if (!response.ok) await raiseFor(response);
    return (await response.json()) as T;
  }

  async function requestBytes(
    method: string,
    path: string,
  ): Promise<{ bytes: ArrayBuffer; filename: string | null; sha256: string | null }> {
    const response = await doFetch(base + path, { method });
    if (!response.ok) await raiseFor(response);
    const disposition = response.headers.get("content-disposition") ?? "";
    const match = /filename="([^"]+)"/.exec(disposition);
    return {
      bytes: await response.arrayBuffer(),
      filename: match ? match[1]! : null,
      sha256: response.headers.get("x-sfs-sha256"),
    };
  }

  return {
    whoami: () => request<WhoAmI>("GET", "/v1/whoami"),

    // files
    listFiles: (scope: string) => request<FileList>("GET", `/v1/files/${scope}`),
    downloadFile: (scope: string, name: string) =>
      requestBytes("GET", `/v1/files/${scope}/${encodeURIComponent(name)}`),
    uploadFile: async (scope: string, name: string, content: Uint8Array) => {
      const response = await doFetch(`${base}/v1/files/${scope}/${encodeURIComponent(name)}`, {
        method: "PUT",
        headers: { "Content-Type": "application/octet-stream" },
        body: content,
      });
      if (!response.ok) await raiseFor(response);
      return (await response.json()) as FileEntry;
    },
    deleteFile: (scope: string, name: string) =>
      request<FileEntry>("DELETE", `/v1/files/${scope}/${encodeURIComponent(name)}`),

    // admin: users
    listUsers: () => request<User[]>("GET", "/v1/admin/users"),
    addUser: (username: string, role: string) =>
      request<User>("POST", "/v1/admin/users", { username, role }),
    patchUser: (username: string, patch: { role?: string; status?: string }) =>
      request<User>("PATCH", `/v1/admin/users/${encodeURIComponent(username)}`, patch),
    deleteUser: (username: string) =>
      request<{ ok: boolean }>("DELETE", `/v1/admin/users/${encodeURIComponent(username)}`),
    issueCertificate: (username: string, validityDays?: number) =>
      validityDays === undefined
        ? requestBytes("POST", `/v1/admin/users/${encodeURIComponent(username)}/certificate`)
        : (async () => {
            const response = await doFetch(
              `${base}/v1/admin/users/${encodeURIComponent(username)}/certificate`,
              {
                method: "POST",
                headers: { "Content-Type": "application/json" },
                body: JSON.stringify({ validity_days: validityDays }),
              },
            );
            if (!response.ok) await raiseFor(response);
            const disposition = response.headers.get("content-disposition") ?? "";
            const match = /filename="([^"]+)"/.exec(disposition);
            return {
              bytes: await response.arrayBuffer(),
              filename: match ? match[1]! : null,
              sha256: null,
            };
          })(),

    // admin: groups
    listGroups: () => request<Group[]>("GET", "/v1/admin/groups"),
    addGroup: (name: string) => request<Group>("POST", "/v1/admin/groups", { name }),
    deleteGroup: (name: string) =>
      request<{ ok: boolean }>("DELETE", `/v1/admin/groups/${encodeURIComponent(name)}`),
    addMember: (group: string, username: string) =>
      request<Group>(
        "PUT",
        `/v1/admin/groups/${encodeURIComponent(group)}/members/${encodeURIComponent(username)}`,
      ),
    removeMember: (group: string, username: string) =>
      request<Group>(
        "DELETE",
        `/v1/admin/groups/${encodeURIComponent(group)}/members/${encodeURIComponent(username)}`,
      ),

    // admin: ACL
    listAcl: async () => (await request<{ entries: AclEntry[] }>("GET", "/v1/admin/acl")).entries,
    setAcl: (entry: AclEntry) => request<AclEntry>("PUT", "/v1/admin/acl", entry),
    deleteAcl: (subject: string, scope: string) =>
      request<{ ok: boolean }>("DELETE", "/v1/admin/acl", { subject, scope }),

    // admin: audit
    audit: async (filter: AuditFilter = {}) => {
      const params = new URLSearchParams();
      for (const [key, value] of Object.entries(filter)) {
        if (value !== undefined) params.set(key, String(value));
      }
      const query = params.toString();
      const path = query ? `/v1/admin/audit?${query}` : "/v1/admin/audit";
      return (await request<{ events: AuditEvent[] }>("GET", path)).events;
    },

    backup: () => requestBytes("POST", "/v1/admin/backup"),
  };
}

export type Api = ReturnType<typeof createApi>;
