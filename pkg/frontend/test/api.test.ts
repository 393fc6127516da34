import { describe, expect, it } from "vitest";

import type { FetchLike, HttpResponse } from "../src/api.js";
import { ApiError, createApi } from "../src/api.js";

interface Recorded {
  url: string;
  method?: string;
  headers?: Record<string, string>;
  body?: string | Uint8Array;
}

function jsonResponse(status: number, body: unknown, headers: Record<string, string> = {}) {
  const lower: Record<string, string> = {};
  for (const [k, v] of Object.entries(headers)) lower[k.toLowerCase()] = v;
  const response: HttpResponse = {
    status,
    ok: status < 400,
    headers: { get: (name) => lower[name.toLowerCase()] ?? null },
    json: async () => body,
    arrayBuffer: async () => new TextEncoder().encode(JSON.stringify(body)).buffer as ArrayBuffer,
  };
  return response;
}

function stub(...responses: HttpResponse[]) {
  const calls: Recorded[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    calls.push({ url, ...init });
    const next = responses.shift();
    if (!next) throw new Error("stub exhausted");
    return next;
  };
  return { calls, fetchImpl };
}

describe("request shapes", () => {
  it("whoami hits GET /v1/whoami", async () => {
    const { calls, fetchImpl } = stub(jsonResponse(200, { username: "root" }));
    const api = createApi({ fetchImpl });
    await api.whoami();
    expect(calls[0]).toMatchObject({ url: "/v1/whoami", method: "GET" });
  });

  it("prefixes a configured base URL", async () => {
    const { calls, fetchImpl } = stub(jsonResponse(200, []));
    const api = createApi({ baseUrl: "https://localhost:8443", fetchImpl });
    await api.listUsers();
    expect(calls[0]!.url).toBe("https://localhost:8443/v1/admin/users");
  });

  it("addUser posts a JSON body", async () => {
    const { calls, fetchImpl } = stub(jsonResponse(201, { username: "dave" }));
    await createApi({ fetchImpl }).addUser("dave", "client");
    expect(calls[0]).toMatchObject({ url: "/v1/admin/users", method: "POST" });
    expect(JSON.parse(calls[0]!.body as string)).toEqual({ username: "dave", role: "client" });
    expect(calls[0]!.headers).toMatchObject({ "Content-Type": "application/json" });
  });

  it("setAcl PUTs the full entry and deleteAcl sends a body with DELETE", async () => {
    const { calls, fetchImpl } = stub(jsonResponse(200, {}), jsonResponse(200, { ok: true }));
    const api = createApi({ fetchImpl });
    await api.setAcl({ subject: "user:sam", scope: "home:mika", permissions: ["VIEW"] });
    await api.deleteAcl("user:sam", "home:mika");
    expect(calls[0]).toMatchObject({ url: "/v1/admin/acl", method: "PUT" });
    expect(calls[1]).toMatchObject({ url: "/v1/admin/acl", method: "DELETE" });
    expect(JSON.parse(calls[1]!.body as string)).toEqual({
      subject: "user:sam",
      scope: "home:mika",
    });
  });

  it("uploadFile PUTs raw bytes with an octet-stream content type", async () => {
    const { calls, fetchImpl } = stub(jsonResponse(201, { name: "a.bin", version: 1 }));
    const payload = new Uint8Array([1, 2, 3]);
    await createApi({ fetchImpl }).uploadFile("group:dev", "a b.bin", payload);
    expect(calls[0]!.url).toBe("/v1/files/group:dev/a%20b.bin");
    expect(calls[0]!.method).toBe("PUT");
    expect(calls[0]!.body).toBe(payload);
    expect(calls[0]!.headers).toMatchObject({ "Content-Type": "application/octet-stream" });
  });

  it("audit builds a query string only from set filters", async () => {
    const { calls, fetchImpl } = stub(
      jsonResponse(200, { events: [] }),
      jsonResponse(200, { events: [] }),
    );
    const api = createApi({ fetchImpl });
    await api.audit();
    await api.audit({ principal: "mika", from_seq: 3 });
    expect(calls[0]!.url).toBe("/v1/admin/audit");
    expect(calls[1]!.url).toBe("/v1/admin/audit?principal=mika&from_seq=3");
  });
});

describe("error mapping", () => {
  it("raises ApiError with the server's error code and reason", async () => {
    const { fetchImpl } = stub(
      jsonResponse(403, { error: "NOT_ADMIN", reason: "administrator role required" }),
    );
    const api = createApi({ fetchImpl });
    const error = await api.listUsers().catch((e: unknown) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect(error).toMatchObject({
      status: 403,
      code: "NOT_ADMIN",
      reason: "administrator role required",
    });
  });

  it("falls back to the HTTP status for non-JSON error bodies", async () => {
    const broken: HttpResponse = {
      status: 502,
      ok: false,
      headers: { get: () => null },
      json: async () => {
        throw new Error("not json");
      },
      arrayBuffer: async () => new ArrayBuffer(0),
    };
    const { fetchImpl } = stub(broken);
    const error = await createApi({ fetchImpl }).whoami().catch((e: unknown) => e);
    expect(error).toMatchObject({ status: 502, code: "HTTP_502" });
  });
});

describe("binary downloads", () => {
  it("issueCertificate returns bytes and the attachment filename", async () => {
    const zip = new Uint8Array([0x50, 0x4b, 0x03, 0x04, 9, 9]);
    const response: HttpResponse = {
      status: 200,
      ok: true,
      headers: {
        get: (name) =>
          name.toLowerCase() === "content-disposition"
            ? 'attachment; filename="dave-credentials.zip"'
            : null,
      },
      json: async () => ({}),
      arrayBuffer: async () => zip.buffer as ArrayBuffer,
    };
    const calls: Recorded[] = [];
    const fetchImpl: FetchLike = async (url, init) => {
      calls.push({ url, ...init });
      return response;
    };
    const bundle = await createApi({ fetchImpl }).issueCertificate("dave");
    expect(calls[0]).toMatchObject({
      url: "/v1/admin/users/dave/certificate",
      method: "POST",
    });
    expect(bundle.filename).toBe("dave-credentials.zip");
    expect(new Uint8Array(bundle.bytes).slice(0, 4)).toEqual(
      new Uint8Array([0x50, 0x4b, 0x03, 0x04]),
    );
  });

  it("downloadFile exposes the integrity header", async () => {
    const body = new TextEncoder().encode("hello");
    const response: HttpResponse = {
      status: 200,
      ok: true,
      headers: { get: (name) => (name.toLowerCase() === "x-sfs-sha256" ? "ff".repeat(32) : null) },
      json: async () => ({}),
      arrayBuffer: async () => body.buffer as ArrayBuffer,
    };
    const api = createApi({ fetchImpl: async () => response });
    const payload = await api.downloadFile("home:mika", "notes.txt");
    expect(payload.sha256).toBe("ff".repeat(32));
    expect(new Uint8Array(payload.bytes)).toEqual(new Uint8Array(body));
  });
});
