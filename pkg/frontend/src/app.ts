// Controller: owns the state, talks to the API, re-renders after every
// change.  Mutations re-fetch the affected view rather than patching it, so
// what is on screen is always something the server actually said.

import type { Api } from "./api.js";
import { ApiError, createApi } from "./api.js";
import type { ConsoleState } from "./state.js";
import {
  beginMutation,
  endMutation,
  initialState,
  isAdmin,
  knownScopes,
  toggleAcl,
} from "./state.js";
import type { Handlers } from "./views.js";
import { renderConsole } from "./views.js";
import type { Permission } from "./types.js";

/** Hands a downloaded bundle to the browser; injectable for tests. */
export type SaveFile = (filename: string, bytes: ArrayBuffer) => void;

function browserSaveFile(filename: string, bytes: ArrayBuffer): void {
  const url = URL.createObjectURL(new Blob([bytes], { type: "application/octet-stream" }));
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = filename;
  anchor.click();
  URL.revokeObjectURL(url);
}

export class Console {
  readonly state: ConsoleState = initialState();

  constructor(
    private readonly root: HTMLElement,
    private readonly api: Api = createApi(),
    private readonly saveFile: SaveFile = browserSaveFile,
  ) {}

  private render(): void {
    renderConsole(this.root, this.state, this.handlers());
  }

  async load(): Promise<void> {
    try {
      this.state.principal = await this.api.whoami();
      this.state.denied = null;
    } catch (error) {
      if (error instanceof ApiError) {
        this.state.denied = { status: error.status, code: error.code, reason: error.reason };
        this.render();
        return;
      }
      throw error;
    }
    if (isAdmin(this.state)) {
      const [users, groups, acl, audit] = await Promise.all([
        this.api.listUsers(),
        this.api.listGroups(),
        this.api.listAcl(),
        this.api.audit(),
      ]);
      this.state.users = users;
      this.state.groups = groups;
      this.state.acl = acl;
      this.state.audit = audit;
    }
    const scopes = knownScopes(this.state);
    if (scopes.length > 0) await this.browse(this.state.browsing?.scope ?? scopes[0]!);
    this.render();
  }

  async browse(scope: string): Promise<void> {
    try {
      const listing = await this.api.listFiles(scope);
      this.state.browsing = { scope, files: listing.files };
      this.state.formError = null;
    } catch (error) {
      if (!(error instanceof ApiError)) throw error;
      this.state.browsing = { scope, files: [] };
      this.state.formError = `${error.code}: ${error.reason}`;
    }
    this.render();
  }

  /** Run one mutation, then refresh the panels it may have changed. */
  private async mutate(
    action: () => Promise<void>,
    refresh: ("users" | "groups" | "acl" | "files" | "audit")[],
  ): Promise<void> {
    beginMutation(this.state);
    this.render();
    try {
      await action();
    } catch (error) {
      if (error instanceof ApiError) {
        endMutation(this.state, `${error.code}: ${error.reason}`);
        this.render();
        return;
      }
      endMutation(this.state, String(error));
      this.render();
      throw error;
    }
    endMutation(this.state);
    if (isAdmin(this.state)) {
      if (refresh.includes("users")) this.state.users = await this.api.listUsers();
      if (refresh.includes("groups")) this.state.groups = await this.api.listGroups();
      if (refresh.includes("acl")) this.state.acl = await this.api.listAcl();
      if (refresh.includes("audit")) this.state.audit = await this.api.audit();
    }
    if (refresh.includes("files") && this.state.browsing) {
      await this.browse(this.state.browsing.scope);
      return; // browse() already rendered
    }
    this.render();
  }

  addUser(username: string, role: string): Promise<void> {
    return this.mutate(async () => {
      await this.api.addUser(username, role);
    }, ["users"]);
  }

  setUserStatus(username: string, status: string): Promise<void> {
    return this.mutate(async () => {
      await this.api.patchUser(username, { status });
    }, ["users"]);
  }

  deleteUser(username: string): Promise<void> {
    return this.mutate(async () => {
      await this.api.deleteUser(username);
    }, ["users", "groups", "acl", "files"]);
  }

  issueCertificate(username: string): Promise<void> {
    return this.mutate(async () => {
      const bundle = await this.api.issueCertificate(username);
      this.saveFile(bundle.filename ?? `${username}-credentials.zip`, bundle.bytes);
    }, ["users"]);
  }

  addGroup(name: string): Promise<void> {
    return this.mutate(async () => {
      await this.api.addGroup(name);
    }, ["groups", "acl"]);
  }

  deleteGroup(name: string): Promise<void> {
    return this.mutate(async () => {
      await this.api.deleteGroup(name);
    }, ["groups", "acl", "users"]);
  }

  addMember(group: string, username: string): Promise<void> {
    return this.mutate(async () => {
      await this.api.addMember(group, username);
    }, ["groups", "users"]);
  }

  removeMember(group: string, username: string): Promise<void> {
    return this.mutate(async () => {
      await this.api.removeMember(group, username);
    }, ["groups", "users"]);
  }

  toggleAclPermission(subject: string, scope: string, permission: Permission): Promise<void> {
    // compute from the current server-fetched entries, then write back
    const change = toggleAcl(this.state.acl, subject, scope, permission);
    return this.mutate(async () => {
      if (change.action === "set") {
        await this.api.setAcl(change.entry);
      } else {
        await this.api.deleteAcl(change.subject, change.scope);
      }
    }, ["acl"]);
  }

  addAclEntry(subject: string, scope: string): Promise<void> {
    return this.mutate(async () => {
      await this.api.setAcl({ subject, scope, permissions: ["VIEW"] });
    }, ["acl"]);
  }

  download(scope: string, name: string): Promise<void> {
    return this.mutate(async () => {
      const payload = await this.api.downloadFile(scope, name);
      this.saveFile(payload.filename ?? name, payload.bytes);
    }, []);
  }

  removeFile(scope: string, name: string): Promise<void> {
    return this.mutate(async () => {
      await this.api.deleteFile(scope, name);
    }, ["files"]);
  }

  upload(scope: string, name: string, content: Uint8Array): Promise<void> {
    return this.mutate(async () => {
      await this.api.uploadFile(scope, name, content);
    }, ["files"]);
  }

  refreshAudit(filter: { principal?: string; action?: string }): Promise<void> {
    return this.mutate(async () => {
      this.state.audit = await this.api.audit(filter);
    }, []);
  }

  private handlers(): Handlers {
    return {
      addUser: (username, role) => void this.addUser(username, role),
      setUserStatus: (username, status) => void this.setUserStatus(username, status),
      deleteUser: (username) => void this.deleteUser(username),
      issueCertificate: (username) => void this.issueCertificate(username),
      addGroup: (name) => void this.addGroup(name),
      deleteGroup: (name) => void this.deleteGroup(name),
      addMember: (group, username) => void this.addMember(group, username),
      removeMember: (group, username) => void this.removeMember(group, username),
      toggleAcl: (subject, scope, permission) =>
        void this.toggleAclPermission(subject, scope, permission),
      addAclEntry: (subject, scope) => void this.addAclEntry(subject, scope),
      browse: (scope) => void this.browse(scope),
      download: (scope, name) => void this.download(scope, name),
      removeFile: (scope, name) => void this.removeFile(scope, name),
      upload: (scope, name, content) => void this.upload(scope, name, content),
      refreshAudit: (filter) => void this.refreshAudit(filter),
    };
  }
}

export function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  const console_ = new Console(root);
  void console_.load();
}

// auto-boot in a real browser; tests drive Console directly
if (typeof window !== "undefined" && document.getElementById("app")) {
  boot();
}
