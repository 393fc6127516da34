// DOM rendering.  Views are dumb: they draw the state they are given and
// forward interactions to the handlers; re-fetching and error handling live
// in the controller.

import type { ConsoleState } from "./state.js";
import {
  aclMatrix,
  canUpload,
  fileControls,
  isAdmin,
  knownScopes,
  visiblePanels,
} from "./state.js";
import type { Permission } from "./types.js";
import { ALL_PERMISSIONS } from "./types.js";

export interface Handlers {
  addUser(username: string, role: string): void;
  setUserStatus(username: string, status: string): void;
  deleteUser(username: string): void;
  issueCertificate(username: string): void;
  addGroup(name: string): void;
  deleteGroup(name: string): void;
  addMember(group: string, username: string): void;
  removeMember(group: string, username: string): void;
  toggleAcl(subject: string, scope: string, permission: Permission): void;
  addAclEntry(subject: string, scope: string): void;
  browse(scope: string): void;
  download(scope: string, name: string): void;
  removeFile(scope: string, name: string): void;
  upload(scope: string, name: string, content: Uint8Array): void;
  refreshAudit(filter: { principal?: string; action?: string }): void;
}

type Attrs = Record<string, string | boolean | ((event: Event) => void)>;

function el(tag: string, attrs: Attrs = {}, ...children: (Node | string)[]): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (typeof value === "function") {
      node.addEventListener(key.replace(/^on/, ""), value);
    } else if (typeof value === "boolean") {
      if (value) node.setAttribute(key, "");
    } else {
      node.setAttribute(key, value);
    }
  }
  node.append(...children);
  return node;
}

function panel(name: string, title: string, ...children: (Node | string)[]): HTMLElement {
  return el(
    "section",
    { class: "panel", "data-panel": name },
    el("h2", {}, title),
    ...children,
  );
}

function formatBytes(n: number): string {
  if (n < 1024) return `${n} B`;
  if (n < 1024 * 1024) return `${(n / 1024).toFixed(1)} KiB`;
  return `${(n / (1024 * 1024)).toFixed(1)} MiB`;
}

export function renderAccessDenied(root: HTMLElement, state: ConsoleState): void {
  const denied = state.denied;
  root.replaceChildren(
    el(
      "div",
      { class: "denied", "data-view": "denied" },
      el("h1", {}, "Access denied"),
      el("p", { class: "denied-reason" }, denied ? `${denied.code}: ${denied.reason}` : ""),
      el("p", {}, "Check that your browser presents a valid client certificate."),
    ),
  );
}

function whoamiPanel(state: ConsoleState): HTMLElement {
  const p = state.principal!;
  return panel(
    "whoami",
    "Session",
    el(
      "dl",
      {},
      el("dt", {}, "Principal"),
      el("dd", { "data-field": "username" }, p.username),
      el("dt", {}, "Role"),
      el("dd", { "data-field": "role" }, p.role),
      el("dt", {}, "Groups"),
      el("dd", { "data-field": "groups" }, p.groups.join(", ") || "—"),
      el("dt", {}, "TLS"),
      el("dd", {}, p.tls_version),
      el("dt", {}, "Certificate"),
      el("dd", { class: "fingerprint" }, p.fingerprint),
    ),
  );
}

function usersPanel(state: ConsoleState, handlers: Handlers): HTMLElement {
  const rows = state.users.map((user) =>
    el(
      "tr",
      { "data-user": user.username },
      el("td", {}, user.username),
      el("td", {}, user.role),
      el("td", { class: user.status === "active" ? "status-active" : "status-suspended" },
        user.status),
      el("td", {}, user.groups.join(", ")),
      el(
        "td",
        { class: "row-actions" },
        el(
          "button",
          {
            "data-action": "issue-cert",
            disabled: state.pending,
            onclick: () => handlers.issueCertificate(user.username),
          },
          "issue cert",
        ),
        el(
          "button",
          {
            "data-action": "toggle-status",
            disabled: state.pending,
            onclick: () =>
              handlers.setUserStatus(
                user.username,
                user.status === "active" ? "suspended" : "active",
              ),
          },
          user.status === "active" ? "suspend" : "reinstate",
        ),
        el(
          "button",
          {
            "data-action": "delete-user",
            class: "danger",
            disabled: state.pending,
            onclick: () => handlers.deleteUser(user.username),
          },
          "delete",
        ),
      ),
    ),
  );
  const nameInput = el("input", {
    name: "username",
    placeholder: "username",
  }) as HTMLInputElement;
  const roleSelect = el(
    "select",
    { name: "role" },
    el("option", { value: "client" }, "client"),
    el("option", { value: "administrator" }, "administrator"),
  ) as HTMLSelectElement;
  const form = el(
    "form",
    {
      "data-form": "add-user",
      onsubmit: (event) => {
        event.preventDefault();
        if (nameInput.value) handlers.addUser(nameInput.value, roleSelect.value);
      },
    },
    nameInput,
    roleSelect,
    el("button", { type: "submit", disabled: state.pending }, "add user"),
  );
  return panel(
    "users",
    "Users",
    el(
      "table",
      {},
      el(
        "thead",
        {},
        el("tr", {}, ...["user", "role", "status", "groups", ""].map((h) => el("th", {}, h))),
      ),
      el("tbody", {}, ...rows),
    ),
    form,
  );
}

function groupsPanel(state: ConsoleState, handlers: Handlers): HTMLElement {
  const rows = state.groups.map((group) => {
    const memberInput = el("input", { placeholder: "username" }) as HTMLInputElement;
    return el(
      "tr",
      { "data-group": group.name },
      el("td", {}, group.name),
      el(
        "td",
        {},
        ...group.members.map((member) =>
          el(
            "span",
            { class: "member" },
            member,
            el(
              "button",
              {
                "data-action": "remove-member",
                disabled: state.pending,
                onclick: () => handlers.removeMember(group.name, member),
              },
              "×",
            ),
          ),
        ),
      ),
      el(
        "td",
        { class: "row-actions" },
        memberInput,
        el(
          "button",
          {
            "data-action": "add-member",
            disabled: state.pending,
            onclick: () => {
              if (memberInput.value) handlers.addMember(group.name, memberInput.value);
            },
          },
          "add member",
        ),
        el(
          "button",
          {
            "data-action": "delete-group",
            class: "danger",
            disabled: state.pending,
            onclick: () => handlers.deleteGroup(group.name),
          },
          "delete",
        ),
      ),
    );
  });
  const nameInput = el("input", { placeholder: "group name" }) as HTMLInputElement;
  return panel(
    "groups",
    "Groups",
    el(
      "table",
      {},
      el("thead", {}, el("tr", {}, ...["group", "members", ""].map((h) => el("th", {}, h)))),
      el("tbody", {}, ...rows),
    ),
    el(
      "form",
      {
        "data-form": "add-group",
        onsubmit: (event) => {
          event.preventDefault();
          if (nameInput.value) handlers.addGroup(nameInput.value);
        },
      },
      nameInput,
      el("button", { type: "submit", disabled: state.pending }, "add group"),
    ),
  );
}

function aclPanel(state: ConsoleState, handlers: Handlers): HTMLElement {
  const rows = aclMatrix(state.acl).map((row) =>
    el(
      "tr",
      { "data-acl": `${row.subject}|${row.scope}` },
      el("td", {}, row.subject),
      el("td", {}, row.scope),
      ...ALL_PERMISSIONS.map((permission) =>
        el(
          "td",
          { class: "acl-cell" },
          el(
            "input",
            {
              type: "checkbox",
              "data-permission": permission,
              checked: row.cells[permission],
              disabled: state.pending,
              onchange: () => handlers.toggleAcl(row.subject, row.scope, permission),
            },
          ),
        ),
      ),
    ),
  );
  const subjectInput = el("input", { placeholder: "user:name or group:name" }) as HTMLInputElement;
  const scopeInput = el("input", { placeholder: "home:name or group:name" }) as HTMLInputElement;
  return panel(
    "acl",
    "Access grants",
    el(
      "table",
      {},
      el(
        "thead",
        {},
        el("tr", {}, ...["subject", "scope", ...ALL_PERMISSIONS].map((h) => el("th", {}, h))),
      ),
      el("tbody", {}, ...rows),
    ),
    el(
      "form",
      {
        "data-form": "add-acl",
        onsubmit: (event) => {
          event.preventDefault();
          if (subjectInput.value && scopeInput.value) {
            handlers.addAclEntry(subjectInput.value, scopeInput.value);
          }
        },
      },
      subjectInput,
      scopeInput,
      el("button", { type: "submit", disabled: state.pending }, "grant VIEW"),
    ),
  );
}

function auditPanel(state: ConsoleState, handlers: Handlers): HTMLElement {
  const rows = state.audit.map((event) =>
    el(
      "tr",
      { class: `outcome-${event.outcome}` },
      el("td", {}, String(event.seq)),
      el("td", {}, event.at),
      el("td", {}, event.principal),
      el("td", {}, event.action),
      el("td", {}, event.target),
      el("td", {}, event.outcome),
    ),
  );
  const principalInput = el("input", { placeholder: "principal" }) as HTMLInputElement;
  const actionInput = el("input", { placeholder: "action" }) as HTMLInputElement;
  return panel(
    "audit",
    "Audit log",
    el(
      "form",
      {
        "data-form": "audit-filter",
        onsubmit: (event) => {
          event.preventDefault();
          handlers.refreshAudit({
            principal: principalInput.value || undefined,
            action: actionInput.value || undefined,
          });
        },
      },
      principalInput,
      actionInput,
      el("button", { type: "submit" }, "filter"),
    ),
    el(
      "table",
      {},
      el(
        "thead",
        {},
        el(
          "tr",
          {},
          ...["seq", "at", "principal", "action", "target", "outcome"].map((h) =>
            el("th", {}, h),
          ),
        ),
      ),
      el("tbody", {}, ...rows),
    ),
  );
}

function filesPanel(state: ConsoleState, handlers: Handlers): HTMLElement {
  const principal = state.principal!;
  const scopeSelect = el(
    "select",
    {
      "data-field": "scope",
      onchange: (event) => handlers.browse((event.target as HTMLSelectElement).value),
    },
    ...knownScopes(state).map((scope) =>
      el("option", { value: scope, selected: state.browsing?.scope === scope }, scope),
    ),
  ) as HTMLSelectElement;

  const body: (Node | string)[] = [el("label", {}, "Scope: ", scopeSelect)];
  const browsing = state.browsing;
  if (browsing) {
    if (browsing.files.length === 0) {
      body.push(el("p", { class: "empty-state" }, "No files in this scope."));
    } else {
      body.push(
        el(
          "table",
          {},
        el(
          "thead",
          {},
          el(
            "tr",
            {},
            ...["name", "size", "uploader", "version", ""].map((h) => el("th", {}, h)),
          ),
        ),
          el(
            "tbody",
            {},
            ...browsing.files.map((file) => {
              const controls = fileControls(principal, browsing.scope, file);
              return el(
                "tr",
                { "data-file": file.name },
                el("td", {}, file.name + (file.orphan ? " (orphan)" : "")),
                el("td", {}, formatBytes(file.size_bytes)),
                el("td", {}, file.uploader),
                el("td", {}, String(file.version)),
                el(
                  "td",
                  { class: "row-actions" },
                  el(
                    "button",
                    {
                      "data-action": "download",
                      disabled: state.pending || !controls.download,
                      title: controls.download ? "download" : "no DOWNLOAD permission here",
                      onclick: () => handlers.download(browsing.scope, file.name),
                    },
                    "download",
                  ),
                  el(
                    "button",
                    {
                      "data-action": "delete-file",
                      class: "danger",
                      disabled: state.pending || !controls.remove,
                      title: controls.remove ? "delete" : "no DELETE permission here",
                      onclick: () => handlers.removeFile(browsing.scope, file.name),
                    },
                    "delete",
                  ),
                ),
              );
            }),
          ),
        ),
      );
    }
    const fileInput = el("input", { type: "file", "data-field": "upload" }) as HTMLInputElement;
    body.push(
      el(
        "form",
        {
          "data-form": "upload",
          onsubmit: (event) => {
            event.preventDefault();
            const file = fileInput.files?.[0];
            if (!file) return;
            void file.arrayBuffer().then((buffer) => {
              handlers.upload(browsing.scope, file.name, new Uint8Array(buffer));
            });
          },
        },
        fileInput,
        el(
          "button",
          {
            type: "submit",
            disabled: state.pending || !canUpload(principal, browsing.scope),
            title: canUpload(principal, browsing.scope)
              ? "upload"
              : "no UPLOAD permission here",
          },
          "upload",
        ),
      ),
    );
  }
  return panel("files", "Files", ...body);
}

export function renderConsole(root: HTMLElement, state: ConsoleState, handlers: Handlers): void {
  if (state.denied) {
    renderAccessDenied(root, state);
    return;
  }
  if (!state.principal) {
    root.replaceChildren(el("p", { class: "loading" }, "Loading…"));
    return;
  }
  const panels: HTMLElement[] = [];
  for (const name of visiblePanels(state)) {
    if (name === "whoami") panels.push(whoamiPanel(state));
    else if (name === "users") panels.push(usersPanel(state, handlers));
    else if (name === "groups") panels.push(groupsPanel(state, handlers));
    else if (name === "acl") panels.push(aclPanel(state, handlers));
    else if (name === "audit") panels.push(auditPanel(state, handlers));
    else if (name === "files") panels.push(filesPanel(state, handlers));
  }
  const header = el(
    "header",
    {},
    el("h1", {}, "SFS console"),
    el(
      "span",
      { class: "role-badge", "data-field": "role-badge" },
      isAdmin(state) ? "administrator" : "client",
    ),
  );
  const children: (Node | string)[] = [header];
  if (state.formError) {
    children.push(el("p", { class: "form-error", "data-field": "form-error" }, state.formError));
  }
  children.push(...panels);
  root.replaceChildren(...children);
}
