/** DOM wiring for the console. All policy content comes verbatim from the
 * API; this file only renders view models and forwards mutations. */

import { ApiError, GatewayClient } from "./api.js";
import { Poller } from "./poll.js";
import type { ScheduleRuleWire, StatusWire } from "./types.js";
import {
  Badge,
  DeviceRow,
  ROLE_OPTIONS,
  buildDeviceRows,
  degradedSummary,
} from "./view.js";

const client = new GatewayClient("");
let lastStatus: StatusWire | null = null;
let stale = false;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function toast(message: string, kind: "error" | "ok" = "error"): void {
  const host = document.getElementById("toasts")!;
  const node = el("div", `toast toast-${kind}`, message);
  host.appendChild(node);
  setTimeout(() => node.remove(), 5000);
}

function badgeNode(badge: Badge): HTMLElement {
  return el("span", `badge badge-${badge.color}`, badge.text);
}

function renderBanner(): void {
  const banner = document.getElementById("banner")!;
  banner.innerHTML = "";
  if (stale) {
    const box = el("div", "banner-error");
    box.appendChild(el("span", undefined, "gateway unreachable, retrying"));
    const retry = el("button", "retry", "retry now");
    retry.addEventListener("click", () => void refresh());
    box.appendChild(retry);
    banner.appendChild(box);
    return;
  }
  const degraded = lastStatus ? degradedSummary(lastStatus) : null;
  if (degraded) {
    banner.appendChild(el("div", "banner-warn", `degraded: ${degraded}`));
  }
}

function renderHeader(status: StatusWire): void {
  const header = document.getElementById("meta")!;
  header.textContent =
    `tick ${status.tick} · registry v${status.registry_version} · ${status.at}` +
    (stale ? " · STALE" : "");
}

function confirmRoleChange(row: DeviceRow, role: string, media: boolean): void {
  const named = row.hostname || row.id;
  if (!window.confirm(`Set ${named} to role "${role}"${media ? " (media device)" : ""}?`)) {
    return;
  }
  client
    .putRole(row.id, role, media)
    .then(() => void refresh())
    .catch((error) => {
      if (error instanceof ApiError && error.status === 422) {
        toast(error.detail); // validation message shown verbatim
      } else {
        toast("role change failed: gateway unreachable");
      }
    });
}

function deviceRowNode(row: DeviceRow): HTMLTableRowElement {
  const tr = el("tr");
  tr.appendChild(el("td", "mono", row.id));
  tr.appendChild(el("td", undefined, row.hostname || "(unnamed)"));

  const roleCell = el("td");
  const select = el("select");
  for (const role of ROLE_OPTIONS) {
    const option = el("option", undefined, role);
    option.value = role;
    if (role === row.role) option.selected = true;
    select.appendChild(option);
  }
  roleCell.appendChild(select);
  const mediaLabel = el("label", "media-label");
  const media = el("input");
  media.type = "checkbox";
  media.checked = row.media;
  mediaLabel.appendChild(media);
  mediaLabel.appendChild(document.createTextNode("media"));
  roleCell.appendChild(mediaLabel);
  const apply = el("button", undefined, "apply");
  apply.addEventListener("click", () =>
    confirmRoleChange(row, select.value, media.checked),
  );
  roleCell.appendChild(apply);
  tr.appendChild(roleCell);

  const accessCell = el("td");
  for (const badge of row.badges) accessCell.appendChild(badgeNode(badge));
  tr.appendChild(accessCell);

  const factorsCell = el("td", "factors mono", row.factorsLine);
  tr.appendChild(factorsCell);
  tr.appendChild(el("td", "age", row.lastSeenAge));
  return tr;
}

function renderDevices(status: StatusWire): void {
  const body = document.getElementById("device-rows")!;
  body.innerHTML = "";
  const rows = buildDeviceRows(status, Date.now());
  if (rows.length === 0) {
    const tr = el("tr");
    const td = el("td", "empty", "no devices yet; waiting for lease sync");
    td.colSpan = 6;
    tr.appendChild(td);
    body.appendChild(tr);
    return;
  }
  for (const row of rows) body.appendChild(deviceRowNode(row));
}

function renderScenarioControls(status: StatusWire): void {
  const host = document.getElementById("scenarios")!;
  host.innerHTML = "";
  if (!status.scenario_mode) return;
  host.appendChild(el("span", undefined, "scenario:"));
  for (let id = 1; id <= 6; id++) {
    const button = el(
      "button",
      status.scenario_id === id ? "scenario active" : "scenario",
      String(id),
    );
    button.addEventListener("click", () => {
      client
        .postScenario(id)
        .then(() => void refresh())
        .catch((error) =>
          toast(error instanceof ApiError ? error.detail : "scenario switch failed"),
        );
    });
    host.appendChild(button);
  }
}

function renderDecisions(): void {
  client
    .getDecisions(15)
    .then((entries) => {
      const host = document.getElementById("decision-log")!;
      host.innerHTML = "";
      for (const entry of entries.slice().reverse()) {
        const line = el("div", "log-line");
        line.appendChild(el("span", "mono", entry.at));
        line.appendChild(el("span", "mono", entry.cad));
        line.appendChild(badgeNode({ text: entry.access, color: "gray" }));
        line.appendChild(el("span", "mono", entry.actions.join(",") || "-"));
        host.appendChild(line);
      }
    })
    .catch(() => undefined);
}

// -- schedules ---------------------------------------------------------

const DAY_NAMES = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];

function renderSchedules(rules: ScheduleRuleWire[]): void {
  const host = document.getElementById("schedule-list")!;
  host.innerHTML = "";
  if (rules.length === 0) {
    host.appendChild(el("div", "empty", "no schedule: access allowed around the clock"));
  }
  rules.forEach((rule, index) => {
    const line = el("div", "schedule-line");
    line.appendChild(
      el("span", "mono", `${rule.days.join(",")} ${rule.start}-${rule.end}`),
    );
    const remove = el("button", undefined, "remove");
    remove.addEventListener("click", () => {
      const next = rules.filter((_, i) => i !== index);
      client
        .putSchedules(next)
        .then(renderSchedules)
        .catch((error) =>
          toast(error instanceof ApiError ? error.detail : "schedule update failed"),
        );
    });
    line.appendChild(remove);
    host.appendChild(line);
  });
}

function wireScheduleForm(): void {
  const form = document.getElementById("schedule-form") as HTMLFormElement;
  const daysHost = document.getElementById("schedule-days")!;
  for (const day of DAY_NAMES) {
    const label = el("label", "day-label");
    const box = el("input");
    box.type = "checkbox";
    box.value = day;
    box.name = "day";
    label.appendChild(box);
    label.appendChild(document.createTextNode(day));
    daysHost.appendChild(label);
  }
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const days = Array.from(
      form.querySelectorAll<HTMLInputElement>("input[name=day]:checked"),
    ).map((box) => box.value);
    const start = (document.getElementById("schedule-start") as HTMLInputElement).value;
    const end = (document.getElementById("schedule-end") as HTMLInputElement).value;
    if (days.length === 0 || !start || !end) {
      toast("pick at least one day and a start/end time");
      return;
    }
    client
      .getSchedules()
      .then((existing) => client.putSchedules([...existing, { days, start, end }]))
      .then((rules) => {
        renderSchedules(rules);
        form.reset();
      })
      .catch((error) =>
        toast(error instanceof ApiError ? error.detail : "schedule update failed"),
      );
  });
}

// -- poll loop ---------------------------------------------------------

async function refresh(): Promise<void> {
  try {
    const status = await client.getStatus();
    lastStatus = status;
    stale = false;
    renderHeader(status);
    renderBanner();
    renderDevices(status);
    renderScenarioControls(status);
    renderDecisions();
  } catch {
    stale = true;
    renderBanner();
    if (lastStatus) renderHeader(lastStatus);
  }
}

function start(): void {
  wireScheduleForm();
  client.getSchedules().then(renderSchedules).catch(() => undefined);
  new Poller(refresh, { intervalMs: 2000 }).start();
}

document.addEventListener("DOMContentLoaded", start);
