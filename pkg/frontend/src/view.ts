/** Pure view-model builders. No fetching, no DOM: main.ts renders what
 * these return, and the tests pin their behavior against recorded
 * gateway responses. */

import type { DecisionWire, DeviceWire, StatusWire } from "./types.js";

export type BadgeColor = "red" | "blue" | "green" | "gray";

export interface Badge {
  /** Byte-equal to the API field it displays (access level or action). */
  text: string;
  color: BadgeColor;
}

export interface DeviceRow {
  id: string;
  hostname: string;
  role: string;
  access: string;
  media: boolean;
  lastSeenAge: string;
  isCad: boolean;
  badges: Badge[];
  factorsLine: string;
  decisionAt: string | null;
}

/** Access-level badge: red for restricted/limited, green for elevated or
 * full operation, gray for the non-internet tiers. */
export function levelBadge(access: string): Badge {
  if (access === "limited_internet") return { text: access, color: "red" };
  if (access === "elevated_internet" || access === "full_access") {
    return { text: access, color: "green" };
  }
  return { text: access, color: "gray" };
}

/** Device-specific restrictions (volume lock) show as blue badges;
 * an unlock rides along with the green elevated state. */
export function actionBadge(action: string): Badge {
  return { text: action, color: action === "lock_volume" ? "blue" : "green" };
}

export function decisionBadges(decision: DecisionWire): Badge[] {
  return [levelBadge(decision.access), ...decision.actions.map(actionBadge)];
}

export function formatAge(lastSeenIso: string, nowMs: number): string {
  const seen = Date.parse(lastSeenIso);
  if (Number.isNaN(seen)) return "unknown";
  const seconds = Math.max(0, Math.round((nowMs - seen) / 1000));
  if (seconds < 60) return `${seconds}s ago`;
  if (seconds < 3600) return `${Math.floor(seconds / 60)}m ago`;
  if (seconds < 86400) return `${Math.floor(seconds / 3600)}h ago`;
  return `${Math.floor(seconds / 86400)}d ago`;
}

export function factorsLine(decision: DecisionWire): string {
  const f = decision.factors;
  const near = f.guardian_near === null ? "n/a" : String(f.guardian_near);
  const parts = [
    `schedule_allows=${f.schedule_allows}`,
    `guardian_away=${f.guardian_away}`,
    `guardian_near=${near}`,
  ];
  if (f.nearest_gd) parts.push(`nearest_gd=${f.nearest_gd}`);
  return parts.join(" ");
}

/** One row per device; CAD rows carry the latest decision's badges. */
export function buildDeviceRows(status: StatusWire, nowMs: number): DeviceRow[] {
  return status.devices.map((device: DeviceWire) => {
    const decision = status.decisions[device.id];
    const isCad = device.role === "cad";
    return {
      id: device.id,
      hostname: device.hostname,
      role: device.role,
      access: device.access,
      media: device.media,
      lastSeenAge: formatAge(device.last_seen, nowMs),
      isCad,
      badges: isCad && decision ? decisionBadges(decision) : [levelBadge(device.access)],
      factorsLine: isCad && decision ? factorsLine(decision) : "",
      decisionAt: isCad && decision ? decision.at : null,
    };
  });
}

export const ROLE_OPTIONS = ["cad", "gd", "actuator", "unknown"] as const;

export function degradedSummary(status: StatusWire): string | null {
  if (status.degraded.length === 0) return null;
  return status.degraded.join("; ");
}
