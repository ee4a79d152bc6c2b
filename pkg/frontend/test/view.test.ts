/** View-model behavior pinned against snapshots recorded from the real
 * gateway (scenario 2: guardian home but far; scenario 3: guardian in
 * the room). */

import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { join, dirname } from "node:path";
import { fileURLToPath } from "node:url";

import type { StatusWire } from "../src/types.js";
import {
  buildDeviceRows,
  decisionBadges,
  degradedSummary,
  formatAge,
  levelBadge,
} from "../src/view.js";

const here = dirname(fileURLToPath(import.meta.url));

function fixture(name: string): StatusWire {
  return JSON.parse(readFileSync(join(here, "fixtures", name), "utf-8"));
}

const TV = "02:00:00:00:00:10";

describe("badge colors per the legend", () => {
  it("limited access is red", () => {
    expect(levelBadge("limited_internet")).toEqual({
      text: "limited_internet",
      color: "red",
    });
  });

  it("elevated and full access are green", () => {
    expect(levelBadge("elevated_internet").color).toBe("green");
    expect(levelBadge("full_access").color).toBe("green");
  });

  it("non-internet tiers are gray", () => {
    expect(levelBadge("no_access").color).toBe("gray");
    expect(levelBadge("local_only").color).toBe("gray");
  });
});

describe("scenario 2 snapshot (guardian home but far)", () => {
  const status = fixture("status_s2.json");

  it("tv row shows the red limited badge plus the blue volume-lock badge", () => {
    const rows = buildDeviceRows(status, Date.parse(status.at));
    const tv = rows.find((r) => r.id === TV)!;
    expect(tv.isCad).toBe(true);
    const colors = tv.badges.map((b) => b.color);
    expect(colors).toContain("red");
    expect(colors).toContain("blue");
    expect(colors).not.toContain("green");
  });

  it("displayed access strings are byte-equal to API fields", () => {
    const rows = buildDeviceRows(status, Date.parse(status.at));
    for (const row of rows) {
      const device = status.devices.find((d) => d.id === row.id)!;
      expect(row.access).toBe(device.access);
      const decision = status.decisions[row.id];
      if (row.isCad && decision) {
        expect(row.badges[0].text).toBe(decision.access);
        for (const action of decision.actions) {
          expect(row.badges.map((b) => b.text)).toContain(action);
        }
      }
    }
  });

  it("factors line reflects guardian home but not near", () => {
    const rows = buildDeviceRows(status, Date.parse(status.at));
    const tv = rows.find((r) => r.id === TV)!;
    expect(tv.factorsLine).toContain("guardian_away=false");
    expect(tv.factorsLine).toContain("guardian_near=false");
  });

  it("guardian phone row keeps its full-access green badge", () => {
    const rows = buildDeviceRows(status, Date.parse(status.at));
    const phone = rows.find((r) => r.role === "gd")!;
    expect(phone.badges).toEqual([{ text: "full_access", color: "green" }]);
  });
});

describe("scenario 3 snapshot (guardian in the room)", () => {
  const status = fixture("status_s3.json");

  it("tv row shows green badges including the volume unlock", () => {
    const rows = buildDeviceRows(status, Date.parse(status.at));
    const tv = rows.find((r) => r.id === TV)!;
    const colors = tv.badges.map((b) => b.color);
    expect(colors).toContain("green");
    expect(colors).not.toContain("red");
    expect(tv.badges.map((b) => b.text)).toContain("unlock_volume");
  });
});

describe("decision badges", () => {
  it("maps lock_volume to blue and unlock_volume to green", () => {
    const badges = decisionBadges({
      cad: TV,
      access: "limited_internet",
      actions: ["lock_volume"],
      factors: {
        schedule_allows: true,
        guardian_away: false,
        guardian_near: false,
        nearest_gd: null,
      },
      at: "2024-01-01T12:00:00Z",
    });
    expect(badges).toEqual([
      { text: "limited_internet", color: "red" },
      { text: "lock_volume", color: "blue" },
    ]);
  });
});

describe("empty and degraded states", () => {
  it("empty snapshot produces zero rows", () => {
    const status = fixture("status_s2.json");
    const empty = { ...status, devices: [], decisions: {} };
    expect(buildDeviceRows(empty, 0)).toEqual([]);
  });

  it("degraded summary joins flags, null when clean", () => {
    const status = fixture("status_s2.json");
    expect(degradedSummary(status)).toBeNull();
    expect(
      degradedSummary({ ...status, degraded: ["calendar: down", "lease-file: gone"] }),
    ).toBe("calendar: down; lease-file: gone");
  });
});

describe("last-seen ages", () => {
  const base = Date.parse("2024-01-01T12:00:00Z");

  it("renders seconds, minutes, hours, days", () => {
    expect(formatAge("2024-01-01T11:59:58Z", base)).toBe("2s ago");
    expect(formatAge("2024-01-01T11:57:00Z", base)).toBe("3m ago");
    expect(formatAge("2024-01-01T09:00:00Z", base)).toBe("3h ago");
    expect(formatAge("2023-12-29T12:00:00Z", base)).toBe("3d ago");
  });

  it("handles garbage timestamps", () => {
    expect(formatAge("not-a-time", base)).toBe("unknown");
  });
});
