/** Thin typed client over the gateway REST endpoints. The fetch function
 * is injectable so tests run without a server. */

import type { DeviceWire, DecisionWire, ScheduleRuleWire, StatusWire } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function readDetail(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (body && typeof body.detail === "string") return body.detail;
    return JSON.stringify(body);
  } catch {
    return response.statusText || "request failed";
  }
}

export class GatewayClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw new ApiError(response.status, await readDetail(response));
    }
    return (await response.json()) as T;
  }

  getStatus(): Promise<StatusWire> {
    return this.request<StatusWire>("/api/status");
  }

  getDevices(): Promise<DeviceWire[]> {
    return this.request<DeviceWire[]>("/api/devices");
  }

  getDecisions(limit = 50): Promise<DecisionWire[]> {
    return this.request<DecisionWire[]>(`/api/decisions?limit=${limit}`);
  }

  putRole(deviceId: string, role: string, media: boolean): Promise<DeviceWire> {
    return this.request<DeviceWire>(`/api/devices/${encodeURIComponent(deviceId)}/role`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ role, media }),
    });
  }

  getSchedules(): Promise<ScheduleRuleWire[]> {
    return this.request<ScheduleRuleWire[]>("/api/schedules");
  }

  putSchedules(rules: ScheduleRuleWire[]): Promise<ScheduleRuleWire[]> {
    return this.request<ScheduleRuleWire[]>("/api/schedules", {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(rules),
    });
  }

  postScenario(scenarioId: number): Promise<{ scenario_id: number }> {
    return this.request<{ scenario_id: number }>("/api/scenario", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ scenario_id: scenarioId }),
    });
  }
}
