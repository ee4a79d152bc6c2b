/** Wire types mirroring the gateway's JSON responses. The console never
 * invents policy values: everything displayed comes from these fields. */

export interface DeviceWire {
  id: string;
  role: string;
  access: string;
  ip: string;
  hostname: string;
  last_seen: string;
  media: boolean;
}

export interface FactorsWire {
  schedule_allows: boolean;
  guardian_away: boolean;
  guardian_near: boolean | null;
  nearest_gd: string | null;
}

export interface DecisionWire {
  cad: string;
  access: string;
  actions: string[];
  factors: FactorsWire;
  at: string;
}

export interface StatusWire {
  tick: number;
  at: string;
  registry_version: number;
  degraded: string[];
  scripts_written: number;
  scenario_mode: boolean;
  scenario_id: number | null;
  devices: DeviceWire[];
  decisions: Record<string, DecisionWire>;
}

export interface ScheduleRuleWire {
  days: string[];
  start: string;
  end: string;
}
