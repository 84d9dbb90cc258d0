// Typed gateway client. Every UI mutation maps 1:1 onto a documented
// endpoint; payload builders are pure so tests can pin the exact JSON.

import type { MissionDraft } from "./validate.js";

export interface PlanDoc {
  origin: { lat: number; lon: number };
  spacing_m: number;
  angle_deg: number;
  waypoints: [number, number][];
  metrics: { length_m: number; turn_count: number; turn_degree_sum: number };
  geojson: { type: string; features: unknown[] };
}

export interface MissionResponse {
  mission_id: string;
  plan: PlanDoc;
  segments: { uav_id: number | null; waypoint_indices: [number, number]; length_m: number }[];
}

export interface RunHandle {
  run_id: string;
  mission_id: string;
  seed: number;
  playback_rate: number;
  status: "Planned" | "Running" | "Paused" | "Done" | "Aborted";
  tick: number;
}

export interface FaultDraft {
  uavId: number;
  kind: "battery_drop" | "comm_blackout" | "controller_fail";
  pct?: number;
  durationTicks?: number;
}

export function fieldFeatureCollection(draft: MissionDraft): object {
  const ring = (vs: { lat: number; lon: number }[]) => {
    const coords = vs.map((v) => [v.lon, v.lat]);
    coords.push(coords[0]);
    return coords;
  };
  const features: object[] = [
    {
      type: "Feature",
      properties: { role: "roi" },
      geometry: { type: "Polygon", coordinates: [ring(draft.fieldVertices)] },
    },
  ];
  for (const nofly of draft.noflyRings) {
    features.push({
      type: "Feature",
      properties: { role: "nofly" },
      geometry: { type: "Polygon", coordinates: [ring(nofly)] },
    });
  }
  for (const p of draft.priorities) {
    features.push({
      type: "Feature",
      properties: { role: "priority", spacing: p.spacingM, rank: p.rank },
      geometry: { type: "Polygon", coordinates: [ring(p.vertices)] },
    });
  }
  return { type: "FeatureCollection", features };
}

export function missionRequestBody(draft: MissionDraft, fieldId: string, requestId?: string): object {
  const body: Record<string, unknown> = {
    field_id: fieldId,
    spacing_m: draft.spacingM,
    angle_deg: 0.0,
    threshold_pct: draft.thresholdPct,
    fleet: Array.from({ length: draft.fleetSize }, (_, i) => ({
      uav_id: i + 1,
      battery_pct: draft.batteryPct,
      drain_pct_per_m: draft.drainPctPerM,
    })),
  };
  if (requestId) body.request_id = requestId;
  return body;
}

export function faultRequestBody(draft: FaultDraft): object {
  const body: Record<string, unknown> = { uav_id: draft.uavId, kind: draft.kind };
  if (draft.kind === "battery_drop") body.pct = draft.pct ?? 30;
  if (draft.kind === "comm_blackout") body.duration_ticks = draft.durationTicks ?? 10;
  return body;
}

export class GatewayClient {
  constructor(public baseUrl: string) {}

  private async post<T>(path: string, body: object): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      const text = await response.text();
      throw new Error(`POST ${path} -> ${response.status}: ${text}`);
    }
    return (await response.json()) as T;
  }

  private async get<T>(path: string): Promise<T> {
    const response = await fetch(this.baseUrl + path);
    if (!response.ok) throw new Error(`GET ${path} -> ${response.status}`);
    return (await response.json()) as T;
  }

  uploadField(fc: object): Promise<{ field_id: string }> {
    return this.post("/api/fields", fc);
  }

  createMission(body: object): Promise<MissionResponse> {
    return this.post("/api/missions", body);
  }

  createRun(missionId: string, seed: number, playbackRate: number): Promise<RunHandle> {
    return this.post("/api/runs", {
      mission_id: missionId,
      seed,
      playback_rate: playbackRate,
    });
  }

  runCommand(runId: string, command: "pause" | "resume" | "abort"): Promise<RunHandle> {
    return this.post(`/api/runs/${runId}/${command}`, {});
  }

  injectFault(runId: string, fault: FaultDraft): Promise<{ accepted: boolean }> {
    return this.post(`/api/runs/${runId}/faults`, faultRequestBody(fault));
  }

  runHandle(runId: string): Promise<RunHandle> {
    return this.get(`/api/runs/${runId}`);
  }

  heatmap(runId: string): Promise<unknown> {
    return this.get(`/api/runs/${runId}/heatmap`);
  }

  report(runId: string): Promise<unknown> {
    return this.get(`/api/runs/${runId}/report`);
  }

  eventsUrl(runId: string, fromTick: number): string {
    const ws = this.baseUrl.replace(/^http/, "ws");
    return `${ws}/api/runs/${runId}/events?from_tick=${fromTick}`;
  }
}
