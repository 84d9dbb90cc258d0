// Client-side draft validation, mirroring the gateway's rules so bad input
// never leaves the browser.

import type { GeoPoint } from "./geo.js";

export const THRESHOLD_FLOOR_PCT = 10;

export interface PriorityDraft {
  vertices: GeoPoint[];
  spacingM: number;
  rank: number;
}

export interface MissionDraft {
  fieldVertices: GeoPoint[]; // drawn ROI, WGS84
  noflyRings: GeoPoint[][];
  priorities: PriorityDraft[];
  spacingM: number;
  thresholdPct: number;
  fleetSize: number;
  batteryPct: number;
  drainPctPerM: number;
  seed: number;
}

export function defaultDraft(): MissionDraft {
  return {
    fieldVertices: [],
    noflyRings: [],
    priorities: [],
    spacingM: 5,
    thresholdPct: 10,
    fleetSize: 2,
    batteryPct: 100,
    drainPctPerM: 0.05,
    seed: 42,
  };
}

export function validateDraft(draft: MissionDraft): string[] {
  const errors: string[] = [];
  if (draft.fieldVertices.length < 3) {
    errors.push("field polygon needs at least 3 vertices before submission");
  }
  if (!(draft.spacingM > 0)) {
    errors.push("sweep spacing must be positive");
  }
  if (draft.thresholdPct < THRESHOLD_FLOOR_PCT) {
    errors.push(`battery threshold below the ${THRESHOLD_FLOOR_PCT}% floor`);
  }
  if (!Number.isInteger(draft.fleetSize) || draft.fleetSize < 1) {
    errors.push("fleet needs at least one UAV");
  }
  if (!(draft.batteryPct > 0 && draft.batteryPct <= 100)) {
    errors.push("battery level must be in (0, 100]");
  }
  if (!(draft.drainPctPerM > 0)) {
    errors.push("drain rate must be positive");
  }
  for (const p of draft.priorities) {
    if (p.vertices.length < 3) errors.push("priority region needs at least 3 vertices");
    if (!(p.spacingM > 0)) errors.push("priority spacing must be positive");
    if (!Number.isInteger(p.rank) || p.rank < 1) errors.push("priority rank must be >= 1");
  }
  return errors;
}
