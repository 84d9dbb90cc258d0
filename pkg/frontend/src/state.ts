// Run-view state reconstructed purely from server-sent events: UAV markers,
// the event feed and coverage progress. Reloading mid-run replays the stream
// from tick 0 through the same reducer and lands in the same state.

import { project, type GeoPoint, type LocalPoint } from "./geo.js";
import { decodeFrame, telemetryBody, MSG_TELEMETRY } from "./protocol.js";

export interface ApiEvent {
  tick: number;
  kind: string;
  [key: string]: unknown;
}

export interface UavMarker {
  uavId: number;
  position: LocalPoint;
  batteryPct: number;
  mode: string;
  lastTick: number;
}

export interface FeedLine {
  tick: number;
  text: string;
}

export interface RunView {
  lastTick: number;
  markers: Map<number, UavMarker>;
  feed: FeedLine[];
  capturedWaypoints: Set<number>;
  plannedWaypoints: number;
  swaps: number;
  transfersAccepted: number;
  terminal: "" | "done" | "aborted";
}

export function emptyView(plannedWaypoints: number): RunView {
  return {
    lastTick: 0,
    markers: new Map(),
    feed: [],
    capturedWaypoints: new Set(),
    plannedWaypoints,
    swaps: 0,
    transfersAccepted: 0,
    terminal: "",
  };
}

const FEED_LIMIT = 400;

function pushFeed(view: RunView, tick: number, text: string): void {
  view.feed.push({ tick, text });
  if (view.feed.length > FEED_LIMIT) view.feed.splice(0, view.feed.length - FEED_LIMIT);
}

export function coverageProgress(view: RunView): number {
  if (view.plannedWaypoints <= 0) return 0;
  return view.capturedWaypoints.size / view.plannedWaypoints;
}

export function coveragePercentText(view: RunView): string {
  return `${view.capturedWaypoints.size}/${view.plannedWaypoints} waypoints (${(
    100 * coverageProgress(view)
  ).toFixed(0)}%)`;
}

export function applyEvent(view: RunView, event: ApiEvent, origin: GeoPoint): RunView {
  view.lastTick = Math.max(view.lastTick, event.tick ?? 0);
  switch (event.kind) {
    case "telemetry": {
      try {
        const frame = decodeFrame(event.frame as string);
        if (frame.msgType !== MSG_TELEMETRY) break;
        const body = telemetryBody(frame);
        view.markers.set(frame.sysId, {
          uavId: frame.sysId,
          position: project(origin, { lat: body.lat, lon: body.lon }),
          batteryPct: body.battery,
          mode: body.mode,
          lastTick: body.tick,
        });
      } catch {
        // a corrupt mirror line is display-only; skip it
      }
      break;
    }
    case "agent_action": {
      const uav = event.uav as number;
      const action = event.action as string;
      if (action === "capture" && typeof event.waypoint === "number") {
        view.capturedWaypoints.add(event.waypoint);
      }
      if (action !== "capture" && action !== "goto") {
        pushFeed(view, event.tick, `UAV ${uav}: ${action}${event.reason ? ` (${event.reason})` : ""}`);
      }
      const marker = view.markers.get(uav);
      if (marker) marker.mode = event.mode as string;
      break;
    }
    case "swap":
      view.swaps += 1;
      pushFeed(view, event.tick, `UAV ${event.uav}: battery swapped`);
      break;
    case "transfer": {
      const phase = event.phase as string;
      if (phase === "accepted") view.transfersAccepted += 1;
      pushFeed(
        view,
        event.tick,
        `transfer ${phase}${event.from != null ? ` from ${event.from}` : ""}${event.to != null ? ` to ${event.to}` : ""}`,
      );
      break;
    }
    case "fault": {
      const uav = event.uav as number;
      pushFeed(view, event.tick, `FAULT ${event.fault} on UAV ${uav}`);
      if (event.fault === "controller_fail" || event.fault === "battery_dead") {
        const marker = view.markers.get(uav);
        if (marker) marker.mode = "Failed";
      }
      break;
    }
    case "offload":
      pushFeed(view, event.tick, `UAV ${event.uav}: offload ${event.phase}`);
      break;
    case "done":
      view.terminal = "done";
      pushFeed(view, event.tick, "run complete");
      break;
    case "aborted":
      view.terminal = "aborted";
      pushFeed(view, event.tick, "run aborted");
      break;
  }
  return view;
}
