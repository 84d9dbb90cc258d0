// Dashboard wiring: draw the field, submit a mission, steer the run, watch
// telemetry and the resulting heatmap. Pure API client; nothing is
// simulated in the browser.

import {
  GatewayClient,
  fieldFeatureCollection,
  missionRequestBody,
  type MissionResponse,
  type RunHandle,
} from "./api.js";
import {
  drawHeatCells,
  drawMarkers,
  drawPolygon,
  drawPolyline,
  fitViewport,
  fromPixel,
  graticuleLines,
  toPixel,
  type Viewport,
} from "./draw.js";
import { project, unproject, type GeoPoint, type LocalPoint } from "./geo.js";
import { legendEntries, parseHeatmap, type HeatCell, type HeatmapDoc } from "./heatmap.js";
import { applyEvent, coveragePercentText, emptyView } from "./state.js";
import { defaultDraft, validateDraft, THRESHOLD_FLOOR_PCT } from "./validate.js";
import { EventStream } from "./ws.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const DEFAULT_ORIGIN: GeoPoint = { lat: 9.0302, lon: 38.7468 };

type DrawMode = "roi" | "nofly" | "priority";

const app = {
  client: new GatewayClient(localStorage.getItem("agrifleet.gateway") ?? "http://127.0.0.1:8000"),
  draft: defaultDraft(),
  drawMode: "roi" as DrawMode,
  pendingRing: [] as GeoPoint[],
  origin: DEFAULT_ORIGIN,
  mission: null as MissionResponse | null,
  run: null as RunHandle | null,
  view: emptyView(0),
  stream: null as EventStream | null,
  heatmap: null as { cells: HeatCell[]; doc: HeatmapDoc } | null,
  showHeatmap: false,
  status: "draw the field polygon, then plan a mission",
};

function canvas(): HTMLCanvasElement {
  return $("map") as HTMLCanvasElement;
}

function allLocalPoints(): LocalPoint[] {
  const points: LocalPoint[] = [];
  const push = (ring: GeoPoint[]) => points.push(...ring.map((v) => project(app.origin, v)));
  push(app.draft.fieldVertices);
  app.draft.noflyRings.forEach(push);
  app.draft.priorities.forEach((p) => push(p.vertices));
  push(app.pendingRing);
  if (app.mission) {
    for (const [x, y] of app.mission.plan.waypoints) points.push({ x, y });
  }
  return points.length ? points : [{ x: 0, y: 0 }, { x: 60, y: 60 }];
}

function render(): void {
  const cv = canvas();
  const ctx = cv.getContext("2d")!;
  ctx.clearRect(0, 0, cv.width, cv.height);
  const vp: Viewport = fitViewport(cv, allLocalPoints());

  const local = (ring: GeoPoint[]) => ring.map((v) => project(app.origin, v));
  for (const line of graticuleLines(app.origin, allLocalPoints())) {
    drawPolyline(ctx, vp, line.points, "#e9ecef", 1);
    const at = toPixel(vp, line.points[0]);
    ctx.fillStyle = "#adb5bd";
    ctx.font = "9px sans-serif";
    ctx.fillText(line.label, at.px + 2, at.py - 2);
  }
  if (app.showHeatmap && app.heatmap && app.mission) {
    const originOffset = project(app.origin, {
      lat: app.heatmap.doc.origin.lat,
      lon: app.heatmap.doc.origin.lon,
    });
    drawHeatCells(ctx, vp, app.heatmap.cells, originOffset, app.heatmap.doc.cell_size_m);
  }
  if (app.draft.fieldVertices.length >= 2) {
    drawPolygon(ctx, vp, local(app.draft.fieldVertices), "#343a40", "rgba(116, 192, 252, 0.12)");
  }
  for (const ring of app.draft.noflyRings) {
    drawPolygon(ctx, vp, local(ring), "#e03131", "rgba(224, 49, 49, 0.18)");
  }
  for (const p of app.draft.priorities) {
    drawPolygon(ctx, vp, local(p.vertices), "#f08c00", "rgba(240, 140, 0, 0.12)");
  }
  if (app.pendingRing.length) {
    drawPolyline(ctx, vp, local(app.pendingRing), "#1971c2", 2);
  }
  if (app.mission) {
    drawPolyline(
      ctx,
      vp,
      app.mission.plan.waypoints.map(([x, y]) => ({ x, y })),
      "#5f3dc4",
      1.2,
    );
  }
  drawMarkers(ctx, vp, app.view.markers.values());
  $("status").textContent = app.status;
  $("progress").textContent = coveragePercentText(app.view);
  renderFeed();
  renderLegend();
  renderControls();
}

function renderFeed(): void {
  const feed = $("feed");
  feed.innerHTML = "";
  for (const line of app.view.feed.slice(-30).reverse()) {
    const div = document.createElement("div");
    div.textContent = `[${line.tick}] ${line.text}`;
    feed.appendChild(div);
  }
}

function renderLegend(): void {
  const legend = $("legend");
  legend.innerHTML = "";
  for (const entry of legendEntries()) {
    const item = document.createElement("span");
    item.className = "legend-item";
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.backgroundColor = entry.color;
    item.appendChild(swatch);
    item.appendChild(document.createTextNode(entry.label));
    legend.appendChild(item);
  }
}

function renderControls(): void {
  const running = app.run !== null && (app.run.status === "Running" || app.run.status === "Paused");
  ($("btn-pause") as HTMLButtonElement).disabled = !(app.run && app.run.status === "Running");
  ($("btn-resume") as HTMLButtonElement).disabled = !(app.run && app.run.status === "Paused");
  ($("btn-abort") as HTMLButtonElement).disabled = !running;
  ($("btn-fire-fault") as HTMLButtonElement).disabled = !running;
  ($("btn-heatmap") as HTMLButtonElement).disabled = !(
    app.run && (app.run.status === "Done" || app.run.status === "Aborted")
  );
  $("run-status").textContent = app.run ? `${app.run.run_id}: ${app.run.status}` : "no run";
}

function readDraftFromForm(): void {
  app.draft.spacingM = Number(($("spacing") as HTMLInputElement).value);
  app.draft.thresholdPct = Number(($("threshold") as HTMLInputElement).value);
  app.draft.fleetSize = Number(($("fleet") as HTMLInputElement).value);
  app.draft.seed = Number(($("seed") as HTMLInputElement).value);
}

function validateLive(): string[] {
  readDraftFromForm();
  const errors = validateDraft(app.draft);
  $("errors").textContent = errors.join("; ");
  const below = app.draft.thresholdPct < THRESHOLD_FLOOR_PCT;
  $("threshold").classList.toggle("invalid", below);
  return errors;
}

async function submitMission(): Promise<void> {
  const errors = validateLive();
  if (errors.length) {
    app.status = `fix the draft first: ${errors[0]}`;
    render();
    return;
  }
  try {
    const fc = fieldFeatureCollection(app.draft);
    const { field_id } = await app.client.uploadField(fc);
    const mission = await app.client.createMission(missionRequestBody(app.draft, field_id));
    app.mission = mission;
    app.origin = { lat: mission.plan.origin.lat, lon: mission.plan.origin.lon };
    app.status =
      `mission ${mission.mission_id}: ${mission.plan.waypoints.length} waypoints, ` +
      `${mission.plan.metrics.turn_count} turns, ${mission.plan.metrics.length_m.toFixed(0)} m`;
  } catch (err) {
    app.status = String(err);
  }
  render();
}

function attachStream(run: RunHandle, fromTick: number): void {
  app.stream?.close();
  app.view = emptyView(app.mission ? app.mission.plan.waypoints.length : 0);
  app.stream = new EventStream(
    (tick) => app.client.eventsUrl(run.run_id, tick),
    (event) => {
      applyEvent(app.view, event, app.origin);
      if (event.kind === "done" || event.kind === "aborted") {
        void refreshHandle();
      }
      render();
    },
    (text) => {
      app.status = text;
      render();
    },
  );
  app.stream.connect(fromTick);
}

async function refreshHandle(): Promise<void> {
  if (!app.run) return;
  app.run = await app.client.runHandle(app.run.run_id);
  render();
}

async function launchRun(): Promise<void> {
  if (!app.mission) {
    app.status = "plan a mission first";
    render();
    return;
  }
  readDraftFromForm();
  const rate = Number(($("rate") as HTMLInputElement).value);
  try {
    const run = await app.client.createRun(app.mission.mission_id, app.draft.seed, rate);
    app.run = run;
    app.heatmap = null;
    app.showHeatmap = false;
    app.status = `run ${run.run_id} started`;
    attachStream(run, 0);
  } catch (err) {
    app.status = String(err);
  }
  render();
}

async function runCommand(command: "pause" | "resume" | "abort"): Promise<void> {
  if (!app.run) return;
  try {
    app.run = await app.client.runCommand(app.run.run_id, command);
    app.status = `${command} -> ${app.run.status}`;
  } catch (err) {
    app.status = String(err);
  }
  render();
}

async function fireFault(): Promise<void> {
  if (!app.run) return;
  const uavId = Number(($("fault-uav") as HTMLInputElement).value);
  const kind = ($("fault-kind") as HTMLSelectElement).value as
    | "battery_drop"
    | "comm_blackout"
    | "controller_fail";
  try {
    await app.client.injectFault(app.run.run_id, { uavId, kind, pct: 30, durationTicks: 12 });
    app.status = `fired ${kind} on UAV ${uavId}`;
  } catch (err) {
    app.status = String(err);
  }
  render();
}

async function toggleHeatmap(): Promise<void> {
  if (!app.run) return;
  if (!app.heatmap) {
    try {
      const doc = (await app.client.heatmap(app.run.run_id)) as HeatmapDoc;
      const cells = parseHeatmap(doc);
      app.heatmap = { cells, doc };
      app.status = cells.length
        ? `heatmap: ${cells.length} classified cells`
        : "heatmap is empty (no captures)";
    } catch (err) {
      app.status = String(err);
      render();
      return;
    }
  }
  app.showHeatmap = !app.showHeatmap;
  render();
}

function onCanvasClick(event: MouseEvent): void {
  const cv = canvas();
  const rect = cv.getBoundingClientRect();
  const vp = fitViewport(cv, allLocalPoints());
  const local = fromPixel(vp, event.clientX - rect.left, event.clientY - rect.top);
  app.pendingRing.push(unproject(app.origin, local));
  render();
}

function finishRing(): void {
  if (app.pendingRing.length < 3) {
    app.status = "a polygon needs at least 3 vertices";
    render();
    return;
  }
  const ring = app.pendingRing;
  app.pendingRing = [];
  if (app.drawMode === "roi") {
    app.draft.fieldVertices = ring;
  } else if (app.drawMode === "nofly") {
    app.draft.noflyRings.push(ring);
  } else {
    const spacing = Number(($("priority-spacing") as HTMLInputElement).value);
    app.draft.priorities.push({
      vertices: ring,
      spacingM: spacing > 0 ? spacing : 2,
      rank: app.draft.priorities.length + 1,
    });
  }
  app.mission = null;
  validateLive();
  render();
}

export function boot(): void {
  const cv = canvas();
  cv.addEventListener("click", onCanvasClick);
  $("btn-finish-ring").addEventListener("click", finishRing);
  $("btn-clear").addEventListener("click", () => {
    app.draft = defaultDraft();
    app.pendingRing = [];
    app.mission = null;
    validateLive();
    render();
  });
  for (const mode of ["roi", "nofly", "priority"] as DrawMode[]) {
    $(`mode-${mode}`).addEventListener("change", () => {
      app.drawMode = mode;
    });
  }
  $("btn-plan").addEventListener("click", () => void submitMission());
  $("btn-launch").addEventListener("click", () => void launchRun());
  $("btn-pause").addEventListener("click", () => void runCommand("pause"));
  $("btn-resume").addEventListener("click", () => void runCommand("resume"));
  $("btn-abort").addEventListener("click", () => void runCommand("abort"));
  $("btn-fire-fault").addEventListener("click", () => void fireFault());
  $("btn-heatmap").addEventListener("click", () => void toggleHeatmap());
  $("gateway").addEventListener("change", () => {
    const url = ($("gateway") as HTMLInputElement).value.replace(/\/$/, "");
    localStorage.setItem("agrifleet.gateway", url);
    app.client = new GatewayClient(url);
  });
  ($("gateway") as HTMLInputElement).value = app.client.baseUrl;
  for (const id of ["spacing", "threshold", "fleet", "seed"]) {
    $(id).addEventListener("input", () => {
      validateLive();
      render();
    });
  }
  // a quick-start rectangle so the demo works without drawing
  $("btn-sample").addEventListener("click", () => {
    const size = 60;
    const corners: LocalPoint[] = [
      { x: 0, y: 0 },
      { x: size, y: 0 },
      { x: size, y: size },
      { x: 0, y: size },
    ];
    app.draft.fieldVertices = corners.map((c) => unproject(DEFAULT_ORIGIN, c));
    app.origin = DEFAULT_ORIGIN;
    app.mission = null;
    validateLive();
    render();
  });
  validateLive();
  render();
}

if (typeof document !== "undefined" && document.getElementById("map")) {
  boot();
}
