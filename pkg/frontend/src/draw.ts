// Canvas rendering in local projected coordinates with a lat/lon graticule.
// No tile service: everything renders from GeoJSON the gateway served.

import { bounds, unproject, type GeoPoint, type LocalPoint } from "./geo.js";
import type { HeatCell } from "./heatmap.js";
import type { UavMarker } from "./state.js";

export interface Viewport {
  scale: number; // pixels per meter
  offsetX: number;
  offsetY: number;
  height: number;
}

export function fitViewport(
  canvas: { width: number; height: number },
  points: LocalPoint[],
  padding = 30,
): Viewport {
  if (points.length === 0) {
    return { scale: 1, offsetX: padding, offsetY: padding, height: canvas.height };
  }
  const b = bounds(points);
  const spanX = Math.max(1, b.maxX - b.minX);
  const spanY = Math.max(1, b.maxY - b.minY);
  const scale = Math.min(
    (canvas.width - 2 * padding) / spanX,
    (canvas.height - 2 * padding) / spanY,
  );
  return {
    scale,
    offsetX: padding - b.minX * scale,
    offsetY: padding - b.minY * scale,
    height: canvas.height,
  };
}

export function toPixel(vp: Viewport, p: LocalPoint): { px: number; py: number } {
  return { px: p.x * vp.scale + vp.offsetX, py: vp.height - (p.y * vp.scale + vp.offsetY) };
}

export function fromPixel(vp: Viewport, px: number, py: number): LocalPoint {
  return { x: (px - vp.offsetX) / vp.scale, y: (vp.height - py - vp.offsetY) / vp.scale };
}

export function drawPolygon(
  ctx: CanvasRenderingContext2D,
  vp: Viewport,
  ring: LocalPoint[],
  stroke: string,
  fill?: string,
): void {
  if (ring.length < 2) return;
  ctx.beginPath();
  const first = toPixel(vp, ring[0]);
  ctx.moveTo(first.px, first.py);
  for (const p of ring.slice(1)) {
    const q = toPixel(vp, p);
    ctx.lineTo(q.px, q.py);
  }
  ctx.closePath();
  if (fill) {
    ctx.fillStyle = fill;
    ctx.fill();
  }
  ctx.strokeStyle = stroke;
  ctx.lineWidth = 1.5;
  ctx.stroke();
}

export function drawPolyline(
  ctx: CanvasRenderingContext2D,
  vp: Viewport,
  points: LocalPoint[],
  stroke: string,
  width = 1,
): void {
  if (points.length < 2) return;
  ctx.beginPath();
  const first = toPixel(vp, points[0]);
  ctx.moveTo(first.px, first.py);
  for (const p of points.slice(1)) {
    const q = toPixel(vp, p);
    ctx.lineTo(q.px, q.py);
  }
  ctx.strokeStyle = stroke;
  ctx.lineWidth = width;
  ctx.stroke();
}

export function drawHeatCells(
  ctx: CanvasRenderingContext2D,
  vp: Viewport,
  cells: HeatCell[],
  originOffset: LocalPoint,
  cellSizeM: number,
): void {
  for (const cell of cells) {
    const sw = toPixel(vp, {
      x: originOffset.x + cell.col * cellSizeM,
      y: originOffset.y + cell.row * cellSizeM,
    });
    const ne = toPixel(vp, {
      x: originOffset.x + (cell.col + 1) * cellSizeM,
      y: originOffset.y + (cell.row + 1) * cellSizeM,
    });
    ctx.globalAlpha = 0.25 + 0.6 * cell.confidence;
    ctx.fillStyle = cell.color;
    ctx.fillRect(sw.px, ne.py, ne.px - sw.px, sw.py - ne.py);
  }
  ctx.globalAlpha = 1;
}

export function drawMarkers(
  ctx: CanvasRenderingContext2D,
  vp: Viewport,
  markers: Iterable<UavMarker>,
): void {
  for (const m of markers) {
    const { px, py } = toPixel(vp, m.position);
    ctx.beginPath();
    ctx.arc(px, py, 6, 0, 2 * Math.PI);
    ctx.fillStyle = m.mode === "Failed" ? "#868e96" : "#1971c2";
    ctx.fill();
    ctx.strokeStyle = "#fff";
    ctx.lineWidth = 1.5;
    ctx.stroke();
    ctx.fillStyle = "#111";
    ctx.font = "11px sans-serif";
    ctx.fillText(`U${m.uavId} ${m.batteryPct.toFixed(0)}%`, px + 9, py + 4);
  }
}

export function graticuleLines(
  origin: GeoPoint,
  area: LocalPoint[],
  stepDeg = 0.0005,
): { label: string; points: LocalPoint[] }[] {
  if (area.length === 0) return [];
  const b = bounds(area);
  const sw = unproject(origin, { x: b.minX, y: b.minY });
  const ne = unproject(origin, { x: b.maxX, y: b.maxY });
  const lines: { label: string; points: LocalPoint[] }[] = [];
  const latStart = Math.ceil(sw.lat / stepDeg) * stepDeg;
  for (let lat = latStart; lat <= ne.lat; lat += stepDeg) {
    const y = (lat - origin.lat) * (Math.PI / 180) * 6371000.0;
    lines.push({
      label: lat.toFixed(4),
      points: [
        { x: b.minX, y },
        { x: b.maxX, y },
      ],
    });
  }
  const lonStart = Math.ceil(sw.lon / stepDeg) * stepDeg;
  const cos = Math.cos(origin.lat * (Math.PI / 180));
  for (let lon = lonStart; lon <= ne.lon; lon += stepDeg) {
    const x = (lon - origin.lon) * (Math.PI / 180) * 6371000.0 * cos;
    lines.push({
      label: lon.toFixed(4),
      points: [
        { x, y: b.minY },
        { x, y: b.maxY },
      ],
    });
  }
  return lines;
}
