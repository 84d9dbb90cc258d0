// Local-plane projection matching the gateway: x east, y north in meters
// from the mission origin.

export const EARTH_RADIUS_M = 6371000.0;

export interface GeoPoint {
  lat: number;
  lon: number;
}

export interface LocalPoint {
  x: number;
  y: number;
}

const DEG = Math.PI / 180;

export function project(origin: GeoPoint, p: GeoPoint): LocalPoint {
  return {
    x: (p.lon - origin.lon) * DEG * EARTH_RADIUS_M * Math.cos(origin.lat * DEG),
    y: (p.lat - origin.lat) * DEG * EARTH_RADIUS_M,
  };
}

export function unproject(origin: GeoPoint, p: LocalPoint): GeoPoint {
  return {
    lat: origin.lat + p.y / EARTH_RADIUS_M / DEG,
    lon: origin.lon + p.x / (EARTH_RADIUS_M * Math.cos(origin.lat * DEG)) / DEG,
  };
}

export function ringToLocal(origin: GeoPoint, ring: number[][]): LocalPoint[] {
  // GeoJSON rings are [lon, lat]
  return ring.map(([lon, lat]) => project(origin, { lat, lon }));
}

export function bounds(points: LocalPoint[]): { minX: number; minY: number; maxX: number; maxY: number } {
  let minX = Infinity, minY = Infinity, maxX = -Infinity, maxY = -Infinity;
  for (const p of points) {
    minX = Math.min(minX, p.x);
    minY = Math.min(minY, p.y);
    maxX = Math.max(maxX, p.x);
    maxY = Math.max(maxY, p.y);
  }
  return { minX, minY, maxX, maxY };
}
