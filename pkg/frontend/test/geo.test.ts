import { describe, expect, it } from "vitest";
import { project, ringToLocal, unproject } from "../src/geo.js";

const ORIGIN = { lat: 9.0302, lon: 38.7468 };

describe("local projection", () => {
  it("round-trips within a nanodegree", () => {
    const p = { lat: 9.0315, lon: 38.7502 };
    const back = unproject(ORIGIN, project(ORIGIN, p));
    expect(back.lat).toBeCloseTo(p.lat, 9);
    expect(back.lon).toBeCloseTo(p.lon, 9);
  });

  it("one millidegree north is about 111 meters", () => {
    const local = project({ lat: 0, lon: 0 }, { lat: 0.001, lon: 0 });
    expect(local.x).toBe(0);
    expect(local.y).toBeCloseTo(111.19, 1);
  });

  it("geojson rings convert as [lon, lat]", () => {
    const ring = ringToLocal(ORIGIN, [[38.7468, 9.0302], [38.7474, 9.0302]]);
    expect(ring[0].x).toBeCloseTo(0);
    expect(ring[0].y).toBeCloseTo(0);
    expect(ring[1].x).toBeGreaterThan(0);
    expect(ring[1].y).toBeCloseTo(0, 6);
  });
});
