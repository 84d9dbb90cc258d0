"""Mission documents: the canonical plan/segment JSON produced for a field.

Both the CLI and the HTTP gateway call into this module, so a plan computed
for the same inputs is byte-identical no matter which surface produced it.
"""

from __future__ import annotations

import hashlib
import json
from typing import Optional, Sequence

from .allocator import BatteryModel, SegmentationResult, segment_mission
from .geo import GeoPoint, Polygon, path_length, project, unproject
from .planner import MissionPlan, PriorityRegion, SweepConfig, apply_priorities
from .scenario import parse_field


def canonical_bytes(doc: dict) -> bytes:
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode()


def content_id(doc: dict) -> str:
    return hashlib.sha256(canonical_bytes(doc)).hexdigest()[:12]


def plan_to_doc(plan: MissionPlan) -> dict:
    line = []
    for wp in plan.waypoints:
        geo = unproject(plan.origin, wp)
        line.append([geo.lon, geo.lat])
    return {
        "origin": {"lat": plan.origin.lat, "lon": plan.origin.lon},
        "spacing_m": plan.spacing_m,
        "angle_deg": plan.angle_deg,
        "waypoints": [[wp.x, wp.y] for wp in plan.waypoints],
        "metrics": {
            "length_m": plan.metrics.length_m,
            "turn_count": plan.metrics.turn_count,
            "turn_degree_sum": plan.metrics.turn_degree_sum,
        },
        "geojson": {
            "type": "FeatureCollection",
            "features": [
                {
                    "type": "Feature",
                    "properties": {"role": "plan"},
                    "geometry": {"type": "LineString", "coordinates": line},
                }
            ],
        },
    }


def segments_to_doc(result: SegmentationResult) -> list[dict]:
    docs = [
        {
            "uav_id": seg.uav_id,
            "waypoint_indices": [seg.start_index, seg.end_index],
            "length_m": seg.internal_length_m,
        }
        for seg in result.segments
    ]
    if not result.fully_assigned:
        docs.append(
            {
                "uav_id": None,
                "waypoint_indices": [
                    result.residual_start_index,
                    result.residual_start_index + len(result.residual) - 1,
                ],
                "length_m": path_length(result.residual),
            }
        )
    return docs


def _priority_from_request(spec: dict, origin: GeoPoint) -> PriorityRegion:
    ring = [project(origin, GeoPoint(lat=c[1], lon=c[0])) for c in spec["polygon"]]
    return PriorityRegion(
        region=Polygon(ring), spacing_m=float(spec["spacing_m"]), rank=int(spec["rank"])
    )


def plan_mission(
    field_fc: dict,
    spacing_m: float,
    angle: float | str = "auto",
    inset_m: float = 0.0,
    threshold_pct: float = 10.0,
    fleet: Optional[Sequence[dict]] = None,
    priorities: Optional[Sequence[dict]] = None,
    use_field_priorities: bool = True,
) -> dict:
    """Plan a coverage mission over a GeoJSON field and, when a fleet is
    given, segment it across the fleet's current batteries."""
    field = parse_field(field_fc)
    cfg = SweepConfig(spacing_m=spacing_m, angle_deg=angle, inset_m=inset_m)
    regions = list(field.priorities) if use_field_priorities else []
    if priorities:
        regions.extend(_priority_from_request(p, field.origin) for p in priorities)
    plan = apply_priorities(
        field.roi, regions, cfg, nofly=field.nofly, origin=field.origin
    )
    out = {"plan": plan_to_doc(plan), "segments": []}
    if fleet:
        models = [
            (
                int(u["uav_id"]),
                BatteryModel(
                    float(u["battery_pct"]), float(u["drain_pct_per_m"]), threshold_pct
                ),
            )
            for u in fleet
        ]
        segmentation = segment_mission(plan.waypoints, models)
        out["segments"] = segments_to_doc(segmentation)
    return out
