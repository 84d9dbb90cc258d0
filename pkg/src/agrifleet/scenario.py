"""Scenario documents: the JSON file format binding a GeoJSON field to fleet,
station, channel, physics and fault configuration for one reproducible run.

The JSON Schema (also published at docs/scenario.schema.json and by the
gateway) is the artifact's own contract for mission files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any, Optional

import jsonschema

from .allocator import MIN_THRESHOLD_PCT
from .fielddata import ClassLabel
from .geo import GeoPoint, LocalPoint, Polygon, project, unproject
from .link import ChannelConfig
from .planner import PriorityRegion, SweepConfig


class ScenarioError(ValueError):
    def __init__(self, message: str, json_path: str = ""):
        super().__init__(f"{json_path}: {message}" if json_path else message)
        self.json_path = json_path


_POSITION = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"x": {"type": "number"}, "y": {"type": "number"}},
            "required": ["x", "y"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"lat": {"type": "number"}, "lon": {"type": "number"}},
            "required": ["lat", "lon"],
            "additionalProperties": False,
        },
    ]
}

_CHANNEL = {
    "type": "object",
    "properties": {
        "loss_prob": {"type": "number", "minimum": 0, "maximum": 1},
        "latency_ticks": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer"},
        "max_retries": {"type": "integer", "minimum": 1},
        "ack_timeout_ticks": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

SCENARIO_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "agrifleet scenario",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer"},
        "field": {"type": "object"},  # GeoJSON FeatureCollection, validated structurally below
        "origin": {
            "type": "object",
            "properties": {"lat": {"type": "number"}, "lon": {"type": "number"}},
            "required": ["lat", "lon"],
        },
        "stations": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "kind": {"enum": ["bss", "offload", "combined"]},
                    "position": _POSITION,
                },
                "required": ["kind", "position"],
                "additionalProperties": False,
            },
        },
        "fleet": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "uav_id": {"type": "integer", "minimum": 1, "maximum": 199},
                    "start": _POSITION,
                    "battery_pct": {"type": "number", "minimum": 0, "maximum": 100},
                    "drain_pct_per_m": {"type": "number", "exclusiveMinimum": 0},
                    "true_drain_pct_per_m": {"type": "number", "exclusiveMinimum": 0},
                },
                "required": ["uav_id", "battery_pct", "drain_pct_per_m"],
                "additionalProperties": False,
            },
        },
        "sweep": {
            "type": "object",
            "properties": {
                "spacing_m": {"type": "number", "exclusiveMinimum": 0},
                "angle_deg": {
                    "oneOf": [{"type": "number"}, {"const": "auto"}]
                },
                "inset_m": {"type": "number", "minimum": 0},
            },
            "required": ["spacing_m"],
            "additionalProperties": False,
        },
        "threshold_pct": {"type": "number", "minimum": MIN_THRESHOLD_PCT},
        "ferry_margin_m": {"type": "number", "minimum": 0},
        "radio": _CHANNEL,
        "wifi": _CHANNEL,
        "faults": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "at_tick": {"type": "integer", "minimum": 0},
                    "uav_id": {"type": "integer", "minimum": 1},
                    "kind": {"enum": ["battery_drop", "comm_blackout", "controller_fail"]},
                    "pct": {"type": "number", "exclusiveMinimum": 0, "maximum": 100},
                    "duration_ticks": {"type": "integer", "minimum": 1},
                },
                "required": ["at_tick", "uav_id", "kind"],
                "additionalProperties": False,
            },
        },
        "tick_seconds": {"type": "number", "exclusiveMinimum": 0},
        "uav_speed_mps": {"type": "number", "exclusiveMinimum": 0},
        "turn_drain_pct_per_90deg": {"type": "number", "minimum": 0},
        "swap_service_ticks": {"type": "integer", "minimum": 0},
        "gs_redispatch": {"type": "boolean"},
        "silence_ticks": {"type": "integer", "minimum": 1},
        "tick_limit": {"type": "integer", "minimum": 1},
        "coverage_pitch_m": {"type": "number", "exclusiveMinimum": 0},
        "offload_chunk_records": {"type": "integer", "minimum": 1},
        "sensor_jitter": {"type": "number", "minimum": 0},
        "default_class": {"enum": ["soil", "crop", "grass", "broadleaf_weed"]},
        "heatmap": {
            "type": "object",
            "properties": {
                "cell_size_m": {"type": "number", "exclusiveMinimum": 0},
                "classifier": {"enum": ["oracle", "noisy_oracle"]},
                "epsilon": {"type": "number", "minimum": 0, "maximum": 1},
                "classifier_seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
    },
    "required": ["seed", "field", "stations", "fleet", "sweep"],
    "additionalProperties": False,
}


def validate_scenario_json(doc: Any) -> None:
    """Schema-validate a scenario document; errors carry a JSON-pointer path."""
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: e.json_path)
    if errors:
        first = errors[0]
        pointer = "/" + "/".join(str(p) for p in first.absolute_path)
        raise ScenarioError(first.message, json_path=pointer)


@dataclass(frozen=True)
class FieldSpec:
    origin: GeoPoint
    roi: Polygon
    nofly: tuple[Polygon, ...] = ()
    priorities: tuple[PriorityRegion, ...] = ()
    truth: tuple[tuple[ClassLabel, Polygon], ...] = ()


def _ring_to_local(ring: list, origin: GeoPoint) -> Polygon:
    points = [project(origin, GeoPoint(lat=coord[1], lon=coord[0])) for coord in ring]
    return Polygon(points)


def parse_field(fc: dict, origin: Optional[GeoPoint] = None) -> FieldSpec:
    """Build a FieldSpec from a GeoJSON FeatureCollection.

    Feature roles come from properties.role: "roi" (or the first untagged
    polygon), "nofly", "priority" (with spacing/rank) and "truth" (with
    class). Coordinates are WGS84 [lon, lat] per GeoJSON.
    """
    if fc.get("type") != "FeatureCollection":
        raise ScenarioError("field must be a GeoJSON FeatureCollection", "/field/type")
    features = fc.get("features", [])
    roi_ring = None
    raw: list[tuple[str, dict, list]] = []
    for i, feat in enumerate(features):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Polygon":
            continue
        rings = geom.get("coordinates") or []
        if not rings:
            raise ScenarioError("polygon has no rings", f"/field/features/{i}")
        props = feat.get("properties") or {}
        role = props.get("role", "")
        if role in ("roi", "") and roi_ring is None:
            roi_ring = rings[0]
        else:
            raw.append((role, props, rings[0]))
    if roi_ring is None:
        raise ScenarioError("field needs a polygon feature with role 'roi'", "/field/features")
    if origin is None:
        lon, lat = roi_ring[0][0], roi_ring[0][1]
        origin = GeoPoint(lat=lat, lon=lon)
    roi = _ring_to_local(roi_ring, origin)
    nofly, priorities, truth = [], [], []
    for role, props, ring in raw:
        poly = _ring_to_local(ring, origin)
        if role == "nofly":
            nofly.append(poly)
        elif role == "priority":
            priorities.append(
                PriorityRegion(
                    region=poly,
                    spacing_m=float(props.get("spacing", 1.0)),
                    rank=int(props.get("rank", 1)),
                )
            )
        elif role == "truth":
            truth.append((ClassLabel.from_name(props.get("class", "soil")), poly))
    return FieldSpec(
        origin=origin,
        roi=roi,
        nofly=tuple(nofly),
        priorities=tuple(priorities),
        truth=tuple(truth),
    )


@dataclass(frozen=True)
class StationSpec:
    kind: str
    position: LocalPoint

    @property
    def swaps(self) -> bool:
        return self.kind in ("bss", "combined")

    @property
    def offloads(self) -> bool:
        return self.kind in ("offload", "combined")


@dataclass(frozen=True)
class UavSpec:
    uav_id: int
    start: LocalPoint
    battery_pct: float
    drain_pct_per_m: float
    true_drain_pct_per_m: float


@dataclass(frozen=True)
class FaultEvent:
    at_tick: int
    uav_id: int
    kind: str  # battery_drop | comm_blackout | controller_fail
    pct: float = 0.0
    duration_ticks: int = 0

    def to_json(self) -> dict:
        out = {"at_tick": self.at_tick, "uav_id": self.uav_id, "kind": self.kind}
        if self.kind == "battery_drop":
            out["pct"] = self.pct
        if self.kind == "comm_blackout":
            out["duration_ticks"] = self.duration_ticks
        return out

    @classmethod
    def from_json(cls, d: dict) -> "FaultEvent":
        return cls(
            at_tick=d["at_tick"],
            uav_id=d["uav_id"],
            kind=d["kind"],
            pct=d.get("pct", 0.0),
            duration_ticks=d.get("duration_ticks", 0),
        )


@dataclass
class Scenario:
    raw: dict
    seed: int
    field: FieldSpec
    stations: list[StationSpec]
    fleet: list[UavSpec]
    sweep: SweepConfig
    threshold_pct: float = MIN_THRESHOLD_PCT
    ferry_margin_m: float = 0.0
    radio: ChannelConfig = ChannelConfig()
    wifi: ChannelConfig = ChannelConfig()
    faults: list[FaultEvent] = dc_field(default_factory=list)
    tick_seconds: float = 1.0
    uav_speed_mps: float = 5.0
    turn_drain_pct_per_90deg: float = 0.05
    swap_service_ticks: int = 60
    gs_redispatch: bool = True
    silence_ticks: int = 10
    tick_limit: int = 200_000
    coverage_pitch_m: Optional[float] = None
    offload_chunk_records: int = 20
    sensor_jitter: float = 0.02
    default_class: ClassLabel = ClassLabel.SOIL
    heatmap_cell_m: float = 10.0
    classifier_name: str = "oracle"
    classifier_epsilon: float = 0.0
    classifier_seed: int = 0
    name: str = "scenario"


def _parse_position(d: dict, origin: GeoPoint) -> LocalPoint:
    if "x" in d:
        return LocalPoint(float(d["x"]), float(d["y"]))
    return project(origin, GeoPoint(lat=float(d["lat"]), lon=float(d["lon"])))


def load_scenario(doc: dict) -> Scenario:
    """Validate and materialize a scenario document."""
    validate_scenario_json(doc)
    origin = None
    if "origin" in doc:
        origin = GeoPoint(lat=doc["origin"]["lat"], lon=doc["origin"]["lon"])
    field_spec = parse_field(doc["field"], origin)
    origin = field_spec.origin
    stations = [
        StationSpec(kind=s["kind"], position=_parse_position(s["position"], origin))
        for s in doc["stations"]
    ]
    if not any(s.swaps for s in stations):
        raise ScenarioError("at least one bss or combined station required", "/stations")
    fleet = []
    for u in doc["fleet"]:
        start = (
            _parse_position(u["start"], origin)
            if "start" in u
            else min((s for s in stations if s.swaps), key=lambda s: s.kind).position
        )
        fleet.append(
            UavSpec(
                uav_id=u["uav_id"],
                start=start,
                battery_pct=float(u["battery_pct"]),
                drain_pct_per_m=float(u["drain_pct_per_m"]),
                true_drain_pct_per_m=float(u.get("true_drain_pct_per_m", u["drain_pct_per_m"])),
            )
        )
    if len({u.uav_id for u in fleet}) != len(fleet):
        raise ScenarioError("duplicate uav_id in fleet", "/fleet")
    sweep_doc = doc["sweep"]
    sweep = SweepConfig(
        spacing_m=float(sweep_doc["spacing_m"]),
        angle_deg=sweep_doc.get("angle_deg", 0.0),
        inset_m=float(sweep_doc.get("inset_m", 0.0)),
    )
    heatmap = doc.get("heatmap", {})
    return Scenario(
        raw=doc,
        seed=int(doc["seed"]),
        field=field_spec,
        stations=stations,
        fleet=fleet,
        sweep=sweep,
        threshold_pct=float(doc.get("threshold_pct", MIN_THRESHOLD_PCT)),
        ferry_margin_m=float(doc.get("ferry_margin_m", 0.0)),
        radio=ChannelConfig(**doc.get("radio", {})),
        wifi=ChannelConfig(**doc.get("wifi", {})),
        faults=[FaultEvent.from_json(f) for f in doc.get("faults", [])],
        tick_seconds=float(doc.get("tick_seconds", 1.0)),
        uav_speed_mps=float(doc.get("uav_speed_mps", 5.0)),
        turn_drain_pct_per_90deg=float(doc.get("turn_drain_pct_per_90deg", 0.05)),
        swap_service_ticks=int(doc.get("swap_service_ticks", 60)),
        gs_redispatch=bool(doc.get("gs_redispatch", True)),
        silence_ticks=int(doc.get("silence_ticks", 10)),
        tick_limit=int(doc.get("tick_limit", 200_000)),
        coverage_pitch_m=doc.get("coverage_pitch_m"),
        offload_chunk_records=int(doc.get("offload_chunk_records", 20)),
        sensor_jitter=float(doc.get("sensor_jitter", 0.02)),
        default_class=ClassLabel.from_name(doc.get("default_class", "soil")),
        heatmap_cell_m=float(heatmap.get("cell_size_m", 10.0)),
        classifier_name=heatmap.get("classifier", "oracle"),
        classifier_epsilon=float(heatmap.get("epsilon", 0.0)),
        classifier_seed=int(heatmap.get("classifier_seed", 0)),
        name=doc.get("name", "scenario"),
    )


def load_scenario_file(path: str | Path) -> Scenario:
    with open(path) as fh:
        return load_scenario(json.load(fh))


# --- builders used by tests, the demo CLI and the gateway -------------------


def local_rect_feature(
    origin: GeoPoint, x0: float, y0: float, x1: float, y1: float, properties: dict
) -> dict:
    """GeoJSON polygon feature for a local-frame rectangle."""
    corners = [
        LocalPoint(x0, y0),
        LocalPoint(x1, y0),
        LocalPoint(x1, y1),
        LocalPoint(x0, y1),
        LocalPoint(x0, y0),
    ]
    ring = []
    for p in corners:
        geo = unproject(origin, p)
        ring.append([geo.lon, geo.lat])
    return {
        "type": "Feature",
        "properties": properties,
        "geometry": {"type": "Polygon", "coordinates": [ring]},
    }


DEFAULT_ORIGIN = GeoPoint(lat=9.0302, lon=38.7468)


def square_field(
    size_m: float,
    origin: GeoPoint = DEFAULT_ORIGIN,
    nofly: list[tuple[float, float, float, float]] = (),
    truth: list[tuple[str, tuple[float, float, float, float]]] = (),
    priorities: list[tuple[tuple[float, float, float, float], float, int]] = (),
) -> dict:
    features = [local_rect_feature(origin, 0, 0, size_m, size_m, {"role": "roi"})]
    for box in nofly:
        features.append(local_rect_feature(origin, *box, {"role": "nofly"}))
    for cls, box in truth:
        features.append(local_rect_feature(origin, *box, {"role": "truth", "class": cls}))
    for box, spacing, rank in priorities:
        features.append(
            local_rect_feature(origin, *box, {"role": "priority", "spacing": spacing, "rank": rank})
        )
    return {"type": "FeatureCollection", "features": features}


def demo_scenario(
    size_m: float = 60.0,
    spacing_m: float = 6.0,
    uavs: int = 2,
    seed: int = 42,
    battery_pct: float = 100.0,
    drain_pct_per_m: float = 0.05,
    **overrides,
) -> dict:
    """Small self-contained scenario document: square field with a weed patch,
    one combined swap/offload station at the southwest corner."""
    origin = DEFAULT_ORIGIN
    doc = {
        "name": f"demo-{int(size_m)}m",
        "seed": seed,
        "origin": {"lat": origin.lat, "lon": origin.lon},
        "field": square_field(
            size_m,
            origin,
            truth=[("broadleaf_weed", (size_m * 0.55, size_m * 0.2, size_m * 0.9, size_m * 0.6))],
        ),
        "stations": [{"kind": "combined", "position": {"x": -5.0, "y": -5.0}}],
        "fleet": [
            {
                "uav_id": i + 1,
                "start": {"x": -5.0, "y": -5.0},
                "battery_pct": battery_pct,
                "drain_pct_per_m": drain_pct_per_m,
            }
            for i in range(uavs)
        ],
        "sweep": {"spacing_m": spacing_m, "angle_deg": 0.0},
        "heatmap": {"cell_size_m": spacing_m, "classifier": "oracle"},
        "swap_service_ticks": 5,
        "silence_ticks": 8,
    }
    doc.update(overrides)
    return doc
