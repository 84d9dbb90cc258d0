"""Boustrophedon coverage planning over field polygons.

Generates back-and-forth sweep paths whose camera footprint (``spacing_m``
wide) covers the region of interest, with per-region spacing overrides for
high-priority areas and an exhaustive search over sweep directions that
minimizes turns, then length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence, Union

from .geo import GeoPoint, LocalPoint, Polygon, clip_line_multi, dist

_EPS = 1e-9
ANGLE_GRID_STEP_DEG = 5.0
DEFAULT_TURN_THRESHOLD_DEG = 10.0


class PlannerError(ValueError):
    pass


class InvalidSpacing(PlannerError):
    pass


class EmptyPlan(PlannerError):
    """No sweep line intersects the target region."""


@dataclass(frozen=True)
class SweepConfig:
    """Sweep parameters: footprint width, direction, optional boundary inset."""

    spacing_m: float
    angle_deg: Union[float, str] = 0.0  # degrees [0, 180) or "auto"
    inset_m: float = 0.0
    turn_threshold_deg: float = DEFAULT_TURN_THRESHOLD_DEG

    def __post_init__(self) -> None:
        if self.spacing_m <= 0:
            raise InvalidSpacing(f"spacing must be positive, got {self.spacing_m}")
        if self.inset_m < 0:
            raise PlannerError("inset must be non-negative")
        if isinstance(self.angle_deg, str) and self.angle_deg != "auto":
            raise PlannerError(f"angle must be a number or 'auto', got {self.angle_deg!r}")


@dataclass(frozen=True)
class PriorityRegion:
    region: Polygon
    spacing_m: float
    rank: int  # 1 = highest

    def __post_init__(self) -> None:
        if self.spacing_m <= 0:
            raise InvalidSpacing("priority spacing must be positive")
        if self.rank < 1:
            raise PlannerError("rank must be a positive integer")


@dataclass(frozen=True)
class PathMetrics:
    length_m: float
    turn_count: int
    turn_degree_sum: float


@dataclass(frozen=True)
class MissionPlan:
    waypoints: tuple[LocalPoint, ...]
    origin: GeoPoint
    spacing_m: float
    angle_deg: float
    metrics: PathMetrics


def count_turns(
    waypoints: Sequence[LocalPoint], turn_threshold_deg: float = DEFAULT_TURN_THRESHOLD_DEG
) -> PathMetrics:
    """Length plus turn statistics: a turn is an interior waypoint whose
    heading change exceeds ``turn_threshold_deg``."""
    if len(waypoints) < 2:
        raise PlannerError("need at least 2 waypoints")
    length = 0.0
    turn_count = 0
    turn_degree_sum = 0.0
    for i in range(1, len(waypoints)):
        length += dist(waypoints[i - 1], waypoints[i])
    for i in range(1, len(waypoints) - 1):
        change = heading_change_deg(waypoints[i - 1], waypoints[i], waypoints[i + 1])
        if change > turn_threshold_deg:
            turn_count += 1
            turn_degree_sum += change
    return PathMetrics(length_m=length, turn_count=turn_count, turn_degree_sum=turn_degree_sum)


def heading_change_deg(a: LocalPoint, b: LocalPoint, c: LocalPoint) -> float:
    """Absolute heading change at b along a->b->c, in [0, 180]."""
    v1x, v1y = b.x - a.x, b.y - a.y
    v2x, v2y = c.x - b.x, c.y - b.y
    n1 = math.hypot(v1x, v1y)
    n2 = math.hypot(v2x, v2y)
    if n1 < _EPS or n2 < _EPS:
        return 0.0
    cross = v1x * v2y - v1y * v2x
    dot = v1x * v2x + v1y * v2y
    return abs(math.degrees(math.atan2(cross, dot)))


def _sweep_offsets(smin: float, smax: float, spacing: float, inset: float) -> list[float]:
    """Line offsets along the sweep axis: first at inset + spacing/2 from the
    low edge, then every ``spacing``; a single midline if none fit."""
    lo = smin + inset
    hi = smax - inset
    if hi - lo <= _EPS:
        return []
    offsets = []
    c = lo + spacing / 2.0
    while c < hi - _EPS:
        offsets.append(c)
        c += spacing
    if not offsets:
        offsets = [(lo + hi) / 2.0]
    return offsets


def _sweep_region(
    extent: Polygon,
    include: Sequence[Polygon],
    exclude: Sequence[Polygon],
    spacing: float,
    angle_deg: float,
    inset: float,
) -> list[LocalPoint]:
    """Boustrophedon waypoints for one region; empty list if no line survives
    clipping."""
    theta = math.radians(angle_deg)
    ux, uy = math.cos(theta), math.sin(theta)  # along-line direction
    nx, ny = -uy, ux  # sweep axis

    s_vals = [v.x * nx + v.y * ny for v in extent.vertices]
    u_vals = [v.x * ux + v.y * uy for v in extent.vertices]
    umin, umax = min(u_vals) - 1.0, max(u_vals) + 1.0

    waypoints: list[LocalPoint] = []
    line_index = 0
    for c in _sweep_offsets(min(s_vals), max(s_vals), spacing, inset):
        a = LocalPoint(ux * umin + nx * c, uy * umin + ny * c)
        b = LocalPoint(ux * umax + nx * c, uy * umax + ny * c)
        segments = clip_line_multi(a, b, include, exclude)
        if inset > 0:
            segments = _shrink_segments(segments, inset)
        if not segments:
            continue
        if line_index % 2 == 1:
            segments = [(q, p) for p, q in reversed(segments)]
        for p, q in segments:
            _append_waypoint(waypoints, p)
            _append_waypoint(waypoints, q)
        line_index += 1
    return waypoints


def _shrink_segments(
    segments: list[tuple[LocalPoint, LocalPoint]], margin: float
) -> list[tuple[LocalPoint, LocalPoint]]:
    out = []
    for p, q in segments:
        length = dist(p, q)
        if length <= 2 * margin + _EPS:
            continue
        t = margin / length
        out.append(
            (
                LocalPoint(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)),
                LocalPoint(q.x + t * (p.x - q.x), q.y + t * (p.y - q.y)),
            )
        )
    return out


def _append_waypoint(waypoints: list[LocalPoint], p: LocalPoint) -> None:
    if waypoints and dist(waypoints[-1], p) < 1e-6:
        return
    waypoints.append(p)


def _resolve_angle(cfg: SweepConfig) -> float:
    if cfg.angle_deg == "auto":
        raise PlannerError("angle 'auto' must go through optimize_direction")
    angle = float(cfg.angle_deg) % 180.0
    return angle


def generate_sweep(
    roi: Polygon,
    nofly: Sequence[Polygon],
    cfg: SweepConfig,
    origin: GeoPoint = GeoPoint(0.0, 0.0),
) -> MissionPlan:
    """Parallel boustrophedon sweep of the ROI minus no-fly zones.

    Lines run along ``cfg.angle_deg`` and advance perpendicular to it, the
    first offset spacing/2 from the ROI's extreme edge along the sweep axis.
    Gaps cut by no-fly zones are crossed along the line's continuation.
    """
    if cfg.angle_deg == "auto":
        return optimize_direction(roi, nofly, cfg, origin)
    angle = _resolve_angle(cfg)
    waypoints = _sweep_region(roi, [roi], list(nofly), cfg.spacing_m, angle, cfg.inset_m)
    if len(waypoints) < 2:
        raise EmptyPlan("no sweep line intersects the region of interest")
    metrics = count_turns(waypoints, cfg.turn_threshold_deg)
    return MissionPlan(
        waypoints=tuple(waypoints),
        origin=origin,
        spacing_m=cfg.spacing_m,
        angle_deg=angle,
        metrics=metrics,
    )


def optimize_direction(
    roi: Polygon,
    nofly: Sequence[Polygon],
    cfg: SweepConfig,
    origin: GeoPoint = GeoPoint(0.0, 0.0),
) -> MissionPlan:
    """Evaluate the sweep over a 5-degree angle grid and keep the plan with
    the fewest turns, then shortest length; ties break toward smaller angle."""
    best: MissionPlan | None = None
    best_key: tuple[float, float, float] | None = None
    angle = 0.0
    while angle < 180.0 - _EPS:
        try:
            plan = generate_sweep(roi, nofly, replace(cfg, angle_deg=angle), origin)
        except EmptyPlan:
            angle += ANGLE_GRID_STEP_DEG
            continue
        key = (plan.metrics.turn_count, plan.metrics.length_m, angle)
        if best_key is None or key < best_key:
            best, best_key = plan, key
        angle += ANGLE_GRID_STEP_DEG
    if best is None:
        raise EmptyPlan("no sweep direction produced a plan")
    return best


def apply_priorities(
    roi: Polygon,
    regions: Sequence[PriorityRegion],
    cfg: SweepConfig,
    nofly: Sequence[Polygon] = (),
    origin: GeoPoint = GeoPoint(0.0, 0.0),
) -> MissionPlan:
    """Sweep priority regions at their own spacing (rank order, rank 1 first),
    then the remainder of the ROI at the base spacing. Overlaps go to the
    higher-priority region so no area is flown twice."""
    if not regions:
        return generate_sweep(roi, nofly, cfg, origin)
    if cfg.angle_deg == "auto":
        angle = optimize_direction(roi, nofly, cfg, origin).angle_deg
    else:
        angle = _resolve_angle(cfg)

    ordered = sorted(enumerate(regions), key=lambda ir: (ir[1].rank, ir[0]))
    waypoints: list[LocalPoint] = []
    winners: list[Polygon] = []  # regions that already own their overlap
    for _, pr in ordered:
        part = _sweep_region(
            pr.region, [roi, pr.region], list(nofly) + winners, pr.spacing_m, angle, cfg.inset_m
        )
        for p in part:
            _append_waypoint(waypoints, p)
        winners.append(pr.region)
    remainder = _sweep_region(
        roi, [roi], list(nofly) + winners, cfg.spacing_m, angle, cfg.inset_m
    )
    for p in remainder:
        _append_waypoint(waypoints, p)
    if len(waypoints) < 2:
        raise EmptyPlan("no sweep line intersects the region of interest")
    metrics = count_turns(waypoints, cfg.turn_threshold_deg)
    return MissionPlan(
        waypoints=tuple(waypoints),
        origin=origin,
        spacing_m=cfg.spacing_m,
        angle_deg=angle,
        metrics=metrics,
    )
