"""Energy-aware mission segmentation.

Splits an ordered waypoint plan into contiguous slices each UAV can fly on
its current charge: the flyable distance is (level - threshold) / drain rate,
and a slice is assigned only while its internal length stays strictly under
that budget. Drain rate is recalibrated from flight history so aging packs
get shorter slices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .geo import LocalPoint, dist

MIN_THRESHOLD_PCT = 10.0


class AllocationError(ValueError):
    pass


class InvalidLog(AllocationError):
    pass


@dataclass
class BatteryModel:
    """Charge state plus the linear drain model used for range estimates."""

    level_pct: float
    drain_pct_per_m: float
    threshold_pct: float = MIN_THRESHOLD_PCT

    def __post_init__(self) -> None:
        if not 0.0 <= self.level_pct <= 100.0:
            raise AllocationError(f"battery level out of range: {self.level_pct}")
        if self.drain_pct_per_m <= 0.0:
            raise AllocationError("drain rate must be positive")
        if self.threshold_pct < MIN_THRESHOLD_PCT:
            raise AllocationError(
                f"threshold below the {MIN_THRESHOLD_PCT:.0f}% floor: {self.threshold_pct}"
            )


@dataclass(frozen=True)
class FlightLogEntry:
    start_pct: float
    end_pct: float
    distance_m: float
    mission_id: str = ""

    def __post_init__(self) -> None:
        if self.distance_m <= 0.0:
            raise InvalidLog(f"flight distance must be positive: {self.distance_m}")
        if not self.start_pct > self.end_pct >= 0.0:
            raise InvalidLog(
                f"battery must decrease over a flight: {self.start_pct} -> {self.end_pct}"
            )

    @property
    def drain_pct_per_m(self) -> float:
        return (self.start_pct - self.end_pct) / self.distance_m


@dataclass(frozen=True)
class MissionSegment:
    """Contiguous waypoint slice plan[start_index ... end_index] for one UAV."""

    uav_id: int
    waypoints: tuple[LocalPoint, ...]
    start_index: int
    end_index: int
    internal_length_m: float


@dataclass
class SegmentationResult:
    segments: list[MissionSegment] = field(default_factory=list)
    residual: tuple[LocalPoint, ...] = ()  # unassigned tail, shares its first waypoint
    residual_start_index: int = -1
    skipped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def fully_assigned(self) -> bool:
        return not self.residual


def reachable_distance(battery: BatteryModel) -> float:
    """Meters flyable before the charge hits the threshold, floored at zero."""
    return max(0.0, (battery.level_pct - battery.threshold_pct) / battery.drain_pct_per_m)


def update_drain_const(history: Sequence[FlightLogEntry], alpha: float = 0.5) -> float:
    """Exponential moving average of per-flight drain rates, oldest first.

    alpha weights the newest flight; alpha=1 reduces to the latest flight's
    raw rate.
    """
    if not history:
        raise InvalidLog("flight history is empty")
    if not 0.0 < alpha <= 1.0:
        raise AllocationError(f"alpha must be in (0, 1], got {alpha}")
    ema = history[0].drain_pct_per_m
    for entry in history[1:]:
        ema = alpha * entry.drain_pct_per_m + (1.0 - alpha) * ema
    return ema


def segment_mission(
    waypoints: Sequence[LocalPoint],
    fleet: Sequence[tuple[int, BatteryModel]],
    ferry_margin_m: float = 0.0,
) -> SegmentationResult:
    """Greedy in-order split of the plan across the fleet.

    Each UAV extends its slice while the cumulative internal length stays
    strictly below its flyable distance (minus ``ferry_margin_m``). Segment
    m+1 starts at the last waypoint of segment m so coverage is gap-free.
    UAVs at or below their battery threshold are skipped; any unassigned
    tail is returned as ``residual`` for a later wave, never dropped.
    """
    if len(waypoints) < 2:
        raise AllocationError("plan needs at least 2 waypoints")
    if not fleet:
        raise AllocationError("fleet is empty")

    result = SegmentationResult()
    cursor = 0  # next segment starts here (shared handoff point)
    n = len(waypoints)
    for uav_id, battery in fleet:
        if cursor >= n - 1:
            break
        if battery.level_pct <= battery.threshold_pct:
            result.skipped.append((uav_id, "battery at or below threshold"))
            continue
        budget = reachable_distance(battery) - ferry_margin_m
        length = 0.0
        j = cursor
        while j + 1 < n:
            leg = dist(waypoints[j], waypoints[j + 1])
            if length + leg >= budget:
                break
            length += leg
            j += 1
        if j == cursor:
            continue  # cannot take even one leg on this charge
        result.segments.append(
            MissionSegment(
                uav_id=uav_id,
                waypoints=tuple(waypoints[cursor : j + 1]),
                start_index=cursor,
                end_index=j,
                internal_length_m=length,
            )
        )
        cursor = j
    if cursor < n - 1:
        result.residual = tuple(waypoints[cursor:])
        result.residual_start_index = cursor
    return result


def assign_segments(
    segments: Sequence[MissionSegment], fleet: Sequence[tuple[int, BatteryModel]]
) -> list[tuple[int, int]]:
    """Map segmentation order onto fleet order as (segment_index, uav_id),
    skipping UAVs at or below threshold."""
    eligible = [uav_id for uav_id, bm in fleet if bm.level_pct > bm.threshold_pct]
    return [(i, uav_id) for i, uav_id in zip(range(len(segments)), eligible)]
