"""Pydantic request/response models for the ground-station gateway."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field


class FleetUav(BaseModel):
    uav_id: int = Field(ge=1, le=199)
    battery_pct: float = Field(ge=0, le=100)
    drain_pct_per_m: float = Field(gt=0)


class PrioritySpec(BaseModel):
    polygon: list[list[float]] = Field(min_length=3, description="WGS84 [lon, lat] ring")
    spacing_m: float = Field(gt=0)
    rank: int = Field(ge=1)


class MissionRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    request_id: Optional[str] = None
    field_id: str
    spacing_m: float = Field(gt=0)
    angle_deg: Union[float, Literal["auto"]] = "auto"
    inset_m: float = Field(default=0.0, ge=0)
    threshold_pct: float = Field(default=10.0, ge=10, description="battery floor is 10%")
    fleet: list[FleetUav] = Field(min_length=1)
    priorities: list[PrioritySpec] = Field(default_factory=list)
    use_field_priorities: bool = True


class MissionResponse(BaseModel):
    mission_id: str
    plan: dict
    segments: list[dict]


class FieldResponse(BaseModel):
    field_id: str


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    request_id: Optional[str] = None
    mission_id: str
    seed: int = 0
    playback_rate: float = Field(default=0.0, ge=0, description="ticks per wall second; 0 = unthrottled")
    scenario: dict = Field(default_factory=dict, description="scenario overrides merged into the generated document")


class RunHandle(BaseModel):
    run_id: str
    mission_id: str
    seed: int
    playback_rate: float
    status: Literal["Planned", "Running", "Paused", "Done", "Aborted"]
    tick: int


class FaultRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    request_id: Optional[str] = None
    uav_id: int = Field(ge=1)
    kind: Literal["battery_drop", "comm_blackout", "controller_fail"]
    pct: Optional[float] = Field(default=None, gt=0, le=100)
    duration_ticks: Optional[int] = Field(default=None, ge=1)
    at_tick: Optional[int] = Field(default=None, ge=0)


class ErrorBody(BaseModel):
    error: str
    path: str = ""
