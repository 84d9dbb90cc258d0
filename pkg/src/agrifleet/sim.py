"""Deterministic tick-stepped fleet simulator.

Binds the planner, allocator, agents, channels, battery physics, swap/offload
stations and fault injection into reproducible runs: identical scenario and
seed give byte-identical reports and traces. The engine also audits waypoint
ownership every tick — each unvisited plan waypoint must be owned by exactly
one party (an agent's segment or cache, an in-flight transfer or upload, or
the ground station's pool) at all times.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .agent import (
    AgentConfig,
    BeginOffload,
    Capture,
    GoTo,
    GoToBss,
    Land,
    Mode,
    NotifyGsAction,
    RespondTransferAction,
    SendTransferRequestAction,
    SwapBattery,
    TickInput,
    UavAgent,
    Waypoint,
    geotag,
)
from .allocator import BatteryModel, segment_mission
from .coverage import coverage_fraction
from .fielddata import (
    GridSpec,
    HeatmapGrid,
    RecordStore,
    build_heatmap,
    make_classifier,
    sample_spectrum,
)
from .geo import LocalPoint, dist, unproject
from .link import Channel, Endpoint, OffloadServer, OffloadSession, SendStatus
from .planner import apply_priorities, heading_change_deg
from .protocol import (
    MissionUpload,
    MsgType,
    NotifyGs,
    OffloadReceipt,
    Telemetry,
    TransferAccept,
    TransferReject,
    TransferRequest,
    WireWaypoint,
    encode,
)
from .scenario import FaultEvent, Scenario

import random

GS_SYS = 200
SERVER_SYS = 201
TURN_COUNT_THRESHOLD_DEG = 10.0


class SimError(RuntimeError):
    pass


class TraceMismatch(SimError):
    pass


class TruncatedTrace(SimError):
    pass


def drain(
    level_pct: float,
    drain_pct_per_m: float,
    distance_m: float,
    heading_change_deg_value: float = 0.0,
    turn_drain_pct_per_90deg: float = 0.05,
) -> float:
    """Battery level after flying ``distance_m`` with an optional heading
    change: linear distance drain plus a per-turn surcharge, floored at 0."""
    if distance_m < 0 or heading_change_deg_value < 0:
        raise ValueError("distance and heading change must be non-negative")
    cost = drain_pct_per_m * distance_m + turn_drain_pct_per_90deg * (
        heading_change_deg_value / 90.0
    )
    return max(0.0, level_pct - cost)


@dataclass
class _Phys:
    level: float
    true_drain: float
    heading: Optional[tuple[float, float]] = None
    leg_start: Optional[LocalPoint] = None
    target: Optional[LocalPoint] = None
    drained: float = 0.0
    swap_credit: float = 0.0
    fault_drop: float = 0.0
    distance: float = 0.0
    turns: int = 0


@dataclass
class SimReport:
    scenario_name: str
    seed: int
    ticks: int
    coverage_pct: float
    energy_consumed_pct: float
    waypoints_planned: int
    waypoints_visited: int
    stranded: list[int]
    swaps: int
    transfers_requested: int
    transfers_accepted: int
    per_uav: dict[int, dict]
    audit_violations: list[str]
    energy_balance_error: float
    records_offloaded: int
    tick_limit_exceeded: bool
    aborted_at: Optional[int] = None

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario_name,
            "seed": self.seed,
            "ticks": self.ticks,
            "coverage_pct": self.coverage_pct,
            "energy_consumed_pct": self.energy_consumed_pct,
            "waypoints": {
                "planned": self.waypoints_planned,
                "visited": self.waypoints_visited,
                "stranded": self.stranded,
            },
            "swaps": self.swaps,
            "transfers": {
                "requested": self.transfers_requested,
                "accepted": self.transfers_accepted,
            },
            "per_uav": {str(k): v for k, v in sorted(self.per_uav.items())},
            "audit_violations": self.audit_violations,
            "energy_balance_error": self.energy_balance_error,
            "records_offloaded": self.records_offloaded,
            "tick_limit_exceeded": self.tick_limit_exceeded,
            "aborted_at": self.aborted_at,
        }


class GroundStation:
    """Centralized planner-side bookkeeping: initial uploads, responsibility
    tracking from notifications and telemetry, silence detection and
    re-dispatch of stranded waypoint tails."""

    def __init__(self, endpoint: Endpoint, redispatch: bool, silence_ticks: int):
        self.endpoint = endpoint
        self.redispatch = redispatch
        self.silence_ticks = silence_ticks
        self.responsibility: dict[int, list[WireWaypoint]] = {}
        self.pool: list[WireWaypoint] = []
        self.unreachable: list[WireWaypoint] = []
        self.pending_uploads: dict[int, tuple[int, int, tuple[WireWaypoint, ...]]] = {}
        self.last_heard: dict[int, int] = {}
        self.last_pos: dict[int, tuple[float, float]] = {}
        self.last_mode: dict[int, str] = {}
        self.stranded_marked: dict[int, list[WireWaypoint]] = {}
        self._mission_seq = 0
        self._initial: list[tuple[int, tuple[WireWaypoint, ...]]] = []

    def assign_initial(
        self, segments: list[tuple[int, tuple[WireWaypoint, ...]]], residual: list[WireWaypoint]
    ) -> None:
        self._initial = list(segments)
        self.pool = list(residual)

    def _upload(self, uav_id: int, items: tuple[WireWaypoint, ...], tick: int) -> int:
        self._mission_seq += 1
        seq = self._mission_seq
        msg = MissionUpload(uav_id=uav_id, mission_seq=seq, items=items)
        token = self.endpoint.send_reliable(msg, uav_id, tick)
        self.pending_uploads[token] = (uav_id, seq, items)
        return seq

    @staticmethod
    def _subtract(target: list[WireWaypoint], items: Iterable[WireWaypoint]) -> None:
        for item in items:
            wire = tuple(item)
            if wire in target:
                target.remove(wire)

    def step(self, tick: int, inbound, results, trace) -> None:
        if self._initial:
            for uav_id, items in self._initial:
                seq = self._upload(uav_id, items, tick)
                trace(
                    {
                        "tick": tick,
                        "kind": "transfer",
                        "phase": "upload",
                        "to": uav_id,
                        "mission": seq,
                        "count": len(items),
                    }
                )
            self._initial = []
        for token, status, _attempts in results:
            if token in self.pending_uploads and status is SendStatus.FAILED:
                uav_id, seq, items = self.pending_uploads.pop(token)
                self.pool = list(items) + self.pool
                trace(
                    {
                        "tick": tick,
                        "kind": "transfer",
                        "phase": "upload_failed",
                        "to": uav_id,
                        "mission": seq,
                    }
                )
        for msg_in in inbound:
            src, message = msg_in.src, msg_in.message
            if isinstance(message, Telemetry):
                self._on_telemetry(src, message, tick, trace)
            elif isinstance(message, NotifyGs):
                self._on_notify(src, message, tick, trace)
        if self.redispatch:
            self._check_silence(tick, trace)
            self._dispatch_pool(tick, trace)

    def _on_telemetry(self, src: int, message: Telemetry, tick: int, trace) -> None:
        self.last_heard[src] = tick
        self.last_pos[src] = (message.lat, message.lon)
        self.last_mode[src] = message.mode
        if src in self.stranded_marked:
            items = self.stranded_marked.pop(src)
            if all(tuple(w) in self.pool for w in items):
                self._subtract(self.pool, items)
                self.responsibility[src] = [w for w in items if w[0] is not None]
                trace({"tick": tick, "kind": "transfer", "phase": "unstrand", "uav": src})
        resp = self.responsibility.get(src)
        if resp and message.last_visited >= 0:
            indices = [w[0] for w in resp]
            if message.last_visited in indices:
                del resp[: indices.index(message.last_visited) + 1]

    def _on_notify(self, src: int, message: NotifyGs, tick: int, trace) -> None:
        detail = message.detail
        if message.event == "upload_loaded":
            for token, (uav_id, seq, items) in list(self.pending_uploads.items()):
                if uav_id == src and seq == detail.get("mission"):
                    self.responsibility.setdefault(src, []).extend(tuple(w) for w in items)
                    del self.pending_uploads[token]
        elif message.event == "upload_rejected":
            for token, (uav_id, seq, items) in list(self.pending_uploads.items()):
                if uav_id == src and seq == detail.get("mission"):
                    self.pool = list(items) + self.pool
                    del self.pending_uploads[token]
        elif message.event == "low_battery":
            self.responsibility[src] = [tuple(w) for w in detail.get("remaining", [])]
        elif message.event == "transfer_taken":
            items = [tuple(w) for w in detail.get("waypoints", [])]
            self.responsibility.setdefault(src, []).extend(items)
            origin_uav = detail.get("from")
            if origin_uav in self.responsibility:
                self._subtract(self.responsibility[origin_uav], items)
        elif message.event == "mission_done":
            self.responsibility[src] = []
        elif message.event == "unreachable":
            items = [tuple(w) for w in detail.get("waypoints", [])]
            self.unreachable.extend(items)
            if src in self.responsibility:
                self._subtract(self.responsibility[src], items)
            trace({"tick": tick, "kind": "transfer", "phase": "unreachable", "uav": src, "count": len(items)})

    def _check_silence(self, tick: int, trace) -> None:
        for uav_id in sorted(self.responsibility):
            items = self.responsibility[uav_id]
            if not items or uav_id in self.stranded_marked:
                continue
            heard = self.last_heard.get(uav_id)
            if heard is None or tick - heard <= self.silence_ticks:
                continue
            strand: list[WireWaypoint] = []
            if uav_id in self.last_pos:
                lat, lon = self.last_pos[uav_id]
                strand.append((None, lat, lon))  # re-fly from last heard position
            strand.extend(items)
            self.stranded_marked[uav_id] = strand
            self.pool = strand + self.pool
            self.responsibility[uav_id] = []
            trace(
                {
                    "tick": tick,
                    "kind": "transfer",
                    "phase": "strand_detected",
                    "uav": uav_id,
                    "count": len(items),
                }
            )

    def _dispatch_pool(self, tick: int, trace) -> None:
        if not self.pool:
            return
        for uav_id in sorted(self.last_mode):
            if self.last_mode[uav_id] != Mode.IDLE.value:
                continue
            if tick - self.last_heard.get(uav_id, -(10**9)) > self.silence_ticks:
                continue
            if self.responsibility.get(uav_id) or any(
                u == uav_id for u, _, _ in self.pending_uploads.values()
            ):
                continue
            items = tuple(self.pool)
            self.pool = []
            seq = self._upload(uav_id, items, tick)
            trace(
                {
                    "tick": tick,
                    "kind": "transfer",
                    "phase": "redispatch",
                    "to": uav_id,
                    "mission": seq,
                    "count": len(items),
                }
            )
            return


class SimEngine:
    """One scenario run. ``run()`` drives to completion; the gateway instead
    calls ``step_tick()`` under its own pacing and command queue."""

    def __init__(self, scenario: Scenario, audit: bool = True):
        self.scenario = scenario
        self.audit_enabled = audit
        self.tick = 0
        self.trace: list[dict] = []
        self._trace_cursor = 0
        self.done = False
        self.aborted_at: Optional[int] = None
        self.tick_limit_exceeded = False

        raw = scenario.raw
        radio_cfg = scenario.radio
        if "seed" not in raw.get("radio", {}):
            radio_cfg = replace(radio_cfg, seed=scenario.seed + 101)
        wifi_cfg = scenario.wifi
        if "seed" not in raw.get("wifi", {}):
            wifi_cfg = replace(wifi_cfg, seed=scenario.seed + 202)
        self.radio = Channel(radio_cfg)
        self.wifi = Channel(wifi_cfg)
        self._sensor_rng = random.Random(scenario.seed + 303)

        field_spec = scenario.field
        self.plan = apply_priorities(
            field_spec.roi,
            field_spec.priorities,
            scenario.sweep,
            nofly=field_spec.nofly,
            origin=field_spec.origin,
        )
        fleet_models = [
            (u.uav_id, BatteryModel(u.battery_pct, u.drain_pct_per_m, scenario.threshold_pct))
            for u in scenario.fleet
        ]
        self.segmentation = segment_mission(
            self.plan.waypoints, fleet_models, ferry_margin_m=scenario.ferry_margin_m
        )

        self.expected_counts: Counter = Counter()
        for seg in self.segmentation.segments:
            self.expected_counts.update(range(seg.start_index, seg.end_index + 1))
        if self.segmentation.residual:
            self.expected_counts.update(
                range(
                    self.segmentation.residual_start_index,
                    self.segmentation.residual_start_index + len(self.segmentation.residual),
                )
            )

        # endpoints
        self.gs_endpoint = Endpoint(self.radio, GS_SYS)
        self.gs_endpoint.subscribe(MsgType.TELEMETRY)
        self.server_store = RecordStore()
        self.server_endpoint = Endpoint(self.wifi, SERVER_SYS)
        self.offload_server = OffloadServer(self.server_endpoint, self.server_store)

        agent_cfg_base = AgentConfig(
            swap_service_ticks=scenario.swap_service_ticks,
            response_timeout_ticks=max(
                40, 2 * radio_cfg.max_retries * radio_cfg.ack_timeout_ticks + 8
            ),
        )
        self.agents: dict[int, UavAgent] = {}
        self.radio_eps: dict[int, Endpoint] = {}
        self.wifi_eps: dict[int, Endpoint] = {}
        self._phys: dict[int, _Phys] = {}
        swap_stations = [s for s in scenario.stations if s.swaps]
        for spec in scenario.fleet:
            station = min(
                swap_stations, key=lambda s: (dist(spec.start, s.position), s.position.x)
            )
            cfg = replace(agent_cfg_base, bss_offloads=station.offloads)
            agent = UavAgent(
                uav_id=spec.uav_id,
                start=spec.start,
                battery=BatteryModel(
                    spec.battery_pct, spec.drain_pct_per_m, scenario.threshold_pct
                ),
                bss=station.position,
                origin=field_spec.origin,
                config=cfg,
            )
            self.agents[spec.uav_id] = agent
            ep = Endpoint(self.radio, spec.uav_id)
            ep.subscribe(MsgType.TELEMETRY)
            self.radio_eps[spec.uav_id] = ep
            self.wifi_eps[spec.uav_id] = Endpoint(self.wifi, spec.uav_id)
            self._phys[spec.uav_id] = _Phys(
                level=spec.battery_pct, true_drain=spec.true_drain_pct_per_m
            )

        self.gs = GroundStation(
            self.gs_endpoint, scenario.gs_redispatch, scenario.silence_ticks
        )
        origin = field_spec.origin
        initial = [
            (
                seg.uav_id,
                tuple(
                    Waypoint(seg.start_index + i, p).to_wire(origin)
                    for i, p in enumerate(seg.waypoints)
                ),
            )
            for seg in self.segmentation.segments
        ]
        residual_wire = [
            Waypoint(self.segmentation.residual_start_index + i, p).to_wire(origin)
            for i, p in enumerate(self.segmentation.residual)
        ]
        self.gs.assign_initial(initial, residual_wire)

        self.visits: dict[int, list[tuple[int, int]]] = {}
        self.flown_legs: list[tuple[LocalPoint, LocalPoint]] = []
        self.transfer_registry: dict[tuple[int, int], str] = {}
        self._transfer_links: dict[tuple[int, int], int] = {}  # (uav, link token) -> agent token
        self.loaded_missions: dict[int, set[int]] = {u: set() for u in self.agents}
        self._offloads: dict[int, OffloadSession] = {}
        self._offload_token = 0
        self._pending_swaps: list[tuple[int, int, float]] = []  # (ready_tick, uav, level_before)
        self._unreachable_announced: Counter = Counter()
        self._scheduled_faults: list[FaultEvent] = sorted(
            scenario.faults, key=lambda f: (f.at_tick, f.uav_id, f.kind)
        )
        self._external_faults: list[FaultEvent] = []
        self.audit_violations: list[str] = []
        self.swaps = 0
        self.transfers_requested = 0
        self.transfers_accepted = 0

        self._trace(
            {"kind": "header", "version": 1, "scenario": scenario.raw}
        )

    # ------------------------------------------------------------------

    def _trace(self, event: dict) -> None:
        self.trace.append(event)

    def drain_events(self) -> list[dict]:
        events = self.trace[self._trace_cursor :]
        self._trace_cursor = len(self.trace)
        return events

    def add_fault(self, fault: FaultEvent) -> None:
        """External (gateway) fault injection, applied at the next tick
        boundary if its tick is already past."""
        self._external_faults.append(fault)

    # -- fault handling ---------------------------------------------------

    def _apply_fault(self, fault: FaultEvent) -> None:
        uav_id = fault.uav_id
        if uav_id not in self.agents:
            return
        agent = self.agents[uav_id]
        phys = self._phys[uav_id]
        event = {
            "tick": self.tick,
            "kind": "fault",
            "injected": True,
            "uav": uav_id,
            "fault": fault.kind,
        }
        if fault.kind == "battery_drop":
            applied = min(phys.level, fault.pct)
            phys.level -= applied
            phys.fault_drop += applied
            event["pct"] = fault.pct
        elif fault.kind == "comm_blackout":
            until = self.tick + fault.duration_ticks
            self.radio.blackout(uav_id, until)
            self.wifi.blackout(uav_id, until)
            event["duration_ticks"] = fault.duration_ticks
        elif fault.kind == "controller_fail":
            agent.fail()
            self._close_leg(uav_id)
        self._trace(event)

    # -- action execution --------------------------------------------------

    def _agent_event(self, agent: UavAgent, action: str, **extra) -> None:
        state = agent.state
        event = {
            "tick": self.tick,
            "kind": "agent_action",
            "uav": state.uav_id,
            "mode": state.mode.value,
            "battery": round(state.battery.level_pct, 6),
            "action": action,
        }
        event.update(extra)
        self._trace(event)

    def _sensor(self, point: LocalPoint):
        label = self.scenario.default_class
        for cls, poly in self.scenario.field.truth:
            if poly.contains(point):
                label = cls
                break
        red, nir = sample_spectrum(label, self._sensor_rng, self.scenario.sensor_jitter)
        return red, nir, label

    def _execute_actions(self, agent: UavAgent, actions) -> None:
        uav_id = agent.state.uav_id
        ep = self.radio_eps[uav_id]
        origin = self.scenario.field.origin
        for action in actions:
            if isinstance(action, GoTo):
                self._agent_event(
                    agent,
                    "goto",
                    reason=action.reason,
                    target=[action.waypoint.index, action.waypoint.point.x, action.waypoint.point.y],
                )
            elif isinstance(action, Capture):
                record = geotag(
                    uav_id,
                    agent.state.captures,
                    action.waypoint.point,
                    origin,
                    self.tick,
                    self._sensor,
                )
                agent.state.storage.append(record)
                if action.waypoint.index is not None:
                    self.visits.setdefault(action.waypoint.index, []).append((self.tick, uav_id))
                self._agent_event(agent, "capture", waypoint=action.waypoint.index)
            elif isinstance(action, NotifyGsAction):
                token = ep.send_reliable(NotifyGs(action.event, action.detail), GS_SYS, self.tick)
                if action.event == "unreachable":
                    for wire in action.detail.get("waypoints", []):
                        if wire[0] is not None:
                            self._unreachable_announced[wire[0]] += 1
                if action.event != "upload_loaded":
                    self._agent_event(
                        agent,
                        "notify_gs",
                        event=action.event,
                        frame=encode(ep.pending_frame(token)).hex(),
                    )
                else:
                    mission = action.detail.get("mission")
                    if isinstance(mission, int):
                        self.loaded_missions[uav_id].add(mission)
            elif isinstance(action, SendTransferRequestAction):
                msg = TransferRequest(
                    requester=uav_id,
                    token=action.token,
                    items=tuple(w.to_wire(origin) for w in action.waypoints),
                )
                link_token = ep.send_reliable(msg, action.peer, self.tick)
                self._transfer_links[(uav_id, link_token)] = action.token
                self.transfer_registry[(uav_id, action.token)] = "pending"
                self.transfers_requested += 1
                self._trace(
                    {
                        "tick": self.tick,
                        "kind": "transfer",
                        "phase": "requested",
                        "from": uav_id,
                        "to": action.peer,
                        "token": action.token,
                        "count": len(action.waypoints),
                    }
                )
            elif isinstance(action, RespondTransferAction):
                if action.accept:
                    msg = TransferAccept(action.token)
                    self.transfer_registry[(action.peer, action.token)] = "accepted"
                    self.transfers_accepted += 1
                    phase = "accepted"
                else:
                    msg = TransferReject(action.token, action.reason)
                    key = (action.peer, action.token)
                    if self.transfer_registry.get(key) != "accepted":
                        self.transfer_registry[key] = "rejected"
                    phase = "rejected"
                ep.send_reliable(msg, action.peer, self.tick)
                self._trace(
                    {
                        "tick": self.tick,
                        "kind": "transfer",
                        "phase": phase,
                        "from": action.peer,
                        "to": uav_id,
                        "token": action.token,
                        "reason": action.reason,
                    }
                )
            elif isinstance(action, GoToBss):
                self._agent_event(agent, "goto_bss", reason=action.reason)
            elif isinstance(action, Land):
                self._agent_event(agent, "land")
            elif isinstance(action, SwapBattery):
                self._pending_swaps.append(
                    (action.ready_tick, uav_id, self._phys[uav_id].level)
                )
                self._agent_event(agent, "swap_begin", ready_tick=action.ready_tick)
            elif isinstance(action, BeginOffload):
                self._offload_token += 1
                records = [r.to_json() for r in agent.state.storage]
                self._offloads[uav_id] = OffloadSession(
                    self.wifi_eps[uav_id],
                    SERVER_SYS,
                    self._offload_token,
                    records,
                    chunk_records=self.scenario.offload_chunk_records,
                )
                self._trace(
                    {
                        "tick": self.tick,
                        "kind": "offload",
                        "phase": "begin",
                        "uav": uav_id,
                        "records": len(records),
                    }
                )

    # -- physics ------------------------------------------------------------

    def _close_leg(self, uav_id: int) -> None:
        phys = self._phys[uav_id]
        if phys.leg_start is not None:
            pos = self.agents[uav_id].state.position
            if dist(phys.leg_start, pos) > 1e-9:
                self.flown_legs.append((phys.leg_start, pos))
            phys.leg_start = None
        phys.target = None

    def _move(self, uav_id: int) -> None:
        agent = self.agents[uav_id]
        phys = self._phys[uav_id]
        target = agent.motion_target()
        state = agent.state
        if target is None:
            self._close_leg(uav_id)
            return
        if phys.target != target:
            self._close_leg(uav_id)
            leg_vec_len = dist(state.position, target)
            if leg_vec_len > 1e-9:
                new_heading = (
                    (target.x - state.position.x) / leg_vec_len,
                    (target.y - state.position.y) / leg_vec_len,
                )
                if phys.heading is not None:
                    old = phys.heading
                    cross = old[0] * new_heading[1] - old[1] * new_heading[0]
                    dot = old[0] * new_heading[0] + old[1] * new_heading[1]
                    change = abs(math.degrees(math.atan2(cross, dot)))
                    if change > TURN_COUNT_THRESHOLD_DEG:
                        phys.turns += 1
                    penalty = self.scenario.turn_drain_pct_per_90deg * (change / 90.0)
                    applied = min(phys.level, penalty)
                    phys.level -= applied
                    phys.drained += applied
                phys.heading = new_heading
            phys.target = target
            phys.leg_start = state.position
        remaining = dist(state.position, target)
        if remaining <= 1e-12:
            return
        step_len = self.scenario.uav_speed_mps * self.scenario.tick_seconds
        if remaining <= step_len:
            new_pos = target
            moved = remaining
        else:
            f = step_len / remaining
            new_pos = LocalPoint(
                state.position.x + f * (target.x - state.position.x),
                state.position.y + f * (target.y - state.position.y),
            )
            moved = step_len
        state.position = new_pos
        phys.distance += moved
        cost = phys.true_drain * moved
        applied = min(phys.level, cost)
        phys.level -= applied
        phys.drained += applied
        if new_pos == target:
            if phys.leg_start is not None and dist(phys.leg_start, new_pos) > 1e-9:
                self.flown_legs.append((phys.leg_start, new_pos))
            phys.leg_start = None
            phys.target = None
        if phys.level <= 0.0 and state.mode in (Mode.FLYING, Mode.RETURNING, Mode.TRANSFERRING):
            agent.fail()
            self._close_leg(uav_id)
            self._trace(
                {"tick": self.tick, "kind": "fault", "uav": uav_id, "fault": "battery_dead"}
            )

    # -- audit ---------------------------------------------------------------

    def _audit(self) -> None:
        counts: Counter = Counter()
        for index, visits in self.visits.items():
            counts[index] += len(visits)
        for uav_id in sorted(self.agents):
            state = self.agents[uav_id].state
            owned = Counter(
                w.index for w in state.owned_waypoints() if w.index is not None
            )
            pending = state.pending_transfer
            if (
                pending is not None
                and self.transfer_registry.get((uav_id, pending.token)) == "accepted"
            ):
                owned.subtract(
                    Counter(w.index for w in pending.waypoints if w.index is not None)
                )
            counts.update(+owned)
        counts.update(w[0] for w in self.gs.pool if w[0] is not None)
        # a handed-back waypoint is owned by the station from the moment the
        # agent announces it, even while the notify frame is still in flight
        gs_unreachable = Counter(w[0] for w in self.gs.unreachable if w[0] is not None)
        for index in set(gs_unreachable) | set(self._unreachable_announced):
            counts[index] += max(gs_unreachable[index], self._unreachable_announced[index])
        for uav_id, seq, items in self.gs.pending_uploads.values():
            if seq not in self.loaded_missions.get(uav_id, set()):
                counts.update(w[0] for w in items if w[0] is not None)
        for index in sorted(self.expected_counts):
            expected = self.expected_counts[index]
            got = counts.get(index, 0)
            if got != expected:
                message = f"tick {self.tick}: waypoint {index} accounted {got}x, expected {expected}x"
                if message not in self.audit_violations:
                    self.audit_violations.append(message)

    # -- main loop -------------------------------------------------------------

    def step_tick(self) -> None:
        if self.done:
            return
        tick = self.tick

        # external then scheduled faults at this tick
        for fault in self._external_faults:
            at = max(fault.at_tick, tick)
            self._scheduled_faults.append(replace(fault, at_tick=at))
        self._external_faults = []
        self._scheduled_faults.sort(key=lambda f: (f.at_tick, f.uav_id, f.kind))
        due = [f for f in self._scheduled_faults if f.at_tick <= tick]
        self._scheduled_faults = [f for f in self._scheduled_faults if f.at_tick > tick]
        for fault in due:
            self._apply_fault(fault)

        # swap completions
        ready = [s for s in self._pending_swaps if s[0] <= tick]
        self._pending_swaps = [s for s in self._pending_swaps if s[0] > tick]
        for _ready_tick, uav_id, level_before in sorted(ready, key=lambda s: s[1]):
            if self.agents[uav_id].state.mode is Mode.FAILED:
                continue
            phys = self._phys[uav_id]
            phys.swap_credit += 100.0 - phys.level
            phys.level = 100.0
            self.swaps += 1
            self._trace(
                {
                    "tick": tick,
                    "kind": "swap",
                    "uav": uav_id,
                    "level_before": round(level_before, 6),
                }
            )

        self.radio.deliver_due(tick)
        self.wifi.deliver_due(tick)

        # ground station
        gs_inbound = self.gs_endpoint.poll(tick)
        gs_results = self.gs_endpoint.take_results()
        self.gs.step(tick, gs_inbound, gs_results, self._trace)
        # once the station adopts a dead UAV's tail, release the airframe's copy
        for uav_id in sorted(self.gs.stranded_marked):
            agent = self.agents.get(uav_id)
            if agent is not None and agent.state.mode is Mode.FAILED:
                state = agent.state
                if state.cached or state.segment or state.pending_transfer:
                    state.cached = []
                    state.segment = None
                    state.next_index = 0
                    state.pending_transfer = None

        # agents
        for uav_id in sorted(self.agents):
            agent = self.agents[uav_id]
            ep = self.radio_eps[uav_id]
            inbound = ep.poll(tick)
            failures = [
                self._transfer_links[(uav_id, token)]
                for token, status, _ in ep.take_results()
                if status is SendStatus.FAILED and (uav_id, token) in self._transfer_links
            ]
            for agent_token in failures:
                self.transfer_registry[(uav_id, agent_token)] = "failed"
            tick_input = TickInput(
                tick=tick,
                battery_pct=self._phys[uav_id].level,
                messages=[(m.src, m.message) for m in inbound],
                transfer_failures=failures,
            )
            actions = agent.step(tick_input)
            if actions:
                self._execute_actions(agent, actions)

        # offload exchange (one round per tick)
        for uav_id in sorted(self._offloads):
            self._offloads[uav_id].step(tick)
        if self._offloads:
            self.wifi.deliver_due(tick)
        self.offload_server.step(tick)
        self.wifi.deliver_due(tick)
        for uav_id in sorted(self._offloads):
            session = self._offloads[uav_id]
            for inbound in self.wifi_eps[uav_id].poll(tick):
                if isinstance(inbound.message, OffloadReceipt):
                    session.handle(inbound.message)
            if session.done:
                ids = session.receipt.accepted_ids
                self.agents[uav_id].offload_complete(ids)
                self._trace(
                    {
                        "tick": tick,
                        "kind": "offload",
                        "phase": "receipt",
                        "uav": uav_id,
                        "accepted": len(ids),
                    }
                )
                del self._offloads[uav_id]

        # reliable retransmissions
        self.gs_endpoint.step(tick)
        for uav_id in sorted(self.radio_eps):
            self.radio_eps[uav_id].step(tick)

        # physics
        for uav_id in sorted(self.agents):
            if self.agents[uav_id].state.mode is not Mode.FAILED:
                self._move(uav_id)

        # telemetry
        for uav_id in sorted(self.agents):
            agent = self.agents[uav_id]
            if agent.state.mode is Mode.FAILED:
                continue
            state = agent.state
            geo = unproject(self.scenario.field.origin, state.position)
            frame = self.radio_eps[uav_id].publish(
                Telemetry(
                    lat=geo.lat,
                    lon=geo.lon,
                    battery_pct=round(self._phys[uav_id].level, 6),
                    mode=state.mode.value,
                    tick=tick,
                    last_visited=state.last_visited,
                ),
                tick,
            )
            self._trace(
                {
                    "tick": tick,
                    "kind": "telemetry",
                    "uav": uav_id,
                    "frame": encode(frame).hex(),
                }
            )

        if self.audit_enabled:
            self._audit()

        self.tick += 1
        if self._finished():
            self.done = True
            self._trace({"tick": self.tick, "kind": "done", "summary": self._summary()})
        elif self.tick >= self.scenario.tick_limit:
            self.done = True
            self.tick_limit_exceeded = True
            self._trace({"tick": self.tick, "kind": "done", "summary": self._summary()})

    def abort(self) -> None:
        if not self.done:
            self.done = True
            self.aborted_at = self.tick
            self._trace({"tick": self.tick, "kind": "aborted"})

    def _finished(self) -> bool:
        if self.tick < 2:
            return False
        live = [a for a in self.agents.values() if a.state.mode is not Mode.FAILED]
        for agent in live:
            if agent.state.mode is not Mode.IDLE:
                return False
            if agent.state.owned_waypoints() or agent.state.pending_transfer:
                return False
        if self.gs.pending_uploads or self.gs._initial or self._offloads or self._pending_swaps:
            return False
        if self.gs.pool and self.gs.redispatch and live:
            return False
        return True

    def _summary(self) -> dict:
        return {
            "visited": sum(1 for v in self.visits.values() if v),
            "planned": len(self.plan.waypoints),
            "swaps": self.swaps,
            "transfers_accepted": self.transfers_accepted,
        }

    def run(self) -> SimReport:
        while not self.done:
            self.step_tick()
        return self.build_report()

    # -- reporting -----------------------------------------------------------

    def stranded_indices(self) -> list[int]:
        visited = set(self.visits)
        return sorted(set(range(len(self.plan.waypoints))) - visited)

    def build_report(self) -> SimReport:
        scenario = self.scenario
        pitch = scenario.coverage_pitch_m or scenario.sweep.spacing_m / 4.0
        coverage, _misses = coverage_fraction(
            scenario.field.roi,
            scenario.field.nofly,
            self.flown_legs,
            radius_m=scenario.sweep.spacing_m / 2.0,
            pitch_m=pitch,
        )
        per_uav = {}
        energy_total = 0.0
        balance_error = 0.0
        for spec in scenario.fleet:
            uav_id = spec.uav_id
            phys = self._phys[uav_id]
            state = self.agents[uav_id].state
            energy_total += phys.drained
            expected_level = (
                spec.battery_pct + phys.swap_credit - phys.drained - phys.fault_drop
            )
            balance_error = max(balance_error, abs(expected_level - phys.level))
            per_uav[uav_id] = {
                "distance_m": round(phys.distance, 6),
                "turns": phys.turns,
                "swaps": sum(
                    1 for e in self.trace if e.get("kind") == "swap" and e.get("uav") == uav_id
                ),
                "captures": state.captures,
                "final_battery": round(phys.level, 6),
                "final_mode": state.mode.value,
                "flight_log_entries": len(state.flight_log),
                "calibrated_drain": round(state.battery.drain_pct_per_m, 9),
            }
        stranded = self.stranded_indices() if (self.done and not self.aborted_at) else []
        return SimReport(
            scenario_name=scenario.name,
            seed=scenario.seed,
            ticks=self.tick,
            coverage_pct=round(coverage * 100.0, 4),
            energy_consumed_pct=round(energy_total, 6),
            waypoints_planned=len(self.plan.waypoints),
            waypoints_visited=len(self.visits),
            stranded=stranded,
            swaps=self.swaps,
            transfers_requested=self.transfers_requested,
            transfers_accepted=self.transfers_accepted,
            per_uav=per_uav,
            audit_violations=list(self.audit_violations),
            energy_balance_error=round(balance_error, 9),
            records_offloaded=len(self.server_store),
            tick_limit_exceeded=self.tick_limit_exceeded,
            aborted_at=self.aborted_at,
        )

    def build_heatmap(self) -> HeatmapGrid:
        scenario = self.scenario
        minx, miny, maxx, maxy = scenario.field.roi.bounds()
        cell = scenario.heatmap_cell_m
        spec = GridSpec(
            origin=unproject(scenario.field.origin, LocalPoint(minx, miny)),
            cell_size_m=cell,
            width=max(1, math.ceil((maxx - minx) / cell)),
            height=max(1, math.ceil((maxy - miny) / cell)),
        )
        classifier = make_classifier(
            scenario.classifier_name,
            epsilon=scenario.classifier_epsilon,
            seed=scenario.classifier_seed or scenario.seed + 404,
        )
        return build_heatmap(self.server_store.records, spec, classifier)


def trace_lines(events: Iterable[dict]) -> list[str]:
    return [json.dumps(e, sort_keys=True, separators=(",", ":")) for e in events]


def report_json_bytes(report: SimReport) -> bytes:
    return (
        json.dumps(report.to_json(), sort_keys=True, separators=(",", ":"), indent=None) + "\n"
    ).encode()


def run_scenario(scenario: Scenario) -> tuple[SimReport, list[str], SimEngine]:
    engine = SimEngine(scenario)
    report = engine.run()
    return report, trace_lines(engine.trace), engine


def build_run_artifacts(out_dir, report: SimReport, lines: list[str], engine: SimEngine) -> None:
    """Write the canonical run outputs: report.json, trace.jsonl,
    heatmap.json and records.jsonl."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_bytes(report_json_bytes(report))
    with (out / "trace.jsonl").open("w") as fh:
        for line in lines:
            fh.write(line + "\n")
    heatmap = engine.build_heatmap()
    (out / "heatmap.json").write_text(
        json.dumps(heatmap.to_json(), sort_keys=True, separators=(",", ":")) + "\n"
    )
    with (out / "records.jsonl").open("w") as fh:
        for record in engine.server_store.records:
            fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")


def replay(lines: list[str]) -> tuple[SimReport, list[str]]:
    """Re-run a recorded trace and verify the engine reproduces it exactly.

    The header embeds the scenario; injected faults are re-applied from the
    trace itself so live-steered runs replay identically. Raises
    TruncatedTrace for traces without a terminal event and TraceMismatch on
    the first divergent event.
    """
    from .scenario import load_scenario

    if not lines:
        raise TruncatedTrace("empty trace")
    header = json.loads(lines[0])
    if header.get("kind") != "header" or "scenario" not in header:
        raise TraceMismatch("first trace line must be the scenario header")
    events = [json.loads(line) for line in lines[1:]]
    if not events or events[-1].get("kind") not in ("done", "aborted"):
        raise TruncatedTrace("trace has no terminal event")
    scenario = load_scenario(header["scenario"])
    engine = SimEngine(scenario)
    engine._scheduled_faults = []  # re-applied from the trace below
    for event in events:
        if event.get("kind") == "fault" and event.get("injected"):
            engine.add_fault(
                FaultEvent(
                    at_tick=event["tick"],
                    uav_id=event["uav"],
                    kind=event["fault"],
                    pct=event.get("pct", 0.0),
                    duration_ticks=event.get("duration_ticks", 0),
                )
            )
    engine.drain_events()  # skip replayed header
    position = 1
    aborted = events[-1].get("kind") == "aborted"
    end_tick = events[-1].get("tick")
    while not engine.done:
        if aborted and engine.tick >= end_tick:
            engine.abort()
        else:
            engine.step_tick()
        for produced in engine.drain_events():
            if position >= len(lines):
                raise TraceMismatch(f"replay produced extra event at line {position}")
            expected = lines[position]
            got = json.dumps(produced, sort_keys=True, separators=(",", ":"))
            if got != expected:
                raise TraceMismatch(
                    f"line {position}: replay produced {got[:200]} expected {expected[:200]}"
                )
            position += 1
    if position != len(lines):
        raise TraceMismatch(f"trace has {len(lines) - position} events the replay never produced")
    return engine.build_report(), trace_lines(engine.trace)
