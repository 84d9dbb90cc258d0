"""Per-UAV decision logic.

Each agent runs the battery-swap-station loop: fly cached waypoints before
fresh segment waypoints, check before every leg that the target plus the
return to the swap station fits the flyable distance, and on a failed check
notify the ground station, try to hand the remaining waypoints to the
nearest live peer, and head home. Waypoints survive aborts and battery swaps
in the agent's cache, so nothing is ever dropped.

Agents are deterministic state machines driven solely by ``step``; all
inter-agent interaction flows through parsed link messages in the tick input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence, Union

from .allocator import BatteryModel, FlightLogEntry, reachable_distance, update_drain_const
from .fielddata import ClassLabel, ImageRecord
from .geo import GeoPoint, LocalPoint, dist, project, unproject
from .link import SendStatus
from .protocol import (
    Message,
    MissionUpload,
    Telemetry,
    TransferAccept,
    TransferReject,
    TransferRequest,
    WireWaypoint,
)

ARRIVAL_EPS_M = 1e-6


class AgentError(RuntimeError):
    pass


class InvalidTransition(AgentError):
    pass


class InboxOverflow(AgentError):
    pass


class Mode(str, Enum):
    IDLE = "Idle"
    MISSION_ASSIGNED = "MissionAssigned"
    FLYING = "Flying"
    RETURNING = "ReturningToBSS"
    AT_BSS = "AtBSS"
    TRANSFERRING = "Transferring"
    OFFLOADING = "Offloading"
    FAILED = "Failed"


_ALLOWED_TRANSITIONS: dict[Mode, set[Mode]] = {
    Mode.IDLE: {Mode.MISSION_ASSIGNED, Mode.FLYING, Mode.TRANSFERRING, Mode.RETURNING, Mode.AT_BSS},
    # back to IDLE when an assignment proves unreachable even on a full charge
    Mode.MISSION_ASSIGNED: {Mode.FLYING, Mode.TRANSFERRING, Mode.RETURNING, Mode.AT_BSS, Mode.IDLE},
    Mode.FLYING: {Mode.RETURNING, Mode.TRANSFERRING, Mode.AT_BSS},
    Mode.TRANSFERRING: {Mode.RETURNING, Mode.AT_BSS},
    Mode.RETURNING: {Mode.AT_BSS},
    Mode.AT_BSS: {Mode.OFFLOADING, Mode.FLYING, Mode.TRANSFERRING, Mode.RETURNING, Mode.IDLE},
    Mode.OFFLOADING: {Mode.AT_BSS},
    Mode.FAILED: set(),
}


@dataclass(frozen=True)
class Waypoint:
    """A plan waypoint (indexed) or an unindexed transit anchor inserted when
    a leg is abandoned mid-flight so the resumer re-flies the gap."""

    index: Optional[int]
    point: LocalPoint

    def to_wire(self, origin: GeoPoint) -> WireWaypoint:
        geo = unproject(origin, self.point)
        return (self.index, geo.lat, geo.lon)

    @classmethod
    def from_wire(cls, wire: WireWaypoint, origin: GeoPoint) -> "Waypoint":
        index, lat, lon = wire
        return cls(index, project(origin, GeoPoint(lat, lon)))


@dataclass(frozen=True)
class PeerSnapshot:
    position: LocalPoint
    mode: str
    last_tick: int


@dataclass
class PendingTransfer:
    token: int
    peer: int
    waypoints: tuple[Waypoint, ...]
    deadline_tick: int


# --- declarative actions; the simulator executes them ---


@dataclass(frozen=True)
class GoTo:
    waypoint: Waypoint
    reason: str


@dataclass(frozen=True)
class Capture:
    waypoint: Waypoint


@dataclass(frozen=True)
class NotifyGsAction:
    event: str
    detail: dict


@dataclass(frozen=True)
class SendTransferRequestAction:
    peer: int
    waypoints: tuple[Waypoint, ...]
    token: int


@dataclass(frozen=True)
class RespondTransferAction:
    peer: int
    token: int
    accept: bool
    reason: str = ""


@dataclass(frozen=True)
class GoToBss:
    reason: str


@dataclass(frozen=True)
class Land:
    pass


@dataclass(frozen=True)
class SwapBattery:
    ready_tick: int


@dataclass(frozen=True)
class BeginOffload:
    pass


AgentAction = Union[
    GoTo,
    Capture,
    NotifyGsAction,
    SendTransferRequestAction,
    RespondTransferAction,
    GoToBss,
    Land,
    SwapBattery,
    BeginOffload,
]


@dataclass
class AgentConfig:
    swap_service_ticks: int = 60
    bss_offloads: bool = True
    stale_peer_ticks: int = 5
    response_timeout_ticks: int = 120
    inbox_limit: int = 1024
    full_battery_eps: float = 0.5  # considered freshly swapped above 100 - eps


@dataclass
class TickInput:
    tick: int
    battery_pct: float
    messages: list[tuple[int, Message]] = field(default_factory=list)
    transfer_failures: list[int] = field(default_factory=list)  # agent transfer tokens


@dataclass
class UavState:
    uav_id: int
    position: LocalPoint
    battery: BatteryModel
    bss: LocalPoint
    mode: Mode = Mode.IDLE
    segment: Optional[list[Waypoint]] = None
    next_index: int = 0
    cached: list[Waypoint] = field(default_factory=list)
    storage: list[ImageRecord] = field(default_factory=list)
    flight_log: list[FlightLogEntry] = field(default_factory=list)
    target: Optional[Waypoint] = None
    pending_transfer: Optional[PendingTransfer] = None
    peers: dict[int, PeerSnapshot] = field(default_factory=dict)
    takeoff_pct: float = 100.0
    distance_since_takeoff: float = 0.0
    swap_ready_tick: Optional[int] = None
    last_visited: int = -1
    captures: int = 0
    missions_flown: int = 0

    def segment_remaining(self) -> list[Waypoint]:
        if self.segment is None:
            return []
        return self.segment[self.next_index :]

    def owned_waypoints(self) -> list[Waypoint]:
        """Everything this agent is currently responsible for flying."""
        return list(self.cached) + self.segment_remaining()


def nearest_peer(
    position: LocalPoint,
    peers: dict[int, PeerSnapshot],
    tick: int,
    stale_ticks: int = 5,
) -> Optional[int]:
    """Closest live, non-failed peer by last-heard telemetry; ties break to
    the lower id."""
    candidates = [
        (dist(position, snap.position), uav_id)
        for uav_id, snap in peers.items()
        if snap.mode != Mode.FAILED.value and tick - snap.last_tick <= stale_ticks
    ]
    if not candidates:
        return None
    return min(candidates)[1]


def geotag(
    uav_id: int,
    capture_seq: int,
    point: LocalPoint,
    origin: GeoPoint,
    tick: int,
    sensor: Callable[[LocalPoint], tuple[float, float, ClassLabel]],
) -> ImageRecord:
    """Attach position, time and the synthetic sensor reading to a capture."""
    red, nir, label = sensor(point)
    return ImageRecord(
        record_id=f"{uav_id}-{capture_seq:05d}",
        uav_id=uav_id,
        position=unproject(origin, point),
        tick=tick,
        red=red,
        nir=nir,
        true_class=label,
    )


class UavAgent:
    """State machine wrapper; one instance per UAV, advanced by the engine."""

    def __init__(
        self,
        uav_id: int,
        start: LocalPoint,
        battery: BatteryModel,
        bss: LocalPoint,
        origin: GeoPoint,
        config: Optional[AgentConfig] = None,
    ):
        self.origin = origin
        self.config = config or AgentConfig()
        self.state = UavState(
            uav_id=uav_id, position=start, battery=battery, bss=bss, takeoff_pct=battery.level_pct
        )
        self._last_position = start
        self._next_token = 0

    # -- helpers ---------------------------------------------------------

    def _set_mode(self, new: Mode) -> None:
        state = self.state
        if new is state.mode:
            return
        if new is not Mode.FAILED and new not in _ALLOWED_TRANSITIONS[state.mode]:
            raise InvalidTransition(f"uav {state.uav_id}: {state.mode.value} -> {new.value}")
        state.mode = new

    def fail(self) -> None:
        """Engine-imposed hard failure (controller fault, battery dead)."""
        self.state.mode = Mode.FAILED
        self.state.target = None

    def _peek_next(self) -> Optional[Waypoint]:
        state = self.state
        if state.cached:
            return state.cached[0]
        remaining = state.segment_remaining()
        return remaining[0] if remaining else None

    def _pop_visited(self, waypoint: Waypoint) -> None:
        state = self.state
        if state.cached and state.cached[0] == waypoint:
            state.cached.pop(0)
        elif state.segment and state.next_index < len(state.segment) and state.segment[
            state.next_index
        ] == waypoint:
            state.next_index += 1
        if waypoint.index is not None:
            state.last_visited = waypoint.index

    def _at_bss(self) -> bool:
        return dist(self.state.position, self.state.bss) <= ARRIVAL_EPS_M

    def _leg_reachable(self, waypoint: Waypoint) -> bool:
        state = self.state
        need = dist(state.position, waypoint.point) + dist(waypoint.point, state.bss)
        return need <= reachable_distance(state.battery)

    # -- decision procedures ---------------------------------------------

    def _begin_leg(self, tick: int, actions: list[AgentAction]) -> None:
        state = self.state
        target = self._peek_next()
        if target is None:
            self._go_home(tick, actions, reason="mission complete")
            return
        if state.battery.level_pct > state.battery.threshold_pct and self._leg_reachable(target):
            if state.mode in (Mode.IDLE, Mode.MISSION_ASSIGNED, Mode.AT_BSS):
                state.takeoff_pct = state.battery.level_pct
                state.distance_since_takeoff = 0.0
                state.missions_flown += 1
            state.target = target
            self._set_mode(Mode.FLYING)
            actions.append(GoTo(target, reason="battery above threshold and leg reachable"))
            return
        if self._at_bss() and state.battery.level_pct >= 100.0 - self.config.full_battery_eps:
            # unreachable even on a fresh battery: hand back to the ground station
            abandoned = state.cached + state.segment_remaining()
            state.cached = []
            state.segment = None
            state.next_index = 0
            actions.append(
                NotifyGsAction(
                    "unreachable",
                    {"waypoints": [list(w.to_wire(self.origin)) for w in abandoned]},
                )
            )
            self._after_landing(tick, actions)
            return
        self._abort(tick, actions, reason="next leg not reachable on this charge")

    def _permanently_infeasible(self, waypoint: Waypoint) -> bool:
        """True when even a fresh pack cannot cover station -> waypoint ->
        station; retrying after a swap would loop forever."""
        full = BatteryModel(
            100.0, self.state.battery.drain_pct_per_m, self.state.battery.threshold_pct
        )
        return 2.0 * dist(self.state.bss, waypoint.point) > reachable_distance(full)

    def _abort(self, tick: int, actions: list[AgentAction], reason: str) -> None:
        """Low-battery / unreachable-leg exit: notify, try a transfer to the
        nearest peer, then return to the swap station either way."""
        state = self.state
        remaining: list[Waypoint] = []
        remaining.extend(state.cached)
        remaining.extend(state.segment_remaining())
        out_of_range = [
            w for w in remaining if w.index is not None and self._permanently_infeasible(w)
        ]
        if out_of_range:
            dropped = set(out_of_range)
            kept = [w for w in remaining if w not in dropped]
            # anchors only matter when an indexed waypoint still follows them
            remaining = [
                w
                for i, w in enumerate(kept)
                if w.index is not None or any(n.index is not None for n in kept[i + 1 :])
            ]
            actions.append(
                NotifyGsAction(
                    "unreachable",
                    {"waypoints": [list(w.to_wire(self.origin)) for w in out_of_range]},
                )
            )
        if remaining and dist(state.position, remaining[0].point) > ARRIVAL_EPS_M:
            # resume anchor: whoever picks this up re-flies the abandoned leg
            # from here, so path coverage stays gap-free
            remaining.insert(0, Waypoint(None, state.position))
        state.cached = remaining
        state.segment = None
        state.next_index = 0
        state.target = None
        actions.append(
            NotifyGsAction(
                "low_battery",
                {
                    "reason": reason,
                    "battery": state.battery.level_pct,
                    "remaining": [list(w.to_wire(self.origin)) for w in remaining],
                },
            )
        )
        peer = nearest_peer(state.position, state.peers, tick, self.config.stale_peer_ticks)
        if peer is not None and remaining:
            self._next_token += 1
            token = self._next_token
            state.pending_transfer = PendingTransfer(
                token=token,
                peer=peer,
                waypoints=tuple(remaining),
                deadline_tick=tick + self.config.response_timeout_ticks,
            )
            actions.append(SendTransferRequestAction(peer, tuple(remaining), token))
        actions.append(GoToBss(reason=reason))
        self._go_home(tick, actions, reason=reason, announce=False)

    def _go_home(self, tick: int, actions: list[AgentAction], reason: str, announce: bool = True) -> None:
        state = self.state
        state.target = None
        if self._at_bss():
            if state.mode is not Mode.AT_BSS:
                self._set_mode(Mode.AT_BSS)
                self._land(tick, actions)
            return
        if announce:
            actions.append(GoToBss(reason=reason))
        self._set_mode(Mode.TRANSFERRING if state.pending_transfer else Mode.RETURNING)

    def _land(self, tick: int, actions: list[AgentAction]) -> None:
        state = self.state
        actions.append(Land())
        if state.distance_since_takeoff > 0.0 and state.takeoff_pct > state.battery.level_pct:
            entry = FlightLogEntry(
                start_pct=state.takeoff_pct,
                end_pct=state.battery.level_pct,
                distance_m=state.distance_since_takeoff,
                mission_id=f"{state.uav_id}-{state.missions_flown}",
            )
            state.flight_log.append(entry)
            state.battery.drain_pct_per_m = update_drain_const(state.flight_log)
        needs_swap = (
            state.battery.level_pct < 100.0 - self.config.full_battery_eps
            and (
                bool(state.cached)
                or state.pending_transfer is not None
                or state.battery.level_pct <= state.battery.threshold_pct + 1.0
            )
        )
        if needs_swap:
            state.swap_ready_tick = tick + self.config.swap_service_ticks
            actions.append(SwapBattery(ready_tick=state.swap_ready_tick))

    def _after_landing(self, tick: int, actions: list[AgentAction]) -> None:
        """Post-swap sequencing at the station: offload, resume, or park."""
        state = self.state
        if state.swap_ready_tick is not None:
            if tick < state.swap_ready_tick:
                return
            state.swap_ready_tick = None
        if state.pending_transfer is not None:
            return  # wait out the transfer resolution before resuming
        if state.storage and self.config.bss_offloads:
            self._set_mode(Mode.OFFLOADING)
            actions.append(BeginOffload())
            return
        if self._peek_next() is not None:
            self._begin_leg(tick, actions)
            return
        if state.mode is not Mode.IDLE:
            self._set_mode(Mode.IDLE)
            actions.append(NotifyGsAction("mission_done", {"tick": tick}))

    # -- transfer handling -------------------------------------------------

    def accept_transfer(
        self, request_items: Sequence[Waypoint]
    ) -> tuple[bool, str]:
        """Accept iff idle or parked at the station with enough charge for the
        ferry leg plus the transferred internal length."""
        state = self.state
        if state.mode not in (Mode.IDLE, Mode.AT_BSS) or state.pending_transfer is not None:
            return False, "busy"
        if state.owned_waypoints():
            return False, "busy"
        points = [w.point for w in request_items]
        internal = sum(dist(points[i - 1], points[i]) for i in range(1, len(points)))
        ferry = dist(state.position, points[0])
        if ferry + internal > reachable_distance(state.battery):
            return False, "battery"
        return True, ""

    def _resolve_transfer(self, accepted: bool, actions: list[AgentAction]) -> None:
        state = self.state
        pending = state.pending_transfer
        if pending is None:
            return
        if accepted:
            handed = set(pending.waypoints)
            state.cached = [w for w in state.cached if w not in handed]
        state.pending_transfer = None
        if state.mode is Mode.TRANSFERRING:
            self._set_mode(Mode.RETURNING)

    # -- inbox -------------------------------------------------------------

    def _handle_inbox(self, tick_input: TickInput, actions: list[AgentAction]) -> None:
        state = self.state
        if len(tick_input.messages) > self.config.inbox_limit:
            raise InboxOverflow(f"uav {state.uav_id}: {len(tick_input.messages)} frames in one tick")
        for token in tick_input.transfer_failures:
            if state.pending_transfer is not None and state.pending_transfer.token == token:
                self._resolve_transfer(accepted=False, actions=actions)
        for src, message in tick_input.messages:
            if isinstance(message, Telemetry):
                state.peers[src] = PeerSnapshot(
                    position=project(self.origin, GeoPoint(message.lat, message.lon)),
                    mode=message.mode,
                    last_tick=message.tick,
                )
            elif isinstance(message, MissionUpload):
                self._handle_upload(message, actions)
            elif isinstance(message, TransferRequest):
                items = tuple(Waypoint.from_wire(w, self.origin) for w in message.items)
                ok, reason = self.accept_transfer(items)
                if ok:
                    state.cached.extend(items)
                    actions.append(RespondTransferAction(src, message.token, accept=True))
                    actions.append(
                        NotifyGsAction(
                            "transfer_taken",
                            {
                                "from": message.requester,
                                "waypoints": [list(w) for w in message.items],
                            },
                        )
                    )
                else:
                    actions.append(
                        RespondTransferAction(src, message.token, accept=False, reason=reason)
                    )
            elif isinstance(message, TransferAccept):
                if state.pending_transfer is not None and state.pending_transfer.token == message.token:
                    self._resolve_transfer(accepted=True, actions=actions)
            elif isinstance(message, TransferReject):
                if state.pending_transfer is not None and state.pending_transfer.token == message.token:
                    self._resolve_transfer(accepted=False, actions=actions)
        if (
            state.pending_transfer is not None
            and tick_input.tick >= state.pending_transfer.deadline_tick
        ):
            self._resolve_transfer(accepted=False, actions=actions)

    def _handle_upload(self, message: MissionUpload, actions: list[AgentAction]) -> None:
        state = self.state
        busy = state.mode not in (Mode.IDLE, Mode.AT_BSS) or state.owned_waypoints() or (
            state.pending_transfer is not None
        )
        if busy:
            actions.append(
                NotifyGsAction(
                    "upload_rejected",
                    {"mission": message.mission_seq, "waypoints": [list(w) for w in message.items]},
                )
            )
            return
        state.segment = [Waypoint.from_wire(w, self.origin) for w in message.items]
        state.next_index = 0
        actions.append(NotifyGsAction("upload_loaded", {"mission": message.mission_seq}))
        if state.mode is Mode.IDLE:
            self._set_mode(Mode.MISSION_ASSIGNED)

    # -- main entry ---------------------------------------------------------

    def step(self, tick_input: TickInput) -> list[AgentAction]:
        state = self.state
        if state.mode is Mode.FAILED:
            return []
        state.distance_since_takeoff += dist(self._last_position, state.position)
        self._last_position = state.position
        state.battery.level_pct = min(100.0, max(0.0, tick_input.battery_pct))

        actions: list[AgentAction] = []
        self._handle_inbox(tick_input, actions)
        tick = tick_input.tick

        if state.mode in (Mode.IDLE, Mode.MISSION_ASSIGNED):
            if self._peek_next() is not None:
                self._begin_leg(tick, actions)
        elif state.mode is Mode.FLYING:
            target = state.target
            if target is None:
                self._begin_leg(tick, actions)
            elif dist(state.position, target.point) <= ARRIVAL_EPS_M:
                if target.index is not None:
                    actions.append(Capture(target))
                    state.captures += 1
                self._pop_visited(target)
                state.target = None
                self._begin_leg(tick, actions)
            elif state.battery.level_pct <= state.battery.threshold_pct or not self._leg_reachable(
                target
            ):
                self._abort(tick, actions, reason="battery check failed mid-leg")
        elif state.mode in (Mode.RETURNING, Mode.TRANSFERRING):
            if self._at_bss():
                self._set_mode(Mode.AT_BSS)
                self._land(tick, actions)
        elif state.mode is Mode.AT_BSS:
            self._after_landing(tick, actions)
        elif state.mode is Mode.OFFLOADING:
            pass  # the engine drives the offload session and completes it
        else:
            raise InvalidTransition(f"unhandled mode {state.mode}")
        return actions

    def offload_complete(self, accepted_ids: Sequence[str]) -> None:
        """Engine callback once a server receipt covers the uploaded records."""
        state = self.state
        accepted = set(accepted_ids)
        state.storage = [r for r in state.storage if r.record_id not in accepted]
        self._set_mode(Mode.AT_BSS)

    def motion_target(self) -> Optional[LocalPoint]:
        """Where the physics layer should move this agent, if anywhere."""
        state = self.state
        if state.mode is Mode.FLYING and state.target is not None:
            return state.target.point
        if state.mode in (Mode.RETURNING, Mode.TRANSFERRING):
            return state.bss
        return None
