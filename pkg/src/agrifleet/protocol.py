"""Radio frame format and message payloads.

A compact 10-byte binary header carries system/component addressing and a
wrapping 8-bit sequence number, followed by the payload and a CRC-16/X25
trailer over header+payload. Payload bodies are canonical JSON; the exact
layout is documented in docs/protocol.md.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Optional

MAGIC = 0xA7
HEADER_LEN = 10
CRC_LEN = 2
BROADCAST = 0
MAX_PAYLOAD = 0xFFFF


class ProtocolError(ValueError):
    pass


class TruncatedFrame(ProtocolError):
    pass


class BadMagic(ProtocolError):
    pass


class CrcMismatch(ProtocolError):
    pass


class UnknownMsgType(ProtocolError):
    pass


class MsgType(IntEnum):
    TELEMETRY = 1
    MISSION_UPLOAD = 2
    MISSION_ACK = 3
    TRANSFER_REQUEST = 4
    TRANSFER_ACCEPT = 5
    TRANSFER_REJECT = 6
    NOTIFY_GS = 7
    OFFLOAD_MANIFEST = 8
    OFFLOAD_CHUNK = 9
    OFFLOAD_RECEIPT = 10


def _build_crc_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ 0x8408 if crc & 1 else crc >> 1
        table.append(crc)
    return table


_CRC_TABLE = _build_crc_table()


def crc16_x25(data: bytes) -> int:
    """CRC-16/X25: reflected 0x1021, init 0xFFFF, final xor 0xFFFF."""
    crc = 0xFFFF
    for byte in data:
        crc = (crc >> 8) ^ _CRC_TABLE[(crc ^ byte) & 0xFF]
    return crc ^ 0xFFFF


@dataclass(frozen=True)
class Frame:
    sys_id: int
    comp_id: int
    target_sys: int  # 0 = broadcast
    target_comp: int
    seq: int
    msg_type: MsgType
    payload: bytes = b""

    def __post_init__(self) -> None:
        if not 1 <= self.sys_id <= 255:
            raise ProtocolError(f"sys_id out of range: {self.sys_id}")
        for name in ("comp_id", "target_sys", "target_comp", "seq"):
            value = getattr(self, name)
            if not 0 <= value <= 255:
                raise ProtocolError(f"{name} out of range: {value}")
        if len(self.payload) > MAX_PAYLOAD:
            raise ProtocolError("payload too large")


def encode(frame: Frame) -> bytes:
    header = struct.pack(
        ">BHBBBBBBB",
        MAGIC,
        len(frame.payload),
        frame.sys_id,
        frame.comp_id,
        frame.target_sys,
        frame.target_comp,
        frame.seq,
        int(frame.msg_type),
        0,  # flags, reserved
    )
    body = header + frame.payload
    return body + struct.pack(">H", crc16_x25(body))


def decode(data: bytes) -> Frame:
    if len(data) < HEADER_LEN + CRC_LEN:
        raise TruncatedFrame(f"frame too short: {len(data)} bytes")
    magic, plen, sys_id, comp_id, tsys, tcomp, seq, mtype, _flags = struct.unpack(
        ">BHBBBBBBB", data[:HEADER_LEN]
    )
    if magic != MAGIC:
        raise BadMagic(f"bad magic byte 0x{magic:02x}")
    total = HEADER_LEN + plen + CRC_LEN
    if len(data) < total:
        raise TruncatedFrame(f"declared {plen} payload bytes, frame has {len(data) - 12}")
    body = data[: HEADER_LEN + plen]
    (crc,) = struct.unpack(">H", data[HEADER_LEN + plen : total])
    if crc != crc16_x25(body):
        raise CrcMismatch("checksum failed")
    try:
        msg_type = MsgType(mtype)
    except ValueError as exc:
        raise UnknownMsgType(f"unknown message type {mtype}") from exc
    return Frame(
        sys_id=sys_id,
        comp_id=comp_id,
        target_sys=tsys,
        target_comp=tcomp,
        seq=seq,
        msg_type=msg_type,
        payload=bytes(data[HEADER_LEN : HEADER_LEN + plen]),
    )


def _dumps(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _loads(payload: bytes) -> Any:
    try:
        return json.loads(payload.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed payload: {exc}") from exc


# Waypoints on the wire: [plan_index | null, lat, lon]
WireWaypoint = tuple[Optional[int], float, float]


def _wire_waypoints(items: Any) -> tuple[WireWaypoint, ...]:
    out = []
    for item in items:
        idx, lat, lon = item
        out.append((None if idx is None else int(idx), float(lat), float(lon)))
    return tuple(out)


@dataclass(frozen=True)
class Telemetry:
    lat: float
    lon: float
    battery_pct: float
    mode: str
    tick: int
    last_visited: int = -1  # plan index of the newest visited waypoint

    def to_payload(self) -> bytes:
        return _dumps(
            {
                "lat": self.lat,
                "lon": self.lon,
                "battery": self.battery_pct,
                "mode": self.mode,
                "tick": self.tick,
                "visited": self.last_visited,
            }
        )

    @classmethod
    def from_payload(cls, payload: bytes) -> "Telemetry":
        d = _loads(payload)
        return cls(d["lat"], d["lon"], d["battery"], d["mode"], d["tick"], d["visited"])


@dataclass(frozen=True)
class MissionUpload:
    uav_id: int
    mission_seq: int
    items: tuple[WireWaypoint, ...]

    def to_payload(self) -> bytes:
        return _dumps(
            {
                "uav": self.uav_id,
                "mission": self.mission_seq,
                "count": len(self.items),
                "items": [list(w) for w in self.items],
            }
        )

    @classmethod
    def from_payload(cls, payload: bytes) -> "MissionUpload":
        d = _loads(payload)
        items = _wire_waypoints(d["items"])
        if d["count"] != len(items):
            raise ProtocolError(f"item count mismatch: declared {d['count']}, got {len(items)}")
        return cls(d["uav"], d["mission"], items)


@dataclass(frozen=True)
class MissionAck:
    acked_seq: int

    def to_payload(self) -> bytes:
        return _dumps({"ack": self.acked_seq})

    @classmethod
    def from_payload(cls, payload: bytes) -> "MissionAck":
        return cls(_loads(payload)["ack"])


@dataclass(frozen=True)
class TransferRequest:
    requester: int
    token: int
    items: tuple[WireWaypoint, ...]

    def __post_init__(self) -> None:
        if not self.items:
            raise ProtocolError("transfer request must carry waypoints")

    def to_payload(self) -> bytes:
        return _dumps(
            {"from": self.requester, "token": self.token, "items": [list(w) for w in self.items]}
        )

    @classmethod
    def from_payload(cls, payload: bytes) -> "TransferRequest":
        d = _loads(payload)
        return cls(d["from"], d["token"], _wire_waypoints(d["items"]))


@dataclass(frozen=True)
class TransferAccept:
    token: int

    def to_payload(self) -> bytes:
        return _dumps({"token": self.token})

    @classmethod
    def from_payload(cls, payload: bytes) -> "TransferAccept":
        return cls(_loads(payload)["token"])


@dataclass(frozen=True)
class TransferReject:
    token: int
    reason: str  # "busy" | "battery"

    def to_payload(self) -> bytes:
        return _dumps({"token": self.token, "reason": self.reason})

    @classmethod
    def from_payload(cls, payload: bytes) -> "TransferReject":
        d = _loads(payload)
        return cls(d["token"], d["reason"])


@dataclass(frozen=True)
class NotifyGs:
    event: str
    detail: dict = field(default_factory=dict)

    def to_payload(self) -> bytes:
        return _dumps({"event": self.event, "detail": self.detail})

    @classmethod
    def from_payload(cls, payload: bytes) -> "NotifyGs":
        d = _loads(payload)
        return cls(d["event"], d["detail"])


@dataclass(frozen=True)
class OffloadManifest:
    token: int
    record_count: int
    total_bytes: int
    sha256_hex: str

    def to_payload(self) -> bytes:
        return _dumps(
            {
                "token": self.token,
                "count": self.record_count,
                "bytes": self.total_bytes,
                "sha256": self.sha256_hex,
            }
        )

    @classmethod
    def from_payload(cls, payload: bytes) -> "OffloadManifest":
        d = _loads(payload)
        return cls(d["token"], d["count"], d["bytes"], d["sha256"])


@dataclass(frozen=True)
class OffloadChunk:
    token: int
    chunk_index: int
    chunk_count: int
    records: tuple[dict, ...]

    def to_payload(self) -> bytes:
        return _dumps(
            {
                "token": self.token,
                "index": self.chunk_index,
                "of": self.chunk_count,
                "records": list(self.records),
            }
        )

    @classmethod
    def from_payload(cls, payload: bytes) -> "OffloadChunk":
        d = _loads(payload)
        return cls(d["token"], d["index"], d["of"], tuple(d["records"]))


@dataclass(frozen=True)
class OffloadReceipt:
    token: int
    status: str  # "ok" | "partial" | "checksum_mismatch"
    accepted_ids: tuple[str, ...] = ()
    missing_chunks: tuple[int, ...] = ()

    def to_payload(self) -> bytes:
        return _dumps(
            {
                "token": self.token,
                "status": self.status,
                "accepted": list(self.accepted_ids),
                "missing": list(self.missing_chunks),
            }
        )

    @classmethod
    def from_payload(cls, payload: bytes) -> "OffloadReceipt":
        d = _loads(payload)
        return cls(d["token"], d["status"], tuple(d["accepted"]), tuple(d["missing"]))


_MESSAGE_TYPES = {
    MsgType.TELEMETRY: Telemetry,
    MsgType.MISSION_UPLOAD: MissionUpload,
    MsgType.MISSION_ACK: MissionAck,
    MsgType.TRANSFER_REQUEST: TransferRequest,
    MsgType.TRANSFER_ACCEPT: TransferAccept,
    MsgType.TRANSFER_REJECT: TransferReject,
    MsgType.NOTIFY_GS: NotifyGs,
    MsgType.OFFLOAD_MANIFEST: OffloadManifest,
    MsgType.OFFLOAD_CHUNK: OffloadChunk,
    MsgType.OFFLOAD_RECEIPT: OffloadReceipt,
}

_TYPE_TO_MSGTYPE = {cls: mt for mt, cls in _MESSAGE_TYPES.items()}

Message = (
    Telemetry
    | MissionUpload
    | MissionAck
    | TransferRequest
    | TransferAccept
    | TransferReject
    | NotifyGs
    | OffloadManifest
    | OffloadChunk
    | OffloadReceipt
)


def msg_type_of(message: Message) -> MsgType:
    return _TYPE_TO_MSGTYPE[type(message)]


def parse_message(frame: Frame) -> Message:
    cls = _MESSAGE_TYPES.get(frame.msg_type)
    if cls is None:
        raise UnknownMsgType(f"no parser for {frame.msg_type}")
    return cls.from_payload(frame.payload)
