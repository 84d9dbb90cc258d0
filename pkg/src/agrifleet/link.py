"""Simulated lossy channels: fire-and-forget pub-sub for telemetry, reliable
point-to-point with retransmission and receive-side dedup for mission traffic,
and the chunked bulk-offload exchange over the wifi channel.

Everything is tick-stepped and seeded so runs replay bit-identically.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .protocol import (
    Frame,
    Message,
    MissionAck,
    MsgType,
    OffloadChunk,
    OffloadManifest,
    OffloadReceipt,
    decode,
    encode,
    msg_type_of,
    parse_message,
)

DEDUP_WINDOW = 32


@dataclass(frozen=True)
class ChannelConfig:
    loss_prob: float = 0.0
    latency_ticks: int = 0
    seed: int = 0
    max_retries: int = 8
    ack_timeout_ticks: int = 4

    def __post_init__(self) -> None:
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1]")
        if self.latency_ticks < 0:
            raise ValueError("latency_ticks must be >= 0")
        if self.max_retries < 1 or self.ack_timeout_ticks < 1:
            raise ValueError("max_retries and ack_timeout_ticks must be >= 1")


class Channel:
    """Seeded Bernoulli-loss datagram layer with unicast and topic broadcast.

    Deliveries within a tick keep insertion order; loss is drawn once per
    transmission attempt per receiver.
    """

    def __init__(self, cfg: ChannelConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self._inboxes: dict[int, list[Frame]] = {}
        self._subs: dict[MsgType, list[int]] = {}
        self._pending: list[tuple[int, int, int, Frame]] = []  # (due, order, dst, frame)
        self._order = 0
        self._blackouts: dict[int, int] = {}  # sys_id -> blocked until tick (exclusive)
        self.sent_frames = 0
        self.delivered_frames = 0
        self.sent_by_type: dict[MsgType, int] = {}

    def register(self, sys_id: int) -> None:
        self._inboxes.setdefault(sys_id, [])

    def subscribe(self, sys_id: int, msg_type: MsgType) -> None:
        self.register(sys_id)
        subs = self._subs.setdefault(msg_type, [])
        if sys_id not in subs:
            subs.append(sys_id)
            subs.sort()

    def blackout(self, sys_id: int, until_tick: int) -> None:
        self._blackouts[sys_id] = max(self._blackouts.get(sys_id, 0), until_tick)

    def _blacked(self, sys_id: int, tick: int) -> bool:
        return tick < self._blackouts.get(sys_id, 0)

    def _transmit(self, frame: Frame, dst: int, now: int) -> None:
        self.sent_frames += 1
        self.sent_by_type[frame.msg_type] = self.sent_by_type.get(frame.msg_type, 0) + 1
        if self._blacked(frame.sys_id, now):
            return
        if self.cfg.loss_prob > 0.0 and self.rng.random() < self.cfg.loss_prob:
            return
        self._pending.append((now + self.cfg.latency_ticks, self._order, dst, frame))
        self._order += 1

    def publish(self, frame: Frame, now: int) -> None:
        """Broadcast to every subscriber of the frame's message type; no acks,
        no retransmission, silent loss per receiver."""
        if frame.target_sys != 0:
            raise ValueError("published frames must be broadcast (target_sys 0)")
        for dst in self._subs.get(frame.msg_type, []):
            if dst == frame.sys_id:
                continue
            self._transmit(frame, dst, now)

    def send(self, frame: Frame, now: int) -> None:
        """One unicast transmission attempt (no reliability here)."""
        if frame.target_sys == 0:
            raise ValueError("unicast frames need a nonzero target_sys")
        if frame.target_sys not in self._inboxes:
            self.sent_frames += 1  # transmitted into the void
            return
        self._transmit(frame, frame.target_sys, now)

    def deliver_due(self, now: int) -> None:
        still = []
        due = []
        for item in self._pending:
            (due if item[0] <= now else still).append(item)
        self._pending = still
        for _, _, dst, frame in sorted(due, key=lambda it: (it[0], it[1])):
            if self._blacked(dst, now):
                continue
            self.delivered_frames += 1
            self._inboxes[dst].append(frame)

    def take_inbox(self, sys_id: int) -> list[Frame]:
        frames = self._inboxes.get(sys_id, [])
        self._inboxes[sys_id] = []
        return frames


class SendStatus(Enum):
    PENDING = "pending"
    DELIVERED = "delivered"
    FAILED = "failed"


@dataclass
class _Pending:
    frame: Frame
    attempts: int
    next_retry: int
    status: SendStatus = SendStatus.PENDING


@dataclass(frozen=True)
class Inbound:
    src: int
    message: Message
    frame: Frame


class Endpoint:
    """Protocol endpoint bound to one system id on one channel.

    Outgoing point-to-point messages are retransmitted every
    ``ack_timeout_ticks`` until acked or ``max_retries`` attempts are spent;
    incoming ones are deduplicated by (source, seq) over a sliding window so
    the application sees each message exactly once.
    """

    def __init__(self, channel: Channel, sys_id: int, comp_id: int = 1):
        self.channel = channel
        self.sys_id = sys_id
        self.comp_id = comp_id
        channel.register(sys_id)
        self._seq = 0
        self._pending: dict[int, _Pending] = {}  # token -> pending
        self._token = 0
        self._seen: dict[int, deque[int]] = {}
        self._results: list[tuple[int, SendStatus, int]] = []  # (token, status, attempts)

    def subscribe(self, msg_type: MsgType) -> None:
        self.channel.subscribe(self.sys_id, msg_type)

    def _next_seq(self) -> int:
        seq = self._seq
        self._seq = (self._seq + 1) % 256
        return seq

    def publish(self, message: Message, now: int) -> Frame:
        frame = Frame(
            sys_id=self.sys_id,
            comp_id=self.comp_id,
            target_sys=0,
            target_comp=0,
            seq=self._next_seq(),
            msg_type=msg_type_of(message),
            payload=message.to_payload(),
        )
        self.channel.publish(frame, now)
        return frame

    def send_reliable(self, message: Message, target_sys: int, now: int) -> int:
        """Queue a reliable point-to-point send; returns a token to poll."""
        frame = Frame(
            sys_id=self.sys_id,
            comp_id=self.comp_id,
            target_sys=target_sys,
            target_comp=1,
            seq=self._next_seq(),
            msg_type=msg_type_of(message),
            payload=message.to_payload(),
        )
        self._token += 1
        token = self._token
        self._pending[token] = _Pending(
            frame=frame, attempts=1, next_retry=now + self.channel.cfg.ack_timeout_ticks
        )
        self.channel.send(frame, now)
        return token

    def send_raw(self, message: Message, target_sys: int, now: int) -> None:
        """One-shot unicast without retransmission (used by offload chunks,
        which have their own round-based recovery)."""
        frame = Frame(
            sys_id=self.sys_id,
            comp_id=self.comp_id,
            target_sys=target_sys,
            target_comp=1,
            seq=self._next_seq(),
            msg_type=msg_type_of(message),
            payload=message.to_payload(),
        )
        self.channel.send(frame, now)

    def status(self, token: int) -> SendStatus:
        pending = self._pending.get(token)
        return pending.status if pending else SendStatus.FAILED

    def pending_frame(self, token: int) -> Frame:
        return self._pending[token].frame

    def take_results(self) -> list[tuple[int, SendStatus, int]]:
        """Tokens resolved since the last call, as (token, status, attempts)."""
        results = self._results
        self._results = []
        return results

    def step(self, now: int) -> None:
        """Retransmit overdue unacked frames; fail them past max_retries."""
        for token in sorted(self._pending):
            p = self._pending[token]
            if p.status is not SendStatus.PENDING or now < p.next_retry:
                continue
            if p.attempts >= self.channel.cfg.max_retries:
                p.status = SendStatus.FAILED
                self._results.append((token, SendStatus.FAILED, p.attempts))
                continue
            p.attempts += 1
            p.next_retry = now + self.channel.cfg.ack_timeout_ticks
            self.channel.send(p.frame, now)

    def _dedup(self, frame: Frame) -> bool:
        """True if the frame is a duplicate of a recently seen (src, seq)."""
        window = self._seen.setdefault(frame.sys_id, deque(maxlen=DEDUP_WINDOW))
        if frame.seq in window:
            return True
        window.append(frame.seq)
        return False

    def poll(self, now: int) -> list[Inbound]:
        """Drain the inbox: resolve acks, ack+dedup point-to-point traffic,
        pass broadcasts straight through."""
        out: list[Inbound] = []
        for frame in self.channel.take_inbox(self.sys_id):
            if frame.msg_type is MsgType.MISSION_ACK:
                ack = MissionAck.from_payload(frame.payload)
                for token in sorted(self._pending):
                    p = self._pending[token]
                    if (
                        p.status is SendStatus.PENDING
                        and p.frame.seq == ack.acked_seq
                        and p.frame.target_sys == frame.sys_id
                    ):
                        p.status = SendStatus.DELIVERED
                        self._results.append((token, SendStatus.DELIVERED, p.attempts))
                        break
                continue
            if frame.target_sys == 0:
                out.append(Inbound(frame.sys_id, parse_message(frame), frame))
                continue
            # point-to-point: always ack (the previous ack may have been lost)
            ack_frame = Frame(
                sys_id=self.sys_id,
                comp_id=self.comp_id,
                target_sys=frame.sys_id,
                target_comp=frame.comp_id,
                seq=self._next_seq(),
                msg_type=MsgType.MISSION_ACK,
                payload=MissionAck(frame.seq).to_payload(),
            )
            self.channel.send(ack_frame, now)
            if self._dedup(frame):
                continue
            out.append(Inbound(frame.sys_id, parse_message(frame), frame))
        return out


@dataclass(frozen=True)
class SendOutcome:
    status: SendStatus
    attempts: int
    ticks: int


def reliable_send(
    sender: Endpoint,
    receiver: Endpoint,
    message: Message,
    target_sys: int,
    start_tick: int = 0,
    on_receive: Optional[Callable[[Inbound], None]] = None,
) -> tuple[SendOutcome, int]:
    """Drive one reliable exchange to completion on a private tick loop.

    Used outside the fleet simulator (tests, standalone tools); returns the
    outcome and the tick after resolution.
    """
    token = sender.send_reliable(message, target_sys, start_tick)
    tick = start_tick
    # worst case: every attempt waits a full timeout plus channel latency
    deadline = start_tick + (sender.channel.cfg.max_retries + 2) * (
        sender.channel.cfg.ack_timeout_ticks + sender.channel.cfg.latency_ticks + 1
    )
    while tick <= deadline:
        sender.channel.deliver_due(tick)
        for inbound in receiver.poll(tick):
            if on_receive is not None:
                on_receive(inbound)
        sender.channel.deliver_due(tick)  # acks sent this tick with zero latency
        sender.poll(tick)
        if sender.status(token) is not SendStatus.PENDING:
            attempts = sender._pending[token].attempts
            return SendOutcome(sender.status(token), attempts, tick - start_tick), tick + 1
        sender.step(tick)
        tick += 1
    raise RuntimeError("reliable_send did not resolve within its deadline")


def records_digest(records: list[dict]) -> str:
    """Order-sensitive digest of record payloads, matched by the offload
    server before issuing a receipt."""
    h = hashlib.sha256()
    for record in records:
        h.update(json.dumps(record, sort_keys=True, separators=(",", ":")).encode())
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class _ServerSession:
    manifest: OffloadManifest
    chunks: dict[int, OffloadChunk] = field(default_factory=dict)
    done: bool = False


class OffloadServer:
    """Wifi-side receiver: collects chunks, verifies the manifest digest and
    answers with receipts naming what is missing or accepted."""

    def __init__(self, endpoint: Endpoint, store):
        self.endpoint = endpoint
        self.store = store  # fielddata.RecordStore
        self._sessions: dict[tuple[int, int], _ServerSession] = {}  # (src, token)

    def step(self, now: int) -> list[tuple[int, OffloadReceipt]]:
        """Process inbound offload traffic; returns receipts issued this tick."""
        issued = []
        for inbound in self.endpoint.poll(now):
            msg = inbound.message
            if isinstance(msg, OffloadManifest):
                key = (inbound.src, msg.token)
                session = self._sessions.get(key)
                if session is None or session.manifest.sha256_hex != msg.sha256_hex:
                    self._sessions[key] = _ServerSession(manifest=msg)
                receipt = self._evaluate(key)
                if receipt is not None:
                    self.endpoint.send_raw(receipt, inbound.src, now)
                    issued.append((inbound.src, receipt))
            elif isinstance(msg, OffloadChunk):
                key = (inbound.src, msg.token)
                session = self._sessions.get(key)
                if session is None:
                    session = self._sessions[key] = _ServerSession(
                        manifest=OffloadManifest(msg.token, -1, 0, "")
                    )
                session.chunks[msg.chunk_index] = msg
        return issued

    def _evaluate(self, key: tuple[int, int]) -> Optional[OffloadReceipt]:
        session = self._sessions[key]
        manifest = session.manifest
        if manifest.record_count < 0:
            return None  # chunks arrived before any manifest; wait
        if manifest.record_count == 0:
            session.done = True
            return OffloadReceipt(manifest.token, "ok", accepted_ids=())
        if not session.chunks:
            return OffloadReceipt(manifest.token, "partial", missing_chunks=())
        chunk_count = next(iter(session.chunks.values())).chunk_count
        missing = tuple(i for i in range(chunk_count) if i not in session.chunks)
        if missing:
            return OffloadReceipt(manifest.token, "partial", missing_chunks=missing)
        records = []
        for i in range(chunk_count):
            records.extend(session.chunks[i].records)
        if records_digest(records) != manifest.sha256_hex or len(records) != manifest.record_count:
            session.chunks.clear()
            return OffloadReceipt(manifest.token, "checksum_mismatch")
        ids = tuple(r["record_id"] for r in records)
        self.store.ingest(f"offload-{key[0]}-{manifest.token}-{manifest.sha256_hex[:12]}", records)
        session.done = True
        return OffloadReceipt(manifest.token, "ok", accepted_ids=ids)


class OffloadSession:
    """UAV-side upload: streams chunks, re-sends whatever the server reports
    missing, restarts wholesale on a checksum mismatch. One round per tick."""

    def __init__(
        self,
        endpoint: Endpoint,
        server_sys: int,
        token: int,
        records: list[dict],
        chunk_records: int = 20,
    ):
        self.endpoint = endpoint
        self.server_sys = server_sys
        self.token = token
        self.records = records
        self.chunks = [
            tuple(records[i : i + chunk_records]) for i in range(0, len(records), chunk_records)
        ] or []
        self.manifest = OffloadManifest(
            token=token,
            record_count=len(records),
            total_bytes=sum(len(json.dumps(r, sort_keys=True)) for r in records),
            sha256_hex=records_digest(records),
        )
        self._outstanding = list(range(len(self.chunks)))
        self.receipt: Optional[OffloadReceipt] = None
        self.rounds = 0

    @property
    def done(self) -> bool:
        return self.receipt is not None and self.receipt.status == "ok"

    def step(self, now: int) -> None:
        """Send the manifest plus outstanding chunks, then absorb receipts."""
        if self.done:
            return
        self.rounds += 1
        self.endpoint.send_raw(self.manifest, self.server_sys, now)
        for index in self._outstanding:
            self.endpoint.send_raw(
                OffloadChunk(self.token, index, len(self.chunks), self.chunks[index]),
                self.server_sys,
                now,
            )

    def handle(self, receipt: OffloadReceipt) -> None:
        if receipt.token != self.token:
            return
        if receipt.status == "ok":
            self.receipt = receipt
        elif receipt.status == "partial":
            self._outstanding = list(receipt.missing_chunks) or list(range(len(self.chunks)))
        elif receipt.status == "checksum_mismatch":
            self._outstanding = list(range(len(self.chunks)))
