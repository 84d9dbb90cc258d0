import math
import random

from agrifleet.fielddata import RecordStore
from agrifleet.link import (
    Channel,
    ChannelConfig,
    Endpoint,
    OffloadServer,
    OffloadSession,
    SendStatus,
    reliable_send,
)
from agrifleet.protocol import (
    Frame,
    MsgType,
    NotifyGs,
    OffloadChunk,
    Telemetry,
    decode,
    encode,
)


def make_record(i: int) -> dict:
    return {
        "record_id": f"1-{i:05d}",
        "uav_id": 1,
        "position": {"lat": 9.0 + i * 1e-6, "lon": 38.7},
        "timestamp": i,
        "payload": {"red": 0.3, "nir": 0.35, "true_class": "soil"},
    }


class TestPublish:
    def test_lossless_reaches_all_subscribers(self):
        ch = Channel(ChannelConfig(loss_prob=0.0, seed=1))
        ep = Endpoint(ch, 1)
        for sys_id in (2, 3, 4):
            ch.subscribe(sys_id, MsgType.TELEMETRY)
        ep.publish(Telemetry(9.0, 38.7, 90.0, "Idle", 0), now=0)
        ch.deliver_due(0)
        assert all(len(ch.take_inbox(sys_id)) == 1 for sys_id in (2, 3, 4))

    def test_total_loss_delivers_nothing(self):
        ch = Channel(ChannelConfig(loss_prob=1.0, seed=1))
        ep = Endpoint(ch, 1)
        ch.subscribe(2, MsgType.TELEMETRY)
        for tick in range(20):
            ep.publish(Telemetry(9.0, 38.7, 90.0, "Idle", tick), now=tick)
            ch.deliver_due(tick)
        assert ch.take_inbox(2) == []

    def test_seeded_loss_within_binomial_bounds(self):
        ch = Channel(ChannelConfig(loss_prob=0.5, seed=42))
        ep = Endpoint(ch, 1)
        ch.subscribe(2, MsgType.TELEMETRY)
        n = 1000
        for tick in range(n):
            ep.publish(Telemetry(9.0, 38.7, 90.0, "Idle", tick), now=tick)
        ch.deliver_due(n)
        got = len(ch.take_inbox(2))
        sigma = math.sqrt(n * 0.25)
        assert abs(got - 500) <= 3 * sigma

    def test_no_retransmissions_on_publish_path(self):
        ch = Channel(ChannelConfig(loss_prob=0.5, seed=7))
        ep = Endpoint(ch, 1)
        ch.subscribe(2, MsgType.TELEMETRY)
        for tick in range(100):
            ep.publish(Telemetry(9.0, 38.7, 90.0, "Idle", tick), now=tick)
        assert ch.sent_by_type[MsgType.TELEMETRY] == 100  # one transmission per publish


class TestReliableSend:
    def test_lossless_first_attempt(self):
        ch = Channel(ChannelConfig(loss_prob=0.0, seed=0))
        a, b = Endpoint(ch, 1), Endpoint(ch, 2)
        outcome, _ = reliable_send(a, b, NotifyGs("ping"), target_sys=2)
        assert outcome.status is SendStatus.DELIVERED
        assert outcome.attempts == 1

    def test_total_loss_fails_after_max_retries(self):
        ch = Channel(ChannelConfig(loss_prob=1.0, seed=0, max_retries=5, ack_timeout_ticks=2))
        a, b = Endpoint(ch, 1), Endpoint(ch, 2)
        outcome, _ = reliable_send(a, b, NotifyGs("ping"), target_sys=2)
        assert outcome.status is SendStatus.FAILED
        assert outcome.attempts == 5

    def test_lossy_exactly_once_delivery(self):
        ch = Channel(ChannelConfig(loss_prob=0.3, seed=11, max_retries=64, ack_timeout_ticks=3))
        a, b = Endpoint(ch, 1), Endpoint(ch, 2)
        seen = []
        tick = 0
        for i in range(1000):
            outcome, tick = reliable_send(
                a, b, NotifyGs("seq", {"i": i}), target_sys=2, start_tick=tick,
                on_receive=lambda inbound: seen.append(inbound.message.detail["i"]),
            )
            assert outcome.status is SendStatus.DELIVERED
        assert seen == list(range(1000))  # no duplicates, no gaps, in order

    def test_duplicate_data_frames_are_deduplicated(self):
        ch = Channel(ChannelConfig(loss_prob=0.0, seed=0))
        a, b = Endpoint(ch, 1), Endpoint(ch, 2)
        token = a.send_reliable(NotifyGs("once"), target_sys=2, now=0)
        # force a spurious retransmission of the same frame
        frame = a._pending[token].frame
        ch.send(frame, now=0)
        ch.deliver_due(0)
        inbound = b.poll(0)
        assert len(inbound) == 1
        ch.deliver_due(0)
        a.poll(0)
        assert a.status(token) is SendStatus.DELIVERED


class TestOffload:
    def run_exchange(self, records, loss=0.0, seed=0, corrupt_chunk=None):
        ch = Channel(ChannelConfig(loss_prob=loss, seed=seed))
        uav = Endpoint(ch, 1)
        server_ep = Endpoint(ch, 201)
        store = RecordStore()
        server = OffloadServer(server_ep, store)
        session = OffloadSession(uav, server_sys=201, token=1, records=records, chunk_records=10)
        if corrupt_chunk is not None and session.chunks:
            bad = list(session.chunks[corrupt_chunk])
            bad[0] = dict(bad[0], payload=dict(bad[0]["payload"], red=0.9999))
            session.chunks[corrupt_chunk] = tuple(bad)
        tick = 0
        while not session.done and tick < 200:
            session.step(tick)
            ch.deliver_due(tick)
            server.step(tick)
            ch.deliver_due(tick)
            for inbound in uav.poll(tick):
                if inbound.frame.msg_type is MsgType.OFFLOAD_RECEIPT:
                    session.handle(inbound.message)
            tick += 1
        return session, store

    def test_zero_records_gives_empty_receipt(self):
        session, store = self.run_exchange([])
        assert session.done
        assert session.receipt.accepted_ids == ()
        assert len(store) == 0

    def test_hundred_records_lossless(self):
        records = [make_record(i) for i in range(100)]
        session, store = self.run_exchange(records)
        assert session.done
        assert len(session.receipt.accepted_ids) == 100
        assert len(store) == 100

    def test_corrupt_chunk_triggers_full_retry(self):
        records = [make_record(i) for i in range(30)]
        session, store = self.run_exchange(records, corrupt_chunk=1)
        # digest never matches the manifest, so the exchange must not finish
        assert not session.done
        assert len(store) == 0

    def test_lossy_chunks_resent_until_complete(self):
        records = [make_record(i) for i in range(60)]
        session, store = self.run_exchange(records, loss=0.4, seed=5)
        assert session.done
        assert len(store) == 60
        assert session.rounds > 1  # at least one resend round happened


class TestChannelDeterminism:
    def test_same_seed_same_outcome(self):
        def run(seed):
            ch = Channel(ChannelConfig(loss_prob=0.5, seed=seed))
            ep = Endpoint(ch, 1)
            ch.subscribe(2, MsgType.TELEMETRY)
            for tick in range(200):
                ep.publish(Telemetry(9.0, 38.7, 50.0, "Idle", tick), now=tick)
            ch.deliver_due(200)
            return [f.seq for f in ch.take_inbox(2)]

        assert run(9) == run(9)
        assert run(9) != run(10)

    def test_blackout_window_drops_everything(self):
        ch = Channel(ChannelConfig(loss_prob=0.0, seed=0))
        ep = Endpoint(ch, 1)
        ch.subscribe(2, MsgType.TELEMETRY)
        ch.blackout(2, until_tick=5)
        for tick in range(10):
            ep.publish(Telemetry(9.0, 38.7, 50.0, "Idle", tick), now=tick)
            ch.deliver_due(tick)
        ticks = [decode(encode(f)) and f for f in ch.take_inbox(2)]
        assert len(ticks) == 5  # only frames sent at ticks 5..9 arrive
