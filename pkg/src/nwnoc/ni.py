"""
AXI network interface with end-to-end ordering.

Initiator side: an AXI request is only accepted when the response storage
for it can be reserved, and the reserved ROB index travels in every flit
header. Responses come back in any order; a per-ID reorder table decides
whether each beat can go straight to the AXI side or has to wait in the ROB.

Target side: request flits are handed to the attached memory endpoint,
whose response beats are queued here for injection.
"""

from __future__ import annotations

import bisect
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, Dict, List, Optional, Tuple

from .axi import AxiTransaction, TxnKind
from .errors import ConfigurationError, ProtocolError
from .kernel import Component, Link
from .protocol import (BUSES, AxiMsg, Bus, ChannelKind, Coord, Flit, Variant, channel_map,
                       channels_used, make_flit)

WIDE_DATA = ("WideW", "WideR")


class RobAllocator:
    """First-fit allocator over contiguous ranges of fixed-size slots."""

    def __init__(self, capacity_bytes: int, slot_bytes: int):
        if slot_bytes <= 0 or capacity_bytes < slot_bytes:
            raise ConfigurationError(f"ROB of {capacity_bytes} B cannot hold one {slot_bytes} B slot")
        self.slot_bytes = slot_bytes
        self.num_slots = capacity_bytes // slot_bytes
        self.capacity_bytes = self.num_slots * slot_bytes
        # sorted, non-adjacent (start, length) ranges
        self._free: List[Tuple[int, int]] = [(0, self.num_slots)]
        self._allocated: Dict[int, int] = {}
        self.used_slots = 0
        self.max_used_slots = 0

    def allocate(self, n: int) -> Optional[int]:
        if n <= 0:
            raise ConfigurationError("allocation size must be positive")
        for k, (start, length) in enumerate(self._free):
            if length >= n:
                if length == n:
                    del self._free[k]
                else:
                    self._free[k] = (start + n, length - n)
                self._allocated[start] = n
                self.used_slots += n
                if self.used_slots > self.max_used_slots:
                    self.max_used_slots = self.used_slots
                if self.used_slots > self.num_slots:
                    raise ProtocolError("ROB occupancy exceeds capacity")
                return start
        return None

    def free(self, start: int) -> int:
        try:
            n = self._allocated.pop(start)
        except KeyError:
            raise ProtocolError(f"ROB slot {start} freed but not allocated") from None
        self.used_slots -= n
        free = self._free
        k = bisect.bisect_left(free, (start, 0))
        end = start + n
        if k < len(free) and free[k][0] == end:
            end += free[k][1]
            del free[k]
        if k > 0 and free[k - 1][0] + free[k - 1][1] == start:
            start = free[k - 1][0]
            del free[k - 1]
            k -= 1
        free.insert(k, (start, end - start))
        return n

    def size_of(self, start: int) -> Optional[int]:
        return self._allocated.get(start)

    @property
    def free_slots(self) -> int:
        return self.num_slots - self.used_slots

    @property
    def used_bytes(self) -> int:
        return self.used_slots * self.slot_bytes

    @property
    def free_bytes(self) -> int:
        return self.free_slots * self.slot_bytes

    @property
    def fragments(self) -> int:
        return len(self._free)

    def allocations(self) -> Dict[int, int]:
        return dict(self._allocated)


class EntryState(Enum):
    OUTSTANDING = "outstanding"
    PARTIAL = "partially-returned"
    COMPLETE = "complete"


class ReorderEntry:
    __slots__ = ("txn", "axi_id", "rob_idx", "dst", "beats", "seq",
                 "arrived", "pushed", "delivered", "buffer")

    def __init__(self, txn: AxiTransaction, rob_idx: int, beats: int, seq: int):
        self.txn = txn
        self.axi_id = txn.axi_id
        self.rob_idx = rob_idx
        self.dst = txn.dst
        self.beats = beats
        self.seq = seq
        self.arrived = 0
        # beats handed towards the AXI side, directly or from the ROB
        self.pushed = 0
        self.delivered = 0
        self.buffer: List[int] = []

    @property
    def state(self) -> EntryState:
        if self.arrived == 0:
            return EntryState.OUTSTANDING
        if self.arrived < self.beats:
            return EntryState.PARTIAL
        return EntryState.COMPLETE

    def __repr__(self) -> str:
        return (f"ReorderEntry(id={self.axi_id} rob={self.rob_idx} dst={self.dst} "
                f"{self.arrived}/{self.beats} pushed={self.pushed})")


class Action(Enum):
    FORWARD = "forward"
    BUFFER = "buffer"


@dataclass
class ResponseDecision:
    action: Action
    # ROB slot the beat was written to, when buffered
    slot: Optional[int]
    # beats handed to the AXI side by this arrival, in delivery order
    emitted: List[Tuple[ReorderEntry, int]] = field(default_factory=list)

    @property
    def released(self) -> List[Tuple[ReorderEntry, int]]:
        return self.emitted[1:] if self.action is Action.FORWARD else list(self.emitted)


class ReorderTable:
    """Outstanding transactions of one (bus, read/write) direction, queued per AXI ID.

    With ``bypass`` on, a beat skips the ROB when its transaction is the
    oldest for its ID, or when every older transaction of that ID went to
    the same destination (deterministic routing keeps those in order).
    With ``bypass`` off every transaction is buffered completely and
    released once it is the oldest.
    """

    def __init__(self, bypass: bool = True):
        self.bypass = bypass
        self.queues: Dict[int, Deque[ReorderEntry]] = {}
        self.by_rob: Dict[int, ReorderEntry] = {}
        self._seq: Dict[int, int] = {}
        self.forwarded = 0
        self.buffered = 0

    def __len__(self) -> int:
        return len(self.by_rob)

    def add(self, txn: AxiTransaction, rob_idx: int, beats: int) -> ReorderEntry:
        if rob_idx in self.by_rob:
            raise ProtocolError(f"ROB index {rob_idx} already in flight")
        seq = self._seq.get(txn.axi_id, 0)
        self._seq[txn.axi_id] = seq + 1
        entry = ReorderEntry(txn, rob_idx, beats, seq)
        self.by_rob[rob_idx] = entry
        self.queues.setdefault(txn.axi_id, deque()).append(entry)
        return entry

    def retire(self, entry: ReorderEntry) -> None:
        if self.by_rob.pop(entry.rob_idx, None) is not entry:
            raise ProtocolError(f"retiring unknown entry {entry!r}")

    def _may_forward(self, entry: ReorderEntry, queue: Deque[ReorderEntry]) -> bool:
        if queue[0] is entry:
            return True
        dst = entry.dst
        for older in queue:
            if older is entry:
                return True
            if older.dst != dst:
                return False
            if older.pushed != older.beats:
                raise ProtocolError(f"same-destination bypass for {entry!r} while older {older!r} "
                                    "is still incomplete; routing is not order preserving")
        raise ProtocolError(f"{entry!r} missing from its ID queue")

    def on_response(self, flit: Flit) -> ResponseDecision:
        h = flit.header
        entry = self.by_rob.get(h.rob_idx)
        if entry is None:
            raise ProtocolError(f"response for unknown ROB index {h.rob_idx}: {flit!r}")
        if entry.arrived >= entry.beats:
            raise ProtocolError(f"duplicate response beat for {entry!r}")
        if h.axi_id != entry.axi_id:
            raise ProtocolError(f"AXI ID {h.axi_id} does not match entry {entry!r}")
        beat = entry.arrived
        entry.arrived += 1
        queue = self.queues[entry.axi_id]
        if self.bypass and entry.pushed == beat and self._may_forward(entry, queue):
            entry.pushed += 1
            decision = ResponseDecision(Action.FORWARD, None, [(entry, beat)])
            self.forwarded += 1
        else:
            entry.buffer.append(beat)
            decision = ResponseDecision(Action.BUFFER, entry.rob_idx + beat)
            self.buffered += 1
        if queue[0] is entry:
            self._release(queue, decision.emitted)
        return decision

    def _release(self, queue: Deque[ReorderEntry], emitted: List[Tuple[ReorderEntry, int]]) -> None:
        while queue:
            head = queue[0]
            if head.buffer:
                if not (self.bypass or head.arrived == head.beats):
                    return
                emitted.extend((head, b) for b in head.buffer)
                head.pushed += len(head.buffer)
                head.buffer.clear()
            if head.pushed < head.beats:
                return
            queue.popleft()


@dataclass(frozen=True)
class NiConfig:
    node: Coord = (0, 0)
    wide_rob_bytes: int = 8192
    narrow_rob_bytes: int = 2048
    b_table_entries: int = 64
    # outstanding transactions tracked per (bus, direction)
    reorder_table_entries: int = 64
    internal_latency_cycles: int = 9
    routing: str = "xy"
    bypass: bool = True
    variant: Variant = Variant.NARROW_WIDE
    # test knob: probability that the NI refuses a flit from the network in a cycle
    eject_stall_prob: float = 0.0
    # keep (cycle, rob_free_bytes, outstanding) rows whenever occupancy changes
    record_occupancy: bool = False

    def __post_init__(self):
        if self.internal_latency_cycles < 0:
            raise ConfigurationError("internal_latency_cycles must be >= 0")
        if self.reorder_table_entries < 1:
            raise ConfigurationError("reorder table needs at least one entry")
        if not 0.0 <= self.eject_stall_prob < 1.0:
            raise ConfigurationError("eject_stall_prob must be in [0, 1)")


class _Arbiter:
    """Round-robin injection arbiter for one outgoing channel, packet-locked."""

    __slots__ = ("channel", "link", "sources", "lock", "held", "rr", "grant")

    def __init__(self, channel: ChannelKind, sources: List[Deque]):
        self.channel = channel
        self.link: Optional[Link] = None
        self.sources = sources
        self.lock: Optional[int] = None
        self.held: Optional[int] = None
        self.rr = len(sources) - 1
        self.grant: Optional[int] = None


class NetworkInterface(Component):
    def __init__(self, cfg: NiConfig, name: Optional[str] = None, metrics=None,
                 rng: Optional[random.Random] = None):
        self.cfg = cfg
        self.node = cfg.node
        self.name = name or f"ni{cfg.node}"
        self.variant = cfg.variant
        self.chmap = channel_map(cfg.variant)
        self.metrics = metrics
        self.initiator = None
        self.memory = None
        self.clock = None  # kernel, for per-cycle random backpressure
        self._rng = rng or random.Random(0)
        self._stall_p = cfg.eject_stall_prob
        self._stall_cycle = -1
        self._stalled = False

        self.rob = {Bus.NARROW: RobAllocator(cfg.narrow_rob_bytes, Bus.NARROW.beat_bytes),
                    Bus.WIDE: RobAllocator(cfg.wide_rob_bytes, Bus.WIDE.beat_bytes)}
        self.btab = {bus: RobAllocator(cfg.b_table_entries, 1) for bus in BUSES}
        self.tables = {(bus, kind): ReorderTable(cfg.bypass) for bus in BUSES for kind in TxnKind}

        # (ready cycle, flit) queues towards the network
        self.req_q: Dict[Tuple[Bus, ChannelKind], Deque] = {}
        self.rsp_q: Dict[Tuple[Bus, AxiMsg], Deque] = {}
        # (ready cycle, entry, beat) queues towards the AXI side, one per response channel
        self.axi_q: Dict[Tuple[Bus, AxiMsg], Deque] = {
            (bus, msg): deque() for bus in BUSES for msg in (AxiMsg.R, AxiMsg.B)}
        self.arbiters: Dict[ChannelKind, _Arbiter] = {}
        for ch in channels_used(cfg.variant):
            sources = []
            for bus in BUSES:
                if any(self.chmap[bus, m] == ch for m in (AxiMsg.AR, AxiMsg.AW, AxiMsg.W)):
                    q = self.req_q[bus, ch] = deque()
                    sources.append(q)
            for bus in BUSES:
                for msg in (AxiMsg.R, AxiMsg.B):
                    if self.chmap[bus, msg] == ch:
                        q = self.rsp_q[bus, msg] = deque()
                        sources.append(q)
            self.arbiters[ch] = _Arbiter(ch, sources)
        self._queues = list(self.req_q.values()) + list(self.rsp_q.values()) + list(self.axi_q.values())
        self._deliver: List[Tuple[Bus, AxiMsg]] = []

        self.occupancy: List[Tuple[int, int, int]] = []
        self._record = cfg.record_occupancy
        self.injected = 0
        self.ejected = 0
        self.rob_stalls = 0
        self.table_stalls = 0
        self.slot_misses = 0
        self.active = False

    # wiring -----------------------------------------------------------------

    def attach_output(self, channel: ChannelKind, link: Link) -> None:
        arb = self.arbiters.get(channel)
        if arb is None:
            raise ConfigurationError(f"{self.name}: {channel.label} unused in {self.variant.value}")
        if arb.link is not None:
            raise ConfigurationError(f"{self.name}: {channel.label} output connected twice")
        arb.link = link

    def attach_initiator(self, endpoint) -> None:
        self.initiator = endpoint
        self.depends_on = (endpoint,)
        self.active = True

    def attach_memory(self, memory) -> None:
        self.memory = memory

    # network side -----------------------------------------------------------

    def can_accept(self, port: int) -> bool:
        if not self._stall_p:
            return True
        cycle = self.clock.cycle
        if cycle != self._stall_cycle:
            self._stall_cycle = cycle
            self._stalled = self._rng.random() < self._stall_p
        return not self._stalled

    def accept(self, port: int, flit: Flit, cycle: int) -> None:
        self.ejected += 1
        if flit.header.msg_type.is_request:
            if self.memory is None:
                raise ProtocolError(f"{self.name} has no target port for {flit!r}")
            self.memory.on_request(flit, cycle)
        else:
            self.on_response_flit(flit, cycle)

    def on_response_flit(self, flit: Flit, cycle: int) -> ResponseDecision:
        mt = flit.header.msg_type
        bus, msg = mt.bus, mt.msg
        kind = TxnKind.READ if msg is AxiMsg.R else TxnKind.WRITE
        try:
            decision = self.tables[bus, kind].on_response(flit)
        except ProtocolError:
            self.slot_misses += 1
            raise
        if decision.emitted:
            q = self.axi_q[bus, msg]
            ready = cycle + 1
            for entry, beat in decision.emitted:
                q.append((ready, entry, beat))
        self.active = True
        return decision

    def enqueue_response(self, bus: Bus, msg: AxiMsg, ready: int, flit: Flit) -> None:
        q = self.rsp_q[bus, msg]
        if q and q[-1][0] > ready:
            raise ProtocolError(f"{self.name}: response queue {bus.value} {msg.value} out of order")
        q.append((ready, flit))
        self.active = True

    # initiator side ---------------------------------------------------------

    def inject_request(self, txn: AxiTransaction, cycle: int) -> bool:
        """Accept ``txn`` if its response storage can be reserved now."""
        bus = txn.bus
        if txn.kind is TxnKind.READ:
            alloc = self.rob[bus]
            n = txn.burst_len
        else:
            alloc = self.btab[bus]
            n = 1
        if n > alloc.num_slots:
            raise ConfigurationError(
                f"{self.name}: {txn.bytes} B {txn.kind.value} can never fit the "
                f"{alloc.capacity_bytes} B {bus.value} response storage")
        table = self.tables[bus, txn.kind]
        if len(table) >= self.cfg.reorder_table_entries:
            self.table_stalls += 1
            return False
        base = alloc.allocate(n)
        if base is None:
            self.rob_stalls += 1
            return False
        table.add(txn, base, n)

        src, dst, axi_id = self.node, txn.dst, txn.axi_id
        chmap = self.chmap
        if txn.kind is TxnKind.READ:
            q = self.req_q[bus, chmap[bus, AxiMsg.AR]]
            q.append((cycle, make_flit(bus, AxiMsg.AR, src=src, dst=dst, rob_idx=base,
                                       axi_id=axi_id, payload=txn.burst_len)))
        else:
            q = self.req_q[bus, chmap[bus, AxiMsg.AW]]
            q.append((cycle, make_flit(bus, AxiMsg.AW, src=src, dst=dst, rob_idx=base,
                                       axi_id=axi_id, payload=txn.burst_len)))
            q = self.req_q[bus, chmap[bus, AxiMsg.W]]
            last = txn.burst_len - 1
            for i in range(txn.burst_len):
                q.append((cycle, make_flit(bus, AxiMsg.W, src=src, dst=dst, rob_idx=base,
                                           axi_id=axi_id, last=i == last, payload=i)))
        return True

    def rob_free_bytes(self) -> int:
        return sum(a.free_bytes for a in self.rob.values())

    def outstanding(self) -> int:
        return sum(len(t) for t in self.tables.values())

    # kernel hooks -----------------------------------------------------------

    def propose(self, cycle: int) -> None:
        ep = self.initiator
        if ep is not None:
            offers = ep.offers
            for bus in BUSES:
                txn = offers[bus]
                if txn is not None and self.inject_request(txn, cycle):
                    ep.take(bus, cycle)
            ready = ep.axi_ready
            for key, q in self.axi_q.items():
                if q and q[0][0] <= cycle and ready[key]:
                    self._deliver.append(key)
        for arb in self.arbiters.values():
            if arb.link is not None:
                self._arbitrate(arb, cycle)

    def _arbitrate(self, arb: _Arbiter, cycle: int) -> None:
        sources = arb.sources
        if arb.held is not None:
            s = arb.held
        elif arb.lock is not None:
            s = arb.lock
            q = sources[s]
            if not q or q[0][0] > cycle:
                return
        else:
            n = len(sources)
            s = None
            for k in range(1, n + 1):
                idx = (arb.rr + k) % n
                q = sources[idx]
                if q and q[0][0] <= cycle:
                    s = idx
                    break
            if s is None:
                return
        arb.grant = s
        arb.link.offer(sources[s][0][1])

    def commit(self, cycle: int) -> None:
        if self._deliver:
            ep = self.initiator
            for key in self._deliver:
                _, entry, beat = self.axi_q[key].popleft()
                entry.delivered += 1
                txn = entry.txn
                ep.deliver(txn, beat, cycle)
                if key[0] is Bus.WIDE and key[1] is AxiMsg.R and self.metrics is not None:
                    self.metrics.wide_delivered(cycle, Bus.WIDE.beat_bytes, self.node)
                if entry.delivered == entry.beats:
                    bus = txn.bus
                    if txn.kind is TxnKind.READ:
                        self.rob[bus].free(entry.rob_idx)
                    else:
                        self.btab[bus].free(entry.rob_idx)
                    self.tables[bus, txn.kind].retire(entry)
                    ep.complete(txn, cycle)
            self._deliver.clear()
        for arb in self.arbiters.values():
            s = arb.grant
            if s is None:
                continue
            arb.grant = None
            if arb.link.fired:
                flit = arb.sources[s].popleft()[1]
                arb.held = None
                arb.lock = None if flit.header.last else s
                arb.rr = s
                self.injected += 1
                if self.metrics is not None and flit.header.msg_type.value in WIDE_DATA:
                    self.metrics.wide_injected(cycle, flit.header.dst_id)
            else:
                arb.held = s
        if self._record:
            row = (self.rob_free_bytes(), self.outstanding())
            if not self.occupancy or self.occupancy[-1][1:] != row:
                self.occupancy.append((cycle,) + row)
        ep = self.initiator
        self.active = (any(self._queues)
                       or (ep is not None and ep.active))

    def in_flight(self) -> int:
        return 0

    def drained(self) -> bool:
        return not any(self._queues) and self.outstanding() == 0
