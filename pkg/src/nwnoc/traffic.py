"""
Traffic generators and endpoint models.

An :class:`InitiatorEndpoint` plays the AXI manager of a tile: it presents
transactions from a schedule on its narrow and wide buses and consumes the
response beats the NI hands back. A :class:`MemoryEndpoint` is the target:
single-ported per (bus, direction), fixed service latency, one response
beat per cycle.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Deque, Dict, List, Mapping, Optional, Sequence, Tuple

from .axi import AxiTransaction, DeliveryTrace, TxnKind
from .errors import ConfigurationError, ProtocolError
from .kernel import Component
from .protocol import BUSES, AxiMsg, Bus, Coord, Flit, make_flit


class Direction(Enum):
    UNIDIRECTIONAL = "one_dir"
    BIDIRECTIONAL = "two_dir"


DEFAULT_LEVELS = (0, 2, 4, 8, 16, 32, 64)


@dataclass(frozen=True)
class TrafficSpec:
    narrow_txn_count: int = 100
    wide_txn_count: int = 16
    wide_burst_len: int = 16
    interference_levels: Tuple[int, ...] = DEFAULT_LEVELS
    direction: Direction = Direction.UNIDIRECTIONAL
    # which class the interference level scales: "wide" (latency sweep) or "narrow" (bandwidth sweep)
    interference: str = "wide"
    source: Coord = (1, 1)
    target: Coord = (2, 1)
    seed: int = 0
    id_bits: int = 4

    def __post_init__(self):
        for name in ("narrow_txn_count", "wide_txn_count"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if not 1 <= self.wide_burst_len <= 64:
            raise ConfigurationError("wide_burst_len must be in 1..64")
        levels = tuple(self.interference_levels)
        if any(lv < 0 for lv in levels) or list(levels) != sorted(levels):
            raise ConfigurationError(f"interference levels must be ascending and >= 0: {levels}")
        if self.interference not in ("wide", "narrow"):
            raise ConfigurationError(f"interference must be 'wide' or 'narrow', not {self.interference!r}")
        if not 1 <= self.id_bits <= 16:
            raise ConfigurationError("id_bits must be in 1..16")

    def counts(self, level: Optional[int] = None) -> Tuple[int, int]:
        """(narrow, wide) transaction counts, with ``level`` replacing the interfering class."""
        narrow, wide = self.narrow_txn_count, self.wide_txn_count
        if level is not None:
            if self.interference == "wide":
                wide = level
            else:
                narrow = level
        return narrow, wide


def generate(spec: TrafficSpec, level: Optional[int] = None) -> List[AxiTransaction]:
    """Deterministic issue schedule for one sweep point.

    Narrow transactions are single-beat reads, wide ones are reads of
    ``wide_burst_len`` beats; every request is ready at cycle 0 and the
    initiator's outstanding limit paces them.
    """
    narrow, wide = spec.counts(level)
    if narrow == 0 and wide == 0:
        return []
    if spec.source == spec.target:
        raise ConfigurationError(f"source and target are both {spec.source}")
    rng = random.Random(spec.seed)
    pairs = [(spec.source, spec.target)]
    if spec.direction is Direction.BIDIRECTIONAL:
        pairs.append((spec.target, spec.source))
    n_ids = 1 << spec.id_bits
    out: List[AxiTransaction] = []
    for src, dst in pairs:
        for _ in range(narrow):
            out.append(AxiTransaction(src, rng.randrange(n_ids), TxnKind.READ, Bus.NARROW, dst,
                                      burst_len=1, uid=len(out)))
        for _ in range(wide):
            out.append(AxiTransaction(src, rng.randrange(n_ids), TxnKind.READ, Bus.WIDE, dst,
                                      burst_len=spec.wide_burst_len, uid=len(out)))
    return out


@dataclass
class TxnRecord:
    txn: AxiTransaction
    presented: int = -1
    accepted: int = -1
    completed: int = -1
    beats: int = 0

    @property
    def latency(self) -> int:
        return self.completed - self.presented


class InitiatorEndpoint(Component):
    """AXI manager of one tile; presents a fixed schedule on its two buses."""

    is_source = True

    def __init__(self, node: Coord, name: Optional[str] = None,
                 max_outstanding: Optional[Mapping[Bus, int]] = None,
                 stall_prob: float = 0.0, rng: Optional[random.Random] = None):
        if not 0.0 <= stall_prob < 1.0:
            raise ConfigurationError("stall_prob must be in [0, 1)")
        self.node = node
        self.name = name or f"init{node}"
        limits = dict(max_outstanding or {})
        self.limits = {bus: limits.get(bus, 1 << 30) for bus in BUSES}
        self.stall_prob = stall_prob
        self._rng = rng or random.Random(0)
        self.pending: Dict[Bus, Deque[AxiTransaction]] = {bus: deque() for bus in BUSES}
        self.offers: Dict[Bus, Optional[AxiTransaction]] = {bus: None for bus in BUSES}
        self.axi_ready: Dict[Tuple[Bus, AxiMsg], bool] = {
            (bus, msg): True for bus in BUSES for msg in (AxiMsg.R, AxiMsg.B)}
        self.outstanding = {bus: 0 for bus in BUSES}
        self.records: Dict[int, TxnRecord] = {}
        self.issue_log: List[AxiTransaction] = []
        self.trace = DeliveryTrace()
        self.delivered_bytes = 0
        self.active = False

    def load(self, txns: Sequence[AxiTransaction]) -> None:
        for txn in sorted(txns, key=lambda t: t.issue_cycle):
            if txn.initiator != self.node:
                raise ConfigurationError(f"{self.name} cannot issue {txn.initiator}'s transaction")
            if txn.uid in self.records:
                raise ConfigurationError(f"transaction uid {txn.uid} loaded twice")
            self.pending[txn.bus].append(txn)
            self.records[txn.uid] = TxnRecord(txn)
        self.active = any(self.pending.values())

    def propose(self, cycle: int) -> None:
        p = self.stall_prob
        rng = self._rng
        for bus in BUSES:
            if self.offers[bus] is None:
                q = self.pending[bus]
                if (q and q[0].issue_cycle <= cycle and self.outstanding[bus] < self.limits[bus]
                        and not (p and rng.random() < p)):
                    txn = q[0]
                    self.offers[bus] = txn
                    self.records[txn.uid].presented = cycle
        if p:
            ready = self.axi_ready
            for key in ready:
                ready[key] = rng.random() >= p

    def take(self, bus: Bus, cycle: int) -> AxiTransaction:
        """The NI accepted the transaction offered on ``bus`` this cycle."""
        txn = self.pending[bus].popleft()
        if self.offers[bus] is not txn:
            raise ProtocolError(f"{self.name}: NI took a transaction that was not offered")
        self.offers[bus] = None
        self.outstanding[bus] += 1
        self.records[txn.uid].accepted = cycle
        self.issue_log.append(txn)
        return txn

    def deliver(self, txn: AxiTransaction, beat: int, cycle: int) -> None:
        rec = self.records[txn.uid]
        if beat != rec.beats or rec.completed >= 0:
            raise ProtocolError(f"{self.name}: beat {beat} of txn {txn.uid} out of order "
                                f"(expected {rec.beats})")
        rec.beats += 1
        if txn.kind is TxnKind.READ:
            self.delivered_bytes += txn.beat_bytes

    def complete(self, txn: AxiTransaction, cycle: int) -> None:
        rec = self.records[txn.uid]
        if rec.beats != txn.response_beats:
            raise ProtocolError(f"{self.name}: txn {txn.uid} completed after {rec.beats} beats")
        rec.completed = cycle
        self.outstanding[txn.bus] -= 1
        self.trace.record(txn)

    def commit(self, cycle: int) -> None:
        self.active = bool(self.pending[Bus.NARROW] or self.pending[Bus.WIDE]
                           or self.outstanding[Bus.NARROW] or self.outstanding[Bus.WIDE])

    def drained(self) -> bool:
        return not (self.pending[Bus.NARROW] or self.pending[Bus.WIDE]
                    or self.outstanding[Bus.NARROW] or self.outstanding[Bus.WIDE])

    def incomplete(self) -> List[AxiTransaction]:
        return [r.txn for r in self.records.values() if r.completed < 0]


class _PendingWrite:
    __slots__ = ("burst_len", "beats")

    def __init__(self):
        self.burst_len: Optional[int] = None
        self.beats = 0


class MemoryEndpoint:
    """Target model behind an NI.

    Each (bus, AR/AW) port serves requests in arrival order. The first
    response beat is ready ``latency`` cycles after the request arrived
    (never earlier than the next cycle), later beats follow one per cycle.
    Requests are always accepted, so responses can never block requests.
    """

    def __init__(self, node: Coord, ni, latency: int, metrics=None):
        if latency < 0:
            raise ConfigurationError("memory latency must be >= 0")
        self.node = node
        self.ni = ni
        self.latency = latency
        self.metrics = metrics
        self.port_free: Dict[Tuple[Bus, AxiMsg], int] = {
            (bus, msg): 0 for bus in BUSES for msg in (AxiMsg.R, AxiMsg.B)}
        self.writes: Dict[Tuple[Coord, Bus, int], _PendingWrite] = {}
        self.reads_served = 0
        self.writes_served = 0
        self.bytes_written = 0
        ni.attach_memory(self)

    def _start(self, bus: Bus, msg: AxiMsg, cycle: int, beats: int) -> int:
        start = max(cycle + self.latency, cycle + 1, self.port_free[bus, msg])
        self.port_free[bus, msg] = start + beats
        return start

    def on_request(self, flit: Flit, cycle: int) -> None:
        h = flit.header
        mt = h.msg_type
        bus, msg = mt.bus, mt.msg
        if msg is AxiMsg.AR:
            n = flit.payload
            start = self._start(bus, AxiMsg.R, cycle, n)
            for i in range(n):
                rsp = make_flit(bus, AxiMsg.R, src=self.node, dst=h.src_id, rob_idx=h.rob_idx,
                                axi_id=h.axi_id, last=i == n - 1, payload=i)
                self.ni.enqueue_response(bus, AxiMsg.R, start + i, rsp)
            self.reads_served += 1
            return
        key = (h.src_id, bus, h.rob_idx)
        w = self.writes.get(key)
        if w is None:
            w = self.writes[key] = _PendingWrite()
        if msg is AxiMsg.AW:
            if w.burst_len is not None:
                raise ProtocolError(f"second AW for in-flight write {key}")
            w.burst_len = flit.payload
        elif msg is AxiMsg.W:
            if flit.payload != w.beats:
                raise ProtocolError(f"W beat {flit.payload} of {key} arrived out of order")
            w.beats += 1
            self.bytes_written += bus.beat_bytes
            if bus is Bus.WIDE and self.metrics is not None:
                self.metrics.wide_delivered(cycle, bus.beat_bytes, self.node)
            if w.burst_len is not None and w.beats > w.burst_len:
                raise ProtocolError(f"write {key} received more beats than announced")
        else:
            raise ProtocolError(f"memory at {self.node} received a response flit {flit!r}")
        if w.burst_len is not None and w.beats == w.burst_len:
            del self.writes[key]
            start = self._start(bus, AxiMsg.B, cycle, 1)
            rsp = make_flit(bus, AxiMsg.B, src=self.node, dst=h.src_id, rob_idx=h.rob_idx,
                            axi_id=h.axi_id, payload=0)
            self.ni.enqueue_response(bus, AxiMsg.B, start, rsp)
            self.writes_served += 1

    def idle(self) -> bool:
        return not self.writes
