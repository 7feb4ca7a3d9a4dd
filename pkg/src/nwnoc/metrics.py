"""Run statistics: latency samples, effective wide bandwidth and health flags."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .axi import TxnKind, oracle_check_order
from .protocol import Bus, ChannelKind, Coord

WIDE_BEAT_BYTES = Bus.WIDE.beat_bytes


class _Flow:
    __slots__ = ("first", "last", "bytes")

    def __init__(self):
        self.first: Optional[int] = None
        self.last: Optional[int] = None
        self.bytes = 0

    @property
    def window(self) -> int:
        if self.first is None or self.last is None:
            return 0
        return self.last - self.first


class Metrics:
    """Per-instance counters fed by the NIs and memory endpoints while a run is in progress.

    Wide data is tracked per receiving node, so a bidirectional experiment
    reports the mean utilisation of its two receivers rather than a sum.
    """

    def __init__(self):
        self.flows: Dict[Coord, _Flow] = {}
        self.wide_beats_injected = 0

    def _flow(self, node: Coord) -> _Flow:
        f = self.flows.get(node)
        if f is None:
            f = self.flows[node] = _Flow()
        return f

    def wide_injected(self, cycle: int, dst: Coord) -> None:
        f = self._flow(dst)
        if f.first is None:
            f.first = cycle
        self.wide_beats_injected += 1

    def wide_delivered(self, cycle: int, nbytes: int, node: Coord) -> None:
        f = self._flow(node)
        f.last = cycle
        f.bytes += nbytes

    @property
    def wide_bytes(self) -> int:
        return sum(f.bytes for f in self.flows.values())

    @property
    def window(self) -> int:
        """Longest per-receiver window."""
        return max((f.window for f in self.flows.values()), default=0)

    def effective_wide_bw(self) -> float:
        """Delivered wide payload over window capacity in percent, averaged over receivers."""
        utils = [min(100.0, 100.0 * f.bytes / (f.window * WIDE_BEAT_BYTES))
                 for f in self.flows.values() if f.window > 0]
        return statistics.fmean(utils) if utils else 0.0


def percentile(samples: Sequence[float], q: float) -> float:
    """Linear-interpolation percentile (the common "inclusive" definition); ``q`` in [0, 100]."""
    xs = sorted(samples)
    if not xs:
        return 0.0
    pos = (len(xs) - 1) * min(max(q, 0.0), 100.0) / 100.0
    lo = int(pos)
    hi = min(lo + 1, len(xs) - 1)
    return float(xs[lo] + (xs[hi] - xs[lo]) * (pos - lo))


@dataclass
class LatencyStats:
    count: int = 0
    mean: float = 0.0
    median: float = 0.0
    p99: float = 0.0

    @classmethod
    def of(cls, samples: Sequence[int]) -> "LatencyStats":
        if not samples:
            return cls()
        return cls(len(samples), statistics.fmean(samples), float(statistics.median(samples)),
                   percentile(samples, 99))


@dataclass
class SimReport:
    cycles: int = 0
    latencies: Dict[Bus, List[int]] = field(default_factory=lambda: {Bus.NARROW: [], Bus.WIDE: []})
    narrow: LatencyStats = field(default_factory=LatencyStats)
    wide: LatencyStats = field(default_factory=LatencyStats)
    channel_payload_bytes: Dict[ChannelKind, int] = field(default_factory=dict)
    # link-cycles that carried a flit, summed over every link of the channel
    channel_busy_cycles: Dict[ChannelKind, int] = field(default_factory=dict)
    effective_wide_bw: float = 0.0
    wide_window: int = 0
    wide_bytes: int = 0
    requested_read_bytes: int = 0
    delivered_read_bytes: int = 0
    rob_stalls: int = 0
    table_stalls: int = 0
    max_rob_fragments: int = 0
    completed: int = 0
    timeouts: int = 0
    order_violations: List[str] = field(default_factory=list)
    rob_leaks: List[str] = field(default_factory=list)
    # links whose sent and received flit counts differ at the end of the run
    unbalanced_links: List[str] = field(default_factory=list)
    # (ni, cycle, rob_free_bytes, outstanding) when occupancy recording was on
    occupancy: List[Tuple[str, int, int, int]] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return bool(self.timeouts or self.order_violations or self.rob_leaks or self.unbalanced_links)

    def summary(self) -> str:
        lines = [
            f"cycles                {self.cycles}",
            f"completed             {self.completed}",
            f"timeouts              {self.timeouts}",
            f"narrow latency mean   {self.narrow.mean:.2f} (median {self.narrow.median:.1f}, "
            f"p99 {self.narrow.p99:.1f}, n={self.narrow.count})",
            f"wide latency mean     {self.wide.mean:.2f} (median {self.wide.median:.1f}, "
            f"p99 {self.wide.p99:.1f}, n={self.wide.count})",
            f"effective wide BW     {self.effective_wide_bw:.2f} % over {self.wide_window} cycles",
            f"ROB / table stalls    {self.rob_stalls} / {self.table_stalls}",
            f"order violations      {len(self.order_violations)}",
        ]
        return "\n".join(lines)


def measure(mesh, run) -> SimReport:
    """Collect a :class:`SimReport` from a finished (or timed out) mesh run."""
    rep = SimReport(cycles=run.cycles)
    for ep in mesh.initiators.values():
        for rec in ep.records.values():
            txn = rec.txn
            if txn.kind is TxnKind.READ:
                rep.requested_read_bytes += txn.bytes
            if rec.completed < 0:
                rep.timeouts += 1
                continue
            rep.completed += 1
            rep.latencies[txn.bus].append(rec.latency)
        rep.delivered_read_bytes += ep.delivered_bytes
        rep.order_violations += [str(v) for v in oracle_check_order(ep.issue_log, ep.trace)]
    rep.narrow = LatencyStats.of(rep.latencies[Bus.NARROW])
    rep.wide = LatencyStats.of(rep.latencies[Bus.WIDE])

    for ch, bits in run.channel_payload_bits.items():
        rep.channel_payload_bytes[ch] = bits // 8
    rep.channel_busy_cycles = dict(run.channel_flits)

    m = mesh.metrics
    rep.effective_wide_bw = m.effective_wide_bw()
    rep.wide_window = m.window
    rep.wide_bytes = m.wide_bytes

    for lid, (sent, received) in run.link_counts.items():
        if sent != received:
            rep.unbalanced_links.append(f"link {lid}: {sent} sent, {received} received")

    drained = run.drained
    for ni in mesh.nis.values():
        rep.rob_stalls += ni.rob_stalls
        rep.table_stalls += ni.table_stalls
        rep.occupancy += [(ni.name,) + row for row in ni.occupancy]
        for bus, alloc in list(ni.rob.items()) + list(ni.btab.items()):
            rep.max_rob_fragments = max(rep.max_rob_fragments, alloc.fragments)
            if alloc.max_used_slots > alloc.num_slots:
                rep.rob_leaks.append(f"{ni.name} {bus.value}: occupancy above capacity")
            if drained and alloc.free_bytes != alloc.capacity_bytes:
                rep.rob_leaks.append(f"{ni.name} {bus.value}: {alloc.used_bytes} B still allocated "
                                     "after drain")
    return rep
