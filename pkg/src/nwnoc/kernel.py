"""
Cycle-driven simulation kernel.

Each cycle runs in two phases. In ``propose`` every active component looks
at its own committed state (and at the published outputs of the components
it declared in ``depends_on``) and offers flits on its outgoing links. The
kernel then resolves every offered link (transfer iff valid and ready) and
calls ``commit`` so components can update state from the handshake results.

Readiness of a link is a function of the receiver's committed state only,
because every receiver input is buffered. Combinational dependencies are
therefore limited to explicit ``depends_on`` edges, which the kernel orders
topologically and rejects if they form a loop.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import ConfigurationError, KernelError
from .protocol import ChannelKind, Flit

TRACE_COLUMNS = ("cycle", "link", "channel", "src", "dst", "msg_type", "rob_idx", "axi_id", "last")


@dataclass(frozen=True)
class SimConfig:
    max_cycles: int = 100_000
    seed: int = 0
    record_trace: bool = False
    # per-cycle stability and conservation assertions
    debug: bool = False

    def __post_init__(self):
        if self.max_cycles <= 0:
            raise ConfigurationError("max_cycles must be > 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")


class Component:
    """Base class for everything the kernel ticks.

    Subclasses override ``propose``/``commit``. A component that returns
    ``active = False`` is skipped until a flit is pushed into it or it is
    woken explicitly.
    """

    name: str = "component"
    depends_on: Sequence["Component"] = ()
    active: bool = True
    is_source: bool = False

    def propose(self, cycle: int) -> None:
        pass

    def commit(self, cycle: int) -> None:
        pass

    def can_accept(self, port: int) -> bool:
        return False

    def accept(self, port: int, flit: Flit, cycle: int) -> None:
        raise KernelError(f"{self.name} does not accept flits (port {port})")

    def drained(self) -> bool:
        return True

    def in_flight(self) -> int:
        """Flits currently buffered inside this component (network components only)."""
        return 0


class Terminator(Component):
    """Explicit termination for an unconnected output port: never ready."""

    def __init__(self, name: str):
        self.name = name
        self.active = False

    def can_accept(self, port: int) -> bool:
        return False


class Link:
    """Point-to-point valid/ready connection from one component port to another."""

    __slots__ = ("link_id", "name", "src", "src_port", "dst", "dst_port", "channel",
                 "sent", "received", "payload_bits", "flit", "ready", "fired",
                 "stalled", "_kernel")

    def __init__(self, kernel: "Kernel", link_id: int, src: Component, src_port: int,
                 dst: Component, dst_port: int, channel: Optional[ChannelKind], name: str):
        self._kernel = kernel
        self.link_id = link_id
        self.name = name
        self.src = src
        self.src_port = src_port
        self.dst = dst
        self.dst_port = dst_port
        self.channel = channel
        self.sent = 0
        self.received = 0
        self.payload_bits = 0
        self.flit: Optional[Flit] = None
        self.ready = False
        self.fired = False
        self.stalled: Optional[Flit] = None

    def offer(self, flit: Flit) -> None:
        """Assert valid with ``flit`` for the current cycle."""
        self.flit = flit
        self.fired = False
        self.ready = self.dst.can_accept(self.dst_port)
        self._kernel._offered.append(self)

    def __repr__(self) -> str:
        return f"Link({self.link_id}, {self.name})"


@dataclass
class RunReport:
    """What the kernel itself observed during one run."""
    cycles: int
    transfers: int
    drained: bool
    timed_out: bool
    channel_flits: Dict[ChannelKind, int] = field(default_factory=dict)
    channel_payload_bits: Dict[ChannelKind, int] = field(default_factory=dict)
    link_counts: Dict[int, Tuple[int, int]] = field(default_factory=dict)
    trace: List[tuple] = field(default_factory=list)
    digest: Optional[str] = None

    def trace_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        writer.writerows(self.trace)
        return buf.getvalue()


class Kernel:
    """Deterministic single-threaded simulation engine for one instance."""

    def __init__(self):
        self._components: List[Component] = []
        self._order: List[Component] = []
        self._links: List[Link] = []
        self._offered: List[Link] = []
        self._started = False
        self.cycle = 0
        # extra per-cycle checks run in debug mode, called with the cycle number
        self.invariants: List[Callable[[int], None]] = []

    @property
    def components(self) -> Tuple[Component, ...]:
        return tuple(self._components)

    @property
    def links(self) -> Tuple[Link, ...]:
        return tuple(self._links)

    def register(self, component: Component) -> int:
        if self._started:
            raise ConfigurationError(f"cannot register {component.name}: simulation already started")
        if any(c is component for c in self._components):
            raise ConfigurationError(f"{component.name} registered twice")
        self._components.append(component)
        return len(self._components) - 1

    def register_all(self, components: Iterable[Component]) -> List[int]:
        return [self.register(c) for c in components]

    def connect(self, src: Component, src_port: int, dst: Component, dst_port: int,
                channel: Optional[ChannelKind] = None, name: Optional[str] = None) -> Link:
        if self._started:
            raise ConfigurationError("cannot connect links after the simulation started")
        link = Link(self, len(self._links), src, src_port, dst, dst_port, channel,
                    name or f"{src.name}.{src_port}->{dst.name}.{dst_port}")
        self._links.append(link)
        return link

    def _evaluation_order(self) -> List[Component]:
        index = {id(c): i for i, c in enumerate(self._components)}
        graph = {}
        for comp in self._components:
            deps = []
            for dep in comp.depends_on:
                if id(dep) not in index:
                    raise ConfigurationError(f"{comp.name} depends on unregistered {dep.name}")
                deps.append(index[id(dep)])
            graph[index[id(comp)]] = deps
        try:
            order = list(TopologicalSorter(graph).static_order())
        except CycleError as exc:
            loop = " -> ".join(self._components[i].name for i in exc.args[1])
            raise KernelError(f"combinational loop in valid/ready propagation: {loop}") from None
        return [self._components[i] for i in order]

    def run(self, config: SimConfig) -> RunReport:
        if self._started:
            raise KernelError("a kernel instance runs exactly once")
        self._order = self._evaluation_order()
        self._started = True
        if not self._components:
            return RunReport(cycles=0, transfers=0, drained=True, timed_out=False)

        order = self._order
        sources = [c for c in order if c.is_source]
        offered = self._offered
        record = config.record_trace
        debug = config.debug
        trace: List[tuple] = []
        digest = hashlib.sha256() if record else None
        transfers = 0
        stalled_prev: List[Link] = []
        drained = False
        cycle = 0

        for cycle in range(config.max_cycles):
            self.cycle = cycle
            for comp in order:
                if comp.active:
                    comp.propose(cycle)

            if debug:
                self._check_stability(offered, stalled_prev)
                stalled_prev = []
            for link in offered:
                flit = link.flit
                if link.ready:
                    link.fired = True
                    link.sent += 1
                    link.payload_bits += flit.payload_bits
                    dst = link.dst
                    dst.accept(link.dst_port, flit, cycle)
                    link.received += 1
                    dst.active = True
                    link.stalled = None
                    transfers += 1
                    if record:
                        h = flit.header
                        row = (cycle, link.link_id,
                               link.channel.label if link.channel is not None else "",
                               "%d:%d" % h.src_id, "%d:%d" % h.dst_id, h.msg_type.value,
                               h.rob_idx, h.axi_id, int(h.last))
                        trace.append(row)
                        digest.update(repr(row).encode())
                elif debug:
                    link.stalled = flit
                    stalled_prev.append(link)

            for comp in order:
                if comp.active:
                    comp.commit(cycle)
            offered.clear()

            if debug:
                self._check_conservation(cycle)
            if sources and all(s.drained() for s in sources):
                drained = True
                break

        cycles = cycle + 1
        if not sources:
            drained = True
        report = RunReport(
            cycles=cycles,
            transfers=transfers,
            drained=drained,
            timed_out=not drained,
            trace=trace,
            digest=digest.hexdigest() if digest is not None else None,
        )
        for link in self._links:
            report.link_counts[link.link_id] = (link.sent, link.received)
            if link.channel is not None:
                ch = link.channel
                report.channel_flits[ch] = report.channel_flits.get(ch, 0) + link.sent
                report.channel_payload_bits[ch] = (
                    report.channel_payload_bits.get(ch, 0) + link.payload_bits)
        return report

    def _check_stability(self, offered: List[Link], stalled_prev: List[Link]) -> None:
        offered_ids = {id(link) for link in offered}
        for link in stalled_prev:
            if id(link) not in offered_ids:
                raise KernelError(f"{link.name}: valid retracted before transfer at cycle {self.cycle}")
            if link.flit is not link.stalled:
                raise KernelError(f"{link.name}: payload changed while stalled at cycle {self.cycle}")
        if len(offered_ids) != len(offered):
            raise KernelError(f"a link was driven twice in cycle {self.cycle}")

    def _check_conservation(self, cycle: int) -> None:
        for link in self._links:
            if link.sent != link.received:
                raise KernelError(f"{link.name}: {link.sent} flits sent but {link.received} received "
                                  f"at cycle {cycle}")
        for check in self.invariants:
            check(cycle)

    def in_flight(self) -> int:
        return sum(c.in_flight() for c in self._components)
