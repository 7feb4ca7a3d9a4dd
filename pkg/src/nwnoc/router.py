"""
Input-buffered wormhole router with configurable radix.

The router forwards flits based only on the destination in the header and
never reorders flits of one input->output flow. Output ports are claimed
by a wormhole lock from a granted non-last flit until the matching last
flit has left.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Deque, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

from .errors import ConfigurationError, KernelError, RoutingError
from .kernel import Component, Link, Terminator
from .protocol import ChannelKind, Coord, Flit


class Port(IntEnum):
    LOCAL = 0
    NORTH = 1
    EAST = 2
    SOUTH = 3
    WEST = 4

    def opposite(self) -> "Port":
        return _OPPOSITE[self]

    @property
    def delta(self) -> Tuple[int, int]:
        return _DELTA[self]


_OPPOSITE = {Port.LOCAL: Port.LOCAL, Port.NORTH: Port.SOUTH, Port.SOUTH: Port.NORTH,
             Port.EAST: Port.WEST, Port.WEST: Port.EAST}
_DELTA = {Port.LOCAL: (0, 0), Port.NORTH: (0, 1), Port.EAST: (1, 0),
          Port.SOUTH: (0, -1), Port.WEST: (-1, 0)}

XY = "xy"
TABLE = "table"


@dataclass(frozen=True)
class RouterConfig:
    num_ports: int = 5
    routing: str = XY
    table: Optional[Mapping[Coord, int]] = None
    input_fifo_depth: int = 2
    output_buffered: bool = False
    position: Optional[Coord] = None
    # mesh size; destinations outside it leave through the matching boundary port
    grid: Optional[Tuple[int, int]] = None
    # ports facing endpoints rather than routers; turn pruning does not apply to them
    endpoint_ports: FrozenSet[int] = field(default_factory=lambda: frozenset({Port.LOCAL}))
    output_fifo_depth: int = 2

    def __post_init__(self):
        if self.num_ports < 2:
            raise ConfigurationError("a router needs at least 2 ports")
        if self.routing not in (XY, TABLE):
            raise ConfigurationError(f"unknown routing mode {self.routing!r}")
        if self.routing == XY:
            if self.position is None:
                raise ConfigurationError("XY routing requires a grid position")
            if self.num_ports != 5:
                raise ConfigurationError("XY routing requires the 5-port mesh router")
        if self.routing == TABLE and self.table is None:
            raise ConfigurationError("table routing requires a route table")
        if self.input_fifo_depth < 1 or self.output_fifo_depth < 1:
            raise ConfigurationError("FIFO depths must be >= 1")

    @property
    def latency(self) -> int:
        """Zero-load cycles from input transfer to output transfer."""
        return 2 if self.output_buffered else 1


def route(cfg: RouterConfig, dst: Coord) -> int:
    """Output port for a flit headed to ``dst``.

    XY resolves X completely before Y. With ``cfg.grid`` set, a destination
    just outside the mesh is steered to its attachment router first and
    then leaves through the boundary port facing it.
    """
    if cfg.routing == TABLE:
        try:
            return cfg.table[dst]
        except KeyError:
            raise RoutingError(f"no route to {dst} in table") from None
    x, y = cfg.position
    dx, dy = dst
    if cfg.grid is not None:
        w, h = cfg.grid
        cx = 0 if dx < 0 else (w - 1 if dx >= w else dx)
        cy = 0 if dy < 0 else (h - 1 if dy >= h else dy)
    else:
        cx, cy = dx, dy
    if cx != x:
        return Port.EAST if cx > x else Port.WEST
    if cy != y:
        return Port.NORTH if cy > y else Port.SOUTH
    if dx < cx:
        return Port.WEST
    if dx > cx:
        return Port.EAST
    if dy < cy:
        return Port.SOUTH
    if dy > cy:
        return Port.NORTH
    return Port.LOCAL


def connection_allowed(cfg: RouterConfig, in_port: int, out_port: int) -> bool:
    """Whether the switch implements the ``in_port -> out_port`` connection.

    Loopbacks are always removed. Under XY routing a flit that travelled
    along Y never turns back into X between two routers.
    """
    if in_port == out_port:
        return False
    if cfg.routing != XY:
        return True
    eps = cfg.endpoint_ports
    if in_port in eps or out_port in eps:
        return True
    return not (in_port in (Port.NORTH, Port.SOUTH) and out_port in (Port.EAST, Port.WEST))


def arbitrate(requests: Mapping[int, int], locks: Sequence[Optional[int]],
              rr_state: Sequence[int], num_ports: Optional[int] = None) -> Dict[int, int]:
    """Round-robin switch allocation.

    ``requests`` maps input port -> requested output port, ``locks[o]`` is
    the input owning output ``o`` (or None) and ``rr_state[o]`` the input
    granted last on ``o``. Returns output -> granted input. The caller moves
    ``rr_state`` only when a grant actually transfers.
    """
    n = num_ports if num_ports is not None else len(locks)
    by_output: Dict[int, List[int]] = {}
    for i, o in requests.items():
        by_output.setdefault(o, []).append(i)
    grants: Dict[int, int] = {}
    for o, inputs in by_output.items():
        owner = locks[o]
        if owner is not None:
            if owner in inputs:
                grants[o] = owner
            continue
        last = rr_state[o]
        grants[o] = min(inputs, key=lambda i: (i - last - 1) % n)
    return grants


class Router(Component):
    """One router of one physical channel network."""

    def __init__(self, cfg: RouterConfig, name: str = "router",
                 channel: Optional[ChannelKind] = None):
        self.cfg = cfg
        self.name = name
        self.channel = channel
        n = cfg.num_ports
        self.num_ports = n
        self.depth = cfg.input_fifo_depth
        # entries are (flit, output port)
        self.inputs: List[Deque[Tuple[Flit, int]]] = [deque() for _ in range(n)]
        self.out_links: List[Optional[Link]] = [None] * n
        self.locks: List[Optional[int]] = [None] * n
        self.rr: List[int] = [n - 1] * n
        # input currently offered on an output link but not yet accepted
        self.held: List[Optional[int]] = [None] * n
        self.out_fifos: List[Deque[Flit]] = [deque() for _ in range(n)]
        self.out_depth = cfg.output_fifo_depth
        self.buffered = cfg.output_buffered
        self._routes: Dict[Coord, int] = {}
        self._grants: List[Tuple[int, int, Optional[Link]]] = []
        self._sends: List[Tuple[int, Link]] = []
        self.forwarded = 0
        self.active = False

    def attach_output(self, port: int, link: Link) -> None:
        if self.out_links[port] is not None:
            raise ConfigurationError(f"{self.name}: output {port} connected twice")
        self.out_links[port] = link

    def can_accept(self, port: int) -> bool:
        return len(self.inputs[port]) < self.depth

    def accept(self, port: int, flit: Flit, cycle: int) -> None:
        fifo = self.inputs[port]
        if len(fifo) >= self.depth:
            raise KernelError(f"{self.name}: input {port} FIFO overflow at cycle {cycle}")
        dst = flit.header.dst_id
        out = self._routes.get(dst)
        if out is None:
            out = route(self.cfg, dst)
            link = self.out_links[out] if out < self.num_ports else None
            if link is None or isinstance(link.dst, Terminator):
                raise RoutingError(f"{self.name}: {dst} routes to unconnected port {out}")
            self._routes[dst] = out
        if not connection_allowed(self.cfg, port, out):
            raise RoutingError(f"{self.name}: pruned connection {port}->{out} for {flit!r}")
        fifo.append((flit, out))

    def in_flight(self) -> int:
        return sum(len(f) for f in self.inputs) + sum(len(f) for f in self.out_fifos)

    def _switch_requests(self) -> Dict[int, int]:
        return {i: fifo[0][1] for i, fifo in enumerate(self.inputs) if fifo}

    def propose(self, cycle: int) -> None:
        if self.buffered:
            self._propose_buffered()
            return
        requests = self._switch_requests()
        if not requests:
            return
        held = self.held
        grants = {}
        pending = {}
        for i, o in requests.items():
            h = held[o]
            if h is None:
                pending[i] = o
            elif h == i:
                # a stalled offer is repeated unchanged
                grants[o] = i
        if pending:
            grants.update(arbitrate(pending, self.locks, self.rr, self.num_ports))
        out_links = self.out_links
        for o, i in grants.items():
            link = out_links[o]
            link.offer(self.inputs[i][0][0])
            self._grants.append((i, o, link))

    def _propose_buffered(self) -> None:
        out_links = self.out_links
        for o, fifo in enumerate(self.out_fifos):
            if fifo:
                link = out_links[o]
                link.offer(fifo[0])
                self._sends.append((o, link))
        requests = self._switch_requests()
        if not requests:
            return
        out_fifos = self.out_fifos
        depth = self.out_depth
        room = {i: o for i, o in requests.items() if len(out_fifos[o]) < depth}
        for o, i in arbitrate(room, self.locks, self.rr, self.num_ports).items():
            self._grants.append((i, o, None))

    def commit(self, cycle: int) -> None:
        inputs = self.inputs
        if self.buffered:
            for o, link in self._sends:
                if link.fired:
                    self.out_fifos[o].popleft()
                    self.forwarded += 1
            self._sends.clear()
            for i, o, _ in self._grants:
                flit = inputs[i].popleft()[0]
                self.out_fifos[o].append(flit)
                self.locks[o] = None if flit.header.last else i
                self.rr[o] = i
        else:
            held = self.held
            for i, o, link in self._grants:
                if link.fired:
                    flit = inputs[i].popleft()[0]
                    self.locks[o] = None if flit.header.last else i
                    self.rr[o] = i
                    held[o] = None
                    self.forwarded += 1
                else:
                    held[o] = i
        self._grants.clear()
        self.active = any(inputs) or any(self.out_fifos)
