"""
Mesh construction and analytic bandwidth figures.

Each tile holds one router per physical channel, an NI, an initiator
endpoint and a memory endpoint. Memory controllers may also sit just
outside the mesh edge, attached to the boundary port of the nearest router.
Coordinates grow east (x) and north (y); a boundary node has one coordinate
equal to -1 or to the mesh size.
"""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from .axi import AxiTransaction
from .errors import ConfigurationError, KernelError
from .kernel import Kernel, RunReport, SimConfig, Terminator
from .metrics import Metrics
from .ni import NetworkInterface, NiConfig
from .protocol import Bus, ChannelKind, Coord, Variant, channels_used
from .router import Port, Router, RouterConfig
from .traffic import InitiatorEndpoint, MemoryEndpoint

EDGE_PORTS = {"north": Port.NORTH, "south": Port.SOUTH, "east": Port.EAST, "west": Port.WEST}
DEFAULT_FREQUENCY_HZ = 1.23e9


@dataclass(frozen=True)
class MeshSpec:
    width: int = 4
    height: int = 4
    # (edge, index along that edge)
    boundary_memories: Tuple[Tuple[str, int], ...] = ()
    frequency_hz: float = DEFAULT_FREQUENCY_HZ

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigurationError(f"mesh must be at least 1x1, got {self.width}x{self.height}")
        if self.frequency_hz <= 0:
            raise ConfigurationError("frequency_hz must be > 0")
        object.__setattr__(self, "boundary_memories",
                           tuple((str(e).lower(), int(i)) for e, i in self.boundary_memories))
        seen = set()
        for edge, idx in self.boundary_memories:
            if edge not in EDGE_PORTS:
                raise ConfigurationError(f"unknown mesh edge {edge!r}")
            span = self.width if edge in ("north", "south") else self.height
            if not 0 <= idx < span:
                raise ConfigurationError(f"memory position {edge}:{idx} is off the mesh boundary "
                                         f"(edge has {span} ports)")
            if (edge, idx) in seen:
                raise ConfigurationError(f"two memories at {edge}:{idx}")
            seen.add((edge, idx))

    @property
    def tiles(self) -> List[Coord]:
        return [(x, y) for y in range(self.height) for x in range(self.width)]

    @property
    def boundary_ports(self) -> int:
        return 2 * (self.width + self.height)

    def attachment(self, edge: str, idx: int) -> Tuple[Coord, Coord, Port]:
        """(memory node, router it attaches to, router port facing it)."""
        w, h = self.width, self.height
        if edge == "west":
            return (-1, idx), (0, idx), Port.WEST
        if edge == "east":
            return (w, idx), (w - 1, idx), Port.EAST
        if edge == "south":
            return (idx, -1), (idx, 0), Port.SOUTH
        return (idx, h), (idx, h - 1), Port.NORTH

    @classmethod
    def with_all_boundary_memories(cls, width: int, height: int, **kw) -> "MeshSpec":
        mems = ([("west", i) for i in range(height)] + [("east", i) for i in range(height)]
                + [("south", i) for i in range(width)] + [("north", i) for i in range(width)])
        return cls(width, height, tuple(mems), **kw)


def parse_mesh_size(text: str) -> Tuple[int, int]:
    """``"7x7"`` -> (7, 7)."""
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigurationError(f"mesh size must look like 4x4, got {text!r}") from None
    return w, h


def peak_link_bandwidth(payload_bits_per_cycle: int = 512,
                        frequency_hz: float = DEFAULT_FREQUENCY_HZ,
                        duplex: bool = False) -> float:
    """Payload bits per second one link direction (or both, with ``duplex``) can carry."""
    if frequency_hz <= 0:
        raise ConfigurationError("frequency must be > 0")
    bps = payload_bits_per_cycle * frequency_hz
    return 2 * bps if duplex else bps


def boundary_bandwidth(spec: MeshSpec) -> float:
    """Aggregate duplex wide-link bandwidth over all boundary ports, in bytes per second."""
    duplex = peak_link_bandwidth(Bus.WIDE.data_bits, spec.frequency_hz, duplex=True)
    return spec.boundary_ports * duplex / 8


def narrow_boundary_bandwidth(spec: MeshSpec) -> float:
    """What the narrow request and response links would add at the boundary, in bytes per second."""
    duplex = peak_link_bandwidth(Bus.NARROW.data_bits, spec.frequency_hz, duplex=True)
    return spec.boundary_ports * 2 * duplex / 8


@dataclass(frozen=True)
class RouterParams:
    input_fifo_depth: int = 2
    # output-buffered routers take two cycles per hop, input-buffered ones one
    output_buffered: bool = True
    output_fifo_depth: int = 2


@dataclass
class Mesh:
    spec: MeshSpec
    variant: Variant
    kernel: Kernel
    metrics: Metrics
    routers: Dict[Tuple[ChannelKind, Coord], Router] = field(default_factory=dict)
    nis: Dict[Coord, NetworkInterface] = field(default_factory=dict)
    initiators: Dict[Coord, InitiatorEndpoint] = field(default_factory=dict)
    memories: Dict[Coord, MemoryEndpoint] = field(default_factory=dict)
    terminators: List[Terminator] = field(default_factory=list)

    def load(self, txns: Iterable[AxiTransaction]) -> None:
        per_node: Dict[Coord, List[AxiTransaction]] = {}
        for txn in txns:
            if txn.initiator not in self.initiators:
                raise ConfigurationError(f"no initiator at {txn.initiator}")
            if txn.dst not in self.memories:
                raise ConfigurationError(f"no memory endpoint at {txn.dst}")
            per_node.setdefault(txn.initiator, []).append(txn)
        for node, group in per_node.items():
            self.initiators[node].load(group)

    def run(self, config: Optional[SimConfig] = None) -> RunReport:
        return self.kernel.run(config or SimConfig())

    def flits_in_network(self) -> int:
        return sum(r.in_flight() for r in self.routers.values())

    def _check_conservation(self, cycle: int) -> None:
        injected = sum(ni.injected for ni in self.nis.values())
        ejected = sum(ni.ejected for ni in self.nis.values())
        if injected != ejected + self.flits_in_network():
            raise KernelError(f"flit conservation broken at cycle {cycle}: {injected} injected, "
                              f"{ejected} ejected, {self.flits_in_network()} buffered")


def build_mesh(spec: MeshSpec, variant: Variant = Variant.NARROW_WIDE,
               ni: Optional[NiConfig] = None, router: Optional[RouterParams] = None,
               max_outstanding: Optional[Mapping[Bus, int]] = None,
               initiator_stall_prob: float = 0.0, seed: int = 0) -> Mesh:
    """Build and wire one mesh on a fresh kernel."""
    variant = Variant(variant)
    ni_cfg = ni or NiConfig()
    rp = router or RouterParams()
    kernel = Kernel()
    metrics = Metrics()
    mesh = Mesh(spec, variant, kernel, metrics)
    rng = random.Random(seed)
    channels = channels_used(variant)
    grid = (spec.width, spec.height)

    boundary: Dict[Coord, List[Tuple[Port, Coord]]] = {}
    for edge, idx in spec.boundary_memories:
        node, at, port = spec.attachment(edge, idx)
        boundary.setdefault(at, []).append((port, node))

    def make_ni(node: Coord) -> NetworkInterface:
        cfg = dataclasses.replace(ni_cfg, node=node, variant=variant)
        n = NetworkInterface(cfg, name=f"ni{node[0]}_{node[1]}", metrics=metrics,
                             rng=random.Random(rng.getrandbits(64)))
        n.clock = kernel
        MemoryEndpoint(node, n, cfg.internal_latency_cycles, metrics)
        mesh.nis[node] = n
        mesh.memories[node] = n.memory
        return n

    for node in spec.tiles:
        ep = InitiatorEndpoint(node, name=f"init{node[0]}_{node[1]}", max_outstanding=max_outstanding,
                               stall_prob=initiator_stall_prob, rng=random.Random(rng.getrandbits(64)))
        n = make_ni(node)
        n.attach_initiator(ep)
        mesh.initiators[node] = ep
    for at, ports in boundary.items():
        for _, node in ports:
            make_ni(node)

    for ch in channels:
        for (x, y) in spec.tiles:
            eps = frozenset({Port.LOCAL} | {p for p, _ in boundary.get((x, y), ())})
            cfg = RouterConfig(position=(x, y), grid=grid, endpoint_ports=eps,
                               input_fifo_depth=rp.input_fifo_depth,
                               output_buffered=rp.output_buffered,
                               output_fifo_depth=rp.output_fifo_depth)
            mesh.routers[ch, (x, y)] = Router(cfg, name=f"r{ch.label}_{x}_{y}", channel=ch)

    # registration order only matters for depends_on; keep it stable for determinism
    kernel.register_all(mesh.initiators.values())
    kernel.register_all(mesh.nis.values())
    kernel.register_all(mesh.routers.values())

    def link(src, sp, dst, dp, ch):
        lk = kernel.connect(src, sp, dst, dp, ch)
        if isinstance(src, Router):
            src.attach_output(sp, lk)
        else:
            src.attach_output(ch, lk)
        return lk

    for ch in channels:
        for (x, y) in spec.tiles:
            r = mesh.routers[ch, (x, y)]
            n = mesh.nis[x, y]
            link(n, ch, r, Port.LOCAL, ch)
            link(r, Port.LOCAL, n, ch, ch)
            for port in (Port.NORTH, Port.EAST, Port.SOUTH, Port.WEST):
                dx, dy = port.delta
                nb = mesh.routers.get((ch, (x + dx, y + dy)))
                if nb is not None:
                    link(r, port, nb, port.opposite(), ch)
            for port, node in boundary.get((x, y), ()):
                m = mesh.nis[node]
                link(m, ch, r, port, ch)
                link(r, port, m, ch, ch)
            for port in range(r.num_ports):
                if r.out_links[port] is None:
                    t = Terminator(f"{r.name}.term{port}")
                    mesh.terminators.append(t)
                    r.attach_output(port, kernel.connect(r, port, t, 0, ch))

    for n in mesh.nis.values():
        for ch in channels:
            if n.arbiters[ch].link is None:
                raise ConfigurationError(f"{n.name}: {ch.label} injection link left unconnected")
    kernel.invariants.append(mesh._check_conservation)
    return mesh
