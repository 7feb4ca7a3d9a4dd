"""
Link-level protocol: flits, the three physical channels and the AXI-to-channel mapping.

Every flit carries a complete header in parallel with its payload, so there
are no head or tail flits; a burst of N beats is N flits and only the final
one has ``last`` set.
"""

from __future__ import annotations

from enum import Enum, IntEnum
from types import MappingProxyType
from typing import Any, Dict, Mapping, NamedTuple, Tuple

from .errors import ProtocolError

Coord = Tuple[int, int]


class ChannelKind(IntEnum):
    """Physical channel; each kind is routed through its own router network."""
    NARROW_REQ = 0
    NARROW_RSP = 1
    WIDE = 2

    @property
    def label(self) -> str:
        return _CHANNEL_LABELS[self]


_CHANNEL_LABELS = {
    ChannelKind.NARROW_REQ: "narrow_req",
    ChannelKind.NARROW_RSP: "narrow_rsp",
    ChannelKind.WIDE: "wide",
}

# total link width per channel, header included
CHANNEL_WIDTH_BITS = {
    ChannelKind.NARROW_REQ: 118,
    ChannelKind.NARROW_RSP: 102,
    ChannelKind.WIDE: 604,
}


class Bus(Enum):
    """The two AXI buses an endpoint exposes."""
    __hash__ = object.__hash__  # members are singletons; skips the slow Enum.__hash__
    NARROW = "narrow"
    WIDE = "wide"

    @property
    def beat_bytes(self) -> int:
        return 8 if self is Bus.NARROW else 64

    @property
    def data_bits(self) -> int:
        return self.beat_bytes * 8


BUSES = (Bus.NARROW, Bus.WIDE)


class AxiMsg(Enum):
    """AXI channel a message belongs to."""
    __hash__ = object.__hash__
    AR = "AR"
    AW = "AW"
    W = "W"
    R = "R"
    B = "B"

    @property
    def is_request(self) -> bool:
        return self in (AxiMsg.AR, AxiMsg.AW, AxiMsg.W)


class Variant(Enum):
    """Network configuration: separated narrow/wide links or the single-link baseline."""
    __hash__ = object.__hash__
    NARROW_WIDE = "narrow-wide"
    WIDE_ONLY = "wide-only"

    @property
    def short(self) -> str:
        return "nw" if self is Variant.NARROW_WIDE else "wo"


class MsgType(Enum):
    __hash__ = object.__hash__
    NARROW_AR = "NarrowAR"
    NARROW_AW = "NarrowAW"
    NARROW_W = "NarrowW"
    NARROW_R = "NarrowR"
    NARROW_B = "NarrowB"
    WIDE_AR = "WideAR"
    WIDE_AW = "WideAW"
    WIDE_W = "WideW"
    WIDE_R = "WideR"
    WIDE_B = "WideB"

    @classmethod
    def of(cls, bus: Bus, msg: AxiMsg) -> "MsgType":
        return _MSG_TYPES[bus, msg]

    @property
    def bus(self) -> Bus:
        return _MSG_PARTS[self][0]

    @property
    def msg(self) -> AxiMsg:
        return _MSG_PARTS[self][1]

    @property
    def is_request(self) -> bool:
        return _MSG_PARTS[self][1].is_request


_MSG_TYPES: Dict[Tuple[Bus, AxiMsg], MsgType] = {
    (bus, msg): MsgType(("Narrow" if bus is Bus.NARROW else "Wide") + msg.value)
    for bus in BUSES for msg in AxiMsg
}
_MSG_PARTS = {mt: key for key, mt in _MSG_TYPES.items()}

# primary payload per message (address, data or response code)
ADDR_BITS = 48
RESP_BITS = 2


def payload_bits(bus: Bus, msg: AxiMsg) -> int:
    if msg in (AxiMsg.AR, AxiMsg.AW):
        return ADDR_BITS
    if msg is AxiMsg.B:
        return RESP_BITS
    return bus.data_bits


_NARROW_WIDE_MAP = {
    (Bus.NARROW, AxiMsg.AR): ChannelKind.NARROW_REQ,
    (Bus.NARROW, AxiMsg.AW): ChannelKind.NARROW_REQ,
    (Bus.NARROW, AxiMsg.W): ChannelKind.NARROW_REQ,
    (Bus.NARROW, AxiMsg.R): ChannelKind.NARROW_RSP,
    (Bus.NARROW, AxiMsg.B): ChannelKind.NARROW_RSP,
    (Bus.WIDE, AxiMsg.AR): ChannelKind.NARROW_REQ,
    (Bus.WIDE, AxiMsg.AW): ChannelKind.NARROW_REQ,
    (Bus.WIDE, AxiMsg.W): ChannelKind.WIDE,
    (Bus.WIDE, AxiMsg.R): ChannelKind.WIDE,
    (Bus.WIDE, AxiMsg.B): ChannelKind.NARROW_RSP,
}


def map_axi_to_channel(bus: Bus, msg: AxiMsg) -> ChannelKind:
    """Physical channel carrying ``msg`` of ``bus`` in the narrow-wide network.

    >>> map_axi_to_channel(Bus.WIDE, AxiMsg.AR)
    <ChannelKind.NARROW_REQ: 0>
    """
    return _NARROW_WIDE_MAP[bus, msg]


def channel_width_bits(kind: ChannelKind) -> int:
    return CHANNEL_WIDTH_BITS[ChannelKind(kind)]


_MAPS = {
    Variant.NARROW_WIDE: MappingProxyType(_NARROW_WIDE_MAP),
    Variant.WIDE_ONLY: MappingProxyType({key: ChannelKind.WIDE for key in _NARROW_WIDE_MAP}),
}


def channel_map(variant: Variant) -> Mapping[Tuple[Bus, AxiMsg], ChannelKind]:
    """Full (bus, message) -> channel table for a network variant (read-only)."""
    return _MAPS[Variant(variant)]


def channels_used(variant: Variant) -> Tuple[ChannelKind, ...]:
    return tuple(sorted(set(channel_map(variant).values())))


class FlitHeader(NamedTuple):
    """Routing, ordering and type information sent on parallel lines with the payload."""
    dst_id: Coord
    src_id: Coord
    rob_idx: int
    msg_type: MsgType
    last: bool
    axi_id: int


class Flit:
    """One single-cycle transfer unit.

    ``payload`` is opaque to the network: burst length for AR/AW, beat
    index for W/R, response code for B.
    """

    __slots__ = ("header", "payload_bits", "payload")

    def __init__(self, header: FlitHeader, payload_bits: int, payload: Any = None):
        self.header = header
        self.payload_bits = payload_bits
        self.payload = payload

    def __repr__(self) -> str:
        h = self.header
        return (f"Flit({h.msg_type.value} {h.src_id}->{h.dst_id} rob={h.rob_idx} "
                f"id={h.axi_id} last={h.last} payload={self.payload!r})")


def make_flit(bus: Bus, msg: AxiMsg, *, src: Coord, dst: Coord, rob_idx: int,
              axi_id: int, last: bool = True, payload: Any = None) -> Flit:
    header = FlitHeader(dst_id=dst, src_id=src, rob_idx=rob_idx,
                        msg_type=_MSG_TYPES[bus, msg], last=last, axi_id=axi_id)
    return Flit(header, payload_bits(bus, msg), payload)


def check_flit_on_channel(flit: Flit, kind: ChannelKind, variant: Variant) -> None:
    """Raise if ``flit`` is not legal on ``kind`` under ``variant``'s mapping."""
    mt = flit.header.msg_type
    expected = channel_map(variant)[mt.bus, mt.msg]
    if expected != kind:
        raise ProtocolError(f"{mt.value} flit on {ChannelKind(kind).label}, "
                            f"mapping requires {expected.label}")
    if flit.payload_bits > CHANNEL_WIDTH_BITS[kind]:
        raise ProtocolError(f"{flit.payload_bits}-bit payload exceeds {kind.label} width")
