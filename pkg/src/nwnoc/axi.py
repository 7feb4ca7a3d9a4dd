"""
Simplified AXI4 transaction semantics plus a brute-force ordering oracle.

The oracle only looks at the order in which transactions were issued and
the order in which they completed, so it can judge any NI implementation
without knowing how it works.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Hashable, Iterable, List, NamedTuple, Sequence, Tuple

from .errors import ConfigurationError, TraceCorruptionError
from .protocol import AxiMsg, Bus, Coord

MAX_BURST_LEN = 256
MAX_BURST_BYTES = 4096  # bursts may not cross a 4 KiB boundary


class TxnKind(Enum):
    __hash__ = object.__hash__
    READ = "read"
    WRITE = "write"


# explicit uids (from generators) stay below this; ad-hoc transactions draw from above it
_uids = itertools.count(1 << 32)


@dataclass(frozen=True)
class AxiTransaction:
    initiator: Coord
    axi_id: int
    kind: TxnKind
    bus: Bus
    dst: Coord
    burst_len: int = 1
    issue_cycle: int = 0
    uid: int = field(default_factory=lambda: next(_uids))

    def __post_init__(self):
        if not 1 <= self.burst_len <= MAX_BURST_LEN:
            raise ConfigurationError(f"burst_len {self.burst_len} outside 1..{MAX_BURST_LEN}")
        if self.burst_len * self.beat_bytes > MAX_BURST_BYTES:
            raise ConfigurationError(
                f"{self.burst_len}x{self.beat_bytes} B burst exceeds the {MAX_BURST_BYTES} B limit")
        if self.axi_id < 0:
            raise ConfigurationError("AXI IDs are unsigned")
        if self.issue_cycle < 0:
            raise ConfigurationError("issue_cycle must be >= 0")

    @property
    def beat_bytes(self) -> int:
        return self.bus.beat_bytes

    @property
    def bytes(self) -> int:
        return self.burst_len * self.beat_bytes

    @property
    def response_beats(self) -> int:
        return self.burst_len if self.kind is TxnKind.READ else 1

    @property
    def stream(self) -> Tuple[Coord, Bus, TxnKind, int]:
        """Ordering domain: AXI orders same-ID reads and same-ID writes of one manager port."""
        return (self.initiator, self.bus, self.kind, self.axi_id)


class FlitDescriptor(NamedTuple):
    msg: AxiMsg
    bus: Bus
    beat: int
    last: bool
    path: str  # "request" or "response"

    @property
    def payload_bytes(self) -> int:
        return self.bus.beat_bytes if self.msg in (AxiMsg.W, AxiMsg.R) else 0


def expand_beats(txn: AxiTransaction) -> List[FlitDescriptor]:
    """All single-cycle messages a transaction produces, request path first.

    >>> [d.msg.value for d in expand_beats(AxiTransaction((0, 0), 0, TxnKind.WRITE, Bus.NARROW, (1, 0)))]
    ['AW', 'W', 'B']
    """
    if not isinstance(txn, AxiTransaction):
        raise ConfigurationError(f"not a transaction: {txn!r}")
    n = txn.burst_len
    bus = txn.bus
    if txn.kind is TxnKind.READ:
        out = [FlitDescriptor(AxiMsg.AR, bus, 0, True, "request")]
        out += [FlitDescriptor(AxiMsg.R, bus, i, i == n - 1, "response") for i in range(n)]
    else:
        out = [FlitDescriptor(AxiMsg.AW, bus, 0, True, "request")]
        out += [FlitDescriptor(AxiMsg.W, bus, i, i == n - 1, "request") for i in range(n)]
        out.append(FlitDescriptor(AxiMsg.B, bus, 0, True, "response"))
    return out


class Delivery(NamedTuple):
    initiator: Coord
    axi_id: int
    txn: AxiTransaction
    order: int


class DeliveryTrace:
    """Completed transactions in the order their last response beat reached the AXI side."""

    def __init__(self):
        self.entries: List[Delivery] = []

    def record(self, txn: AxiTransaction) -> None:
        self.entries.append(Delivery(txn.initiator, txn.axi_id, txn, len(self.entries)))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def transactions(self) -> List[AxiTransaction]:
        return [d.txn for d in self.entries]


@dataclass(frozen=True)
class OrderViolation:
    stream: Hashable
    position: int
    expected: AxiTransaction
    delivered: AxiTransaction

    def __str__(self) -> str:
        return (f"stream {self.stream}: position {self.position} delivered txn {self.delivered.uid} "
                f"but txn {self.expected.uid} was issued earlier")


def oracle_check_order(requests: Sequence[AxiTransaction],
                       deliveries: Iterable) -> List[OrderViolation]:
    """Compare per-stream delivery order with per-stream issue order.

    ``deliveries`` may be a :class:`DeliveryTrace` or a plain sequence of
    transactions. Returns the list of violations; empty means the trace
    honours same-ID ordering. Transactions that never completed are not
    violations; the caller checks completion separately.
    """
    txns = [d.txn if isinstance(d, Delivery) else d for d in deliveries]
    issued: Dict[Hashable, List[AxiTransaction]] = {}
    known = set()
    for t in requests:
        issued.setdefault(t.stream, []).append(t)
        known.add(t.uid)
    seen = set()
    delivered: Dict[Hashable, List[AxiTransaction]] = {}
    for t in txns:
        if t.uid not in known:
            raise TraceCorruptionError(f"delivered transaction {t.uid} was never issued")
        if t.uid in seen:
            raise TraceCorruptionError(f"transaction {t.uid} delivered twice")
        seen.add(t.uid)
        delivered.setdefault(t.stream, []).append(t)

    violations = []
    for stream, got in delivered.items():
        want = issued[stream]
        for pos, txn in enumerate(got):
            if want[pos].uid != txn.uid:
                violations.append(OrderViolation(stream, pos, want[pos], txn))
                break
    return violations
