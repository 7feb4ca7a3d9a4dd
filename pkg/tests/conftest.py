import random
from collections import deque

import pytest

from nwnoc.axi import AxiTransaction, TxnKind
from nwnoc.kernel import Component, SimConfig
from nwnoc.metrics import measure
from nwnoc.protocol import AxiMsg, Bus, make_flit
from nwnoc.topology import MeshSpec, RouterParams, build_mesh


class Source(Component):
    """Offers a list of flits on one link, in order, holding each until accepted."""

    is_source = True

    def __init__(self, name, flits):
        self.name = name
        self.pending = deque(flits)
        self.link = None
        self.sent_at = []
        self._offered = False

    def propose(self, cycle):
        if self.pending:
            self.link.offer(self.pending[0])
            self._offered = True

    def commit(self, cycle):
        if self._offered and self.link.fired:
            self.pending.popleft()
            self.sent_at.append(cycle)
        self._offered = False
        self.active = bool(self.pending)

    def drained(self):
        return not self.pending


class Sink(Component):
    """Accepts flits into a FIFO of ``depth`` and drains one per cycle when ``drain(cycle)``."""

    def __init__(self, name, depth=1, drain=lambda cycle: True, expect=None):
        self.name = name
        # with ``expect`` set the run lasts until that many flits arrived
        self.expect = expect
        self.is_source = expect is not None
        self.depth = depth
        self.fifo = deque()
        self.got = []
        self._drain = drain
        self.active = True

    def can_accept(self, port):
        return len(self.fifo) < self.depth

    def accept(self, port, flit, cycle):
        self.fifo.append(flit)
        self.got.append((cycle, port, flit))

    def commit(self, cycle):
        if self.fifo and self._drain(cycle):
            self.fifo.popleft()
        self.active = True

    def drained(self):
        return self.expect is None or len(self.got) >= self.expect


def flit(i, dst=(1, 0), src=(0, 0), last=True, axi_id=0, bus=Bus.NARROW, msg=AxiMsg.AR):
    return make_flit(bus, msg, src=src, dst=dst, rob_idx=i, axi_id=axi_id, last=last, payload=i)


def read(src, dst, bus=Bus.NARROW, beats=1, axi_id=0, uid=0, kind=TxnKind.READ, issue=0):
    return AxiTransaction(src, axi_id, kind, bus, dst, burst_len=beats, issue_cycle=issue, uid=uid)


def run_txns(txns, width=2, height=1, output_buffered=True, variant=None, debug=True, **kw):
    from nwnoc.protocol import Variant
    mesh = build_mesh(MeshSpec(width, height), variant or Variant.NARROW_WIDE,
                      router=RouterParams(output_buffered=output_buffered), **kw)
    mesh.load(txns)
    run = mesh.run(SimConfig(max_cycles=50_000, debug=debug))
    return mesh, run, measure(mesh, run)


@pytest.fixture
def rng():
    return random.Random(1234)
