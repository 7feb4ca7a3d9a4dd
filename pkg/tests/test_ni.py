import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nwnoc.axi import AxiTransaction, TxnKind, oracle_check_order
from nwnoc.errors import ConfigurationError, ProtocolError
from nwnoc.ni import Action, NetworkInterface, NiConfig, ReorderTable, RobAllocator
from nwnoc.protocol import AxiMsg, Bus, make_flit

from nwnoc.kernel import SimConfig
from nwnoc.topology import MeshSpec, build_mesh

from conftest import read, run_txns


# ROB allocator ---------------------------------------------------------------

def test_wide_rob_geometry():
    rob = RobAllocator(8192, 64)
    assert rob.num_slots == 128
    base = rob.allocate(16)
    assert base == 0 and rob.used_bytes == 1024 and rob.free_bytes == 7168


def test_first_fit_and_merge():
    rob = RobAllocator(8 * 8, 8)
    a, b, c = rob.allocate(2), rob.allocate(3), rob.allocate(3)
    assert (a, b, c) == (0, 2, 5)
    assert rob.allocate(1) is None
    rob.free(b)
    assert rob.allocate(4) is None  # only 3 contiguous free slots
    assert rob.allocate(2) == 2  # first fit reuses the hole
    rob.free(a)
    rob.free(2)
    rob.free(c)
    assert rob.fragments == 1 and rob.free_bytes == rob.capacity_bytes


def test_double_free_and_bad_sizes():
    rob = RobAllocator(64, 8)
    s = rob.allocate(1)
    rob.free(s)
    with pytest.raises(ProtocolError):
        rob.free(s)
    with pytest.raises(ConfigurationError):
        rob.allocate(0)
    with pytest.raises(ConfigurationError):
        RobAllocator(4, 8)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(1, 9)), max_size=60))
def test_allocator_matches_slot_model(ops):
    rob = RobAllocator(32 * 8, 8)
    owned = {}  # start -> size
    used = set()
    for is_alloc, n in ops:
        if is_alloc or not owned:
            start = rob.allocate(n)
            if start is None:
                # first fit fails only if no run of n free slots exists
                free = [i for i in range(32) if i not in used]
                runs = any(all(j in free for j in range(i, i + n)) for i in range(32 - n + 1))
                assert not runs
                continue
            span = set(range(start, start + n))
            assert not span & used and max(span) < 32
            used |= span
            owned[start] = n
        else:
            start = sorted(owned)[n % len(owned)]
            assert rob.free(start) == owned.pop(start)
            used = {i for s, k in owned.items() for i in range(s, s + k)}
        assert rob.used_slots == len(used) <= rob.num_slots
    for start in list(owned):
        rob.free(start)
    assert rob.free_bytes == rob.capacity_bytes and rob.fragments == 1


# reorder table ---------------------------------------------------------------

def rsp(entry, beat=0, last=True):
    t = entry.txn
    return make_flit(t.bus, AxiMsg.R, src=t.dst, dst=t.initiator, rob_idx=entry.rob_idx,
                     axi_id=t.axi_id, last=last, payload=beat)


def two_same_id(bypass, dst_a=(1, 0), dst_b=(2, 0)):
    table = ReorderTable(bypass)
    a = table.add(read((0, 0), dst_a, uid=0), 0, 1)
    b = table.add(read((0, 0), dst_b, uid=1), 1, 1)
    return table, a, b


def test_single_outstanding_forwards_directly():
    table = ReorderTable(True)
    e = table.add(read((0, 0), (1, 0), axi_id=3), 0, 1)
    d = table.on_response(rsp(e))
    assert d.action is Action.FORWARD and d.emitted == [(e, 0)]


def test_out_of_order_same_id_is_buffered_then_released():
    table, a, b = two_same_id(True)
    d = table.on_response(rsp(b))
    assert d.action is Action.BUFFER and d.slot == 1 and d.emitted == []
    d = table.on_response(rsp(a))
    assert d.action is Action.FORWARD
    assert [(e.txn.uid, beat) for e, beat in d.emitted] == [(0, 0), (1, 0)]
    assert [e.txn.uid for e, _ in d.released] == [1]


def test_same_destination_in_order_forwards_both():
    table, a, b = two_same_id(True, dst_b=(1, 0))
    assert table.on_response(rsp(a)).action is Action.FORWARD
    assert table.on_response(rsp(b)).action is Action.FORWARD


def test_bypass_off_buffers_and_releases_complete_head_only():
    table = ReorderTable(False)
    e = table.add(read((0, 0), (1, 0), bus=Bus.WIDE, beats=3), 0, 3)
    assert table.on_response(rsp(e, 0, False)).emitted == []
    assert table.on_response(rsp(e, 1, False)).emitted == []
    d = table.on_response(rsp(e, 2))
    assert d.action is Action.BUFFER and [b for _, b in d.emitted] == [0, 1, 2]


def test_table_protocol_errors():
    table, a, b = two_same_id(True)
    bogus = make_flit(Bus.NARROW, AxiMsg.R, src=(1, 0), dst=(0, 0), rob_idx=99, axi_id=0)
    with pytest.raises(ProtocolError, match="unknown ROB"):
        table.on_response(bogus)
    table.on_response(rsp(a))
    with pytest.raises(ProtocolError, match="duplicate"):
        table.on_response(rsp(a))
    wrong_id = make_flit(Bus.NARROW, AxiMsg.R, src=(2, 0), dst=(0, 0), rob_idx=1, axi_id=7)
    with pytest.raises(ProtocolError, match="does not match"):
        table.on_response(wrong_id)
    with pytest.raises(ProtocolError):
        table.add(read((0, 0), (1, 0), uid=5), 1, 1)


def test_cross_id_responses_are_not_serialised():
    table = ReorderTable(True)
    a = table.add(read((0, 0), (2, 0), axi_id=0, uid=0), 0, 1)
    b = table.add(read((0, 0), (1, 0), axi_id=1, uid=1), 1, 1)
    assert table.on_response(rsp(b)).action is Action.FORWARD
    assert table.on_response(rsp(a)).action is Action.FORWARD


# NI inside a mesh --------------------------------------------------------------

def ni(**kw):
    return NetworkInterface(NiConfig(**kw))


def test_inject_accepts_and_reserves():
    n = ni()
    t = read((0, 0), (1, 0), bus=Bus.WIDE, beats=16)
    assert n.inject_request(t, 0)
    assert n.rob[Bus.WIDE].used_bytes == 1024
    assert n.req_q[Bus.WIDE, n.chmap[Bus.WIDE, AxiMsg.AR]][0][1].header.rob_idx == 0


def test_inject_stalls_without_rob_space():
    n = ni(wide_rob_bytes=1536)
    assert n.inject_request(read((0, 0), (1, 0), bus=Bus.WIDE, beats=16, uid=0), 0)
    # 512 B left, a 1024 B burst has to wait
    assert not n.inject_request(read((0, 0), (1, 0), bus=Bus.WIDE, beats=16, uid=1), 0)
    assert n.rob_stalls == 1


def test_write_needs_one_b_slot():
    n = ni(b_table_entries=1)
    w = AxiTransaction((0, 0), 0, TxnKind.WRITE, Bus.WIDE, (1, 0), burst_len=64, uid=0)
    assert n.inject_request(w, 0)
    assert n.btab[Bus.WIDE].used_slots == 1 and n.rob[Bus.WIDE].used_slots == 0
    assert not n.inject_request(AxiTransaction((0, 0), 0, TxnKind.WRITE, Bus.WIDE, (1, 0), uid=1), 0)


def test_transaction_larger_than_rob_is_configuration_error():
    n = ni(wide_rob_bytes=512)
    with pytest.raises(ConfigurationError):
        n.inject_request(read((0, 0), (1, 0), bus=Bus.WIDE, beats=16), 0)


def test_reorder_table_full_stalls_and_is_counted():
    n = ni(reorder_table_entries=1)
    assert n.inject_request(read((0, 0), (1, 0), uid=0), 0)
    assert not n.inject_request(read((0, 0), (1, 0), uid=1), 0)
    assert n.table_stalls == 1


def test_ni_adds_one_cycle_on_ejection():
    m = build_mesh(MeshSpec(2, 1))
    m.load([read((0, 0), (1, 0))])
    r = m.run(SimConfig(record_trace=True))
    # last transfer of the response is the one into the initiator's NI
    arrive = [row[0] for row in r.trace if row[5] == "NarrowR"][-1]
    assert m.initiators[0, 0].records[0].completed == arrive + 1
    assert m.nis[0, 0].ejected == 1


@pytest.mark.parametrize("bypass", [True, False])
def test_same_id_far_then_near_delivered_in_issue_order(bypass):
    # a far read then a near read with the same ID: the near response comes back first
    far = read((0, 0), (3, 0), uid=0)
    near = read((0, 0), (1, 0), uid=1)
    mesh, run, rep = run_txns([far, near], width=4, ni=NiConfig(bypass=bypass))
    ep = mesh.initiators[0, 0]
    assert [t.uid for t in ep.trace.transactions()] == [0, 1]
    assert oracle_check_order(ep.issue_log, ep.trace) == []
    table = mesh.nis[0, 0].tables[Bus.NARROW, TxnKind.READ]
    assert table.buffered >= 1
    assert rep.rob_leaks == [] and not rep.timeouts


def test_different_ids_complete_out_of_issue_order():
    far = read((0, 0), (3, 0), axi_id=0, uid=0)
    near = read((0, 0), (1, 0), axi_id=1, uid=1)
    mesh, run, rep = run_txns([far, near], width=4)
    assert [t.uid for t in mesh.initiators[0, 0].trace.transactions()] == [1, 0]


def test_buffered_burst_released_as_consecutive_beats():
    far = read((0, 0), (3, 0), bus=Bus.WIDE, beats=1, uid=0)
    near = read((0, 0), (1, 0), bus=Bus.WIDE, beats=16, uid=1)
    mesh, run, rep = run_txns([far, near], width=4, ni=NiConfig(bypass=False))
    rec = mesh.initiators[0, 0].records
    assert rec[1].beats == 16 and rec[1].completed > rec[0].completed
    assert rep.delivered_read_bytes == rep.requested_read_bytes == 17 * 64


def test_empty_ni_is_idle():
    n = ni()
    assert n.drained() and n.outstanding() == 0 and n.in_flight() == 0


def test_config_validation():
    for kw in ({"internal_latency_cycles": -1}, {"reorder_table_entries": 0},
               {"eject_stall_prob": 1.0}):
        with pytest.raises(ConfigurationError):
            NiConfig(**kw)
