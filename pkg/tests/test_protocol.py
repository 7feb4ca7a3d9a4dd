import pytest

from nwnoc.errors import ProtocolError
from nwnoc.protocol import (CHANNEL_WIDTH_BITS, AxiMsg, Bus, ChannelKind, MsgType, Variant,
                            channel_map, channel_width_bits, channels_used, check_flit_on_channel,
                            make_flit, map_axi_to_channel)

NR, NS, W = ChannelKind.NARROW_REQ, ChannelKind.NARROW_RSP, ChannelKind.WIDE


@pytest.mark.parametrize("bus,msg,ch", [
    (Bus.NARROW, AxiMsg.AR, NR), (Bus.NARROW, AxiMsg.AW, NR), (Bus.NARROW, AxiMsg.W, NR),
    (Bus.NARROW, AxiMsg.R, NS), (Bus.NARROW, AxiMsg.B, NS),
    (Bus.WIDE, AxiMsg.AR, NR), (Bus.WIDE, AxiMsg.AW, NR), (Bus.WIDE, AxiMsg.B, NS),
    (Bus.WIDE, AxiMsg.W, W), (Bus.WIDE, AxiMsg.R, W),
])
def test_narrow_wide_mapping(bus, msg, ch):
    assert map_axi_to_channel(bus, msg) is ch
    assert channel_map(Variant.NARROW_WIDE)[bus, msg] is ch


def test_wide_only_maps_everything_to_wide():
    assert set(channel_map(Variant.WIDE_ONLY).values()) == {W}
    assert channels_used(Variant.WIDE_ONLY) == (W,)
    assert channels_used(Variant.NARROW_WIDE) == (NR, NS, W)


def test_channel_widths():
    assert [channel_width_bits(k) for k in (NR, NS, W)] == [118, 102, 604]
    # every payload fits the channel the mapping puts it on, header included in the width
    for variant in Variant:
        for (bus, msg), ch in channel_map(variant).items():
            f = make_flit(bus, msg, src=(0, 0), dst=(1, 0), rob_idx=0, axi_id=0)
            assert f.payload_bits <= CHANNEL_WIDTH_BITS[ch]


def test_mapping_is_read_only():
    with pytest.raises(TypeError):
        channel_map(Variant.NARROW_WIDE)[Bus.WIDE, AxiMsg.R] = NR


def test_flit_header_fields():
    f = make_flit(Bus.WIDE, AxiMsg.R, src=(2, 1), dst=(1, 1), rob_idx=64, axi_id=5, last=False,
                  payload=3)
    h = f.header
    assert (h.src_id, h.dst_id, h.rob_idx, h.axi_id, h.last) == ((2, 1), (1, 1), 64, 5, False)
    assert h.msg_type is MsgType.WIDE_R and h.msg_type.bus is Bus.WIDE and not h.msg_type.is_request
    assert f.payload_bits == 512


def test_check_flit_on_channel():
    f = make_flit(Bus.WIDE, AxiMsg.R, src=(0, 0), dst=(1, 0), rob_idx=0, axi_id=0)
    check_flit_on_channel(f, W, Variant.NARROW_WIDE)
    with pytest.raises(ProtocolError):
        check_flit_on_channel(f, NS, Variant.NARROW_WIDE)
    n = make_flit(Bus.NARROW, AxiMsg.R, src=(0, 0), dst=(1, 0), rob_idx=0, axi_id=0)
    check_flit_on_channel(n, W, Variant.WIDE_ONLY)
    with pytest.raises(ProtocolError):
        check_flit_on_channel(n, W, Variant.NARROW_WIDE)


def test_msg_type_round_trip():
    for bus in Bus:
        for msg in AxiMsg:
            mt = MsgType.of(bus, msg)
            assert (mt.bus, mt.msg) == (bus, msg)
            assert mt.is_request == msg.is_request
