"""Cycle-accurate simulator of a narrow/wide multi-channel mesh NoC with AXI-ordering NIs."""

from .axi import AxiTransaction, TxnKind, oracle_check_order
from .errors import (ConfigurationError, KernelError, NocError, ProtocolError, RoutingError,
                     TraceCorruptionError)
from .kernel import Kernel, SimConfig
from .metrics import SimReport, measure
from .protocol import AxiMsg, Bus, ChannelKind, Variant, map_axi_to_channel
from .topology import MeshSpec, RouterParams, boundary_bandwidth, build_mesh, peak_link_bandwidth
from .traffic import Direction, TrafficSpec, generate

__version__ = "0.1.0"

__all__ = [
    "AxiMsg", "AxiTransaction", "Bus", "ChannelKind", "ConfigurationError", "Direction",
    "Kernel", "KernelError", "MeshSpec", "NocError", "ProtocolError", "RouterParams",
    "RoutingError", "SimConfig", "SimReport", "TraceCorruptionError", "TrafficSpec", "TxnKind",
    "Variant", "boundary_bandwidth", "build_mesh", "generate", "map_axi_to_channel", "measure",
    "oracle_check_order", "peak_link_bandwidth",
]
