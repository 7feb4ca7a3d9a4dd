"""Exception hierarchy shared by every simulator module."""


class NocError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(NocError, ValueError):
    """A component, mesh or experiment was configured inconsistently."""


class KernelError(NocError, RuntimeError):
    """The simulation kernel detected a broken handshake or evaluation contract."""


class ProtocolError(NocError, RuntimeError):
    """A flit violated the NI/link protocol (unknown ROB index, duplicate beat, ...)."""


class RoutingError(NocError, RuntimeError):
    """A flit could not be routed, or took a pruned switch connection."""


class TraceCorruptionError(NocError, ValueError):
    """A delivery trace references a transaction that was never issued, or repeats one."""
