"""
Experiment configuration: INI sections mirroring the module configs.

Only known sections and keys are accepted; every error names the file
line it came from.
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple

from .errors import ConfigurationError
from .ni import NiConfig
from .protocol import Bus, Variant
from .topology import MeshSpec, RouterParams
from .traffic import Direction, TrafficSpec


@dataclass(frozen=True)
class ExperimentConfig:
    mesh: MeshSpec = field(default_factory=MeshSpec)
    ni: NiConfig = field(default_factory=NiConfig)
    router: RouterParams = field(default_factory=RouterParams)
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    variant: Variant = Variant.NARROW_WIDE
    out_dir: Path = Path("results")
    seed: int = 0
    max_cycles: int = 200_000
    narrow_outstanding: int = 8
    # 0 leaves the wide bus limited by ROB space only
    wide_outstanding: int = 0

    def __post_init__(self):
        if self.max_cycles <= 0:
            raise ConfigurationError("max_cycles must be > 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.narrow_outstanding < 0 or self.wide_outstanding < 0:
            raise ConfigurationError("outstanding limits must be >= 0")
        tiles = set(self.mesh.tiles)
        for name in ("source", "target"):
            node = getattr(self.traffic, name)
            if node not in tiles:
                raise ConfigurationError(f"traffic {name} {node} is not a tile of the "
                                         f"{self.mesh.width}x{self.mesh.height} mesh")

    @property
    def max_outstanding(self) -> Dict[Bus, int]:
        out = {}
        if self.narrow_outstanding > 0:
            out[Bus.NARROW] = self.narrow_outstanding
        if self.wide_outstanding > 0:
            out[Bus.WIDE] = self.wide_outstanding
        return out

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, seed=seed,
                                   traffic=dataclasses.replace(self.traffic, seed=seed))


class ConfigFileError(ConfigurationError):
    def __init__(self, path, line: Optional[int], message: str):
        where = f"{path}:{line}" if line else str(path)
        super().__init__(f"{where}: {message}")
        self.line = line


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _coord(text: str) -> Tuple[int, int]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected x,y, got {text!r}")
    return int(parts[0]), int(parts[1])


def _ints(text: str) -> Tuple[int, ...]:
    return tuple(int(p) for p in text.replace(",", " ").split())


def _memories(text: str) -> Tuple[Tuple[str, int], ...]:
    out = []
    for item in text.replace(",", " ").split():
        edge, _, idx = item.partition(":")
        if not idx:
            raise ValueError(f"memory positions look like west:2, got {item!r}")
        out.append((edge, int(idx)))
    return tuple(out)


# section -> key -> (target, parser); target is "<object>.<field>"
_SCHEMA: Dict[str, Dict[str, Tuple[str, Callable[[str], object]]]] = {
    "mesh": {
        "width": ("mesh.width", int),
        "height": ("mesh.height", int),
        "boundary_memories": ("mesh.boundary_memories", _memories),
        "frequency_hz": ("mesh.frequency_hz", float),
    },
    "ni": {
        "wide_rob_bytes": ("ni.wide_rob_bytes", int),
        "narrow_rob_bytes": ("ni.narrow_rob_bytes", int),
        "b_table_entries": ("ni.b_table_entries", int),
        "reorder_table_entries": ("ni.reorder_table_entries", int),
        "internal_latency_cycles": ("ni.internal_latency_cycles", int),
        "bypass": ("ni.bypass", _bool),
    },
    "router": {
        "output_buffered": ("router.output_buffered", _bool),
        "input_fifo_depth": ("router.input_fifo_depth", int),
        "output_fifo_depth": ("router.output_fifo_depth", int),
    },
    "traffic": {
        "narrow_txn_count": ("traffic.narrow_txn_count", int),
        "wide_txn_count": ("traffic.wide_txn_count", int),
        "wide_burst_len": ("traffic.wide_burst_len", int),
        "interference_levels": ("traffic.interference_levels", _ints),
        "direction": ("traffic.direction", Direction),
        "interference": ("traffic.interference", str),
        "source": ("traffic.source", _coord),
        "target": ("traffic.target", _coord),
        "id_bits": ("traffic.id_bits", int),
        "narrow_outstanding": ("top.narrow_outstanding", int),
        "wide_outstanding": ("top.wide_outstanding", int),
    },
    "experiment": {
        "variant": ("top.variant", Variant),
        "seed": ("top.seed", int),
        "max_cycles": ("top.max_cycles", int),
        "out_dir": ("top.out_dir", Path),
    },
}


def _line_index(text: str) -> Dict[Tuple[str, Optional[str]], int]:
    """1-based line of every section header and key."""
    index: Dict[Tuple[str, Optional[str]], int] = {}
    section = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", line)
        if m and section is not None:
            index.setdefault((section, m.group(1).strip().lower()), no)
    return index


def parse_config(text: str, path="<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigFileError(path, line, "malformed line") from None
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigFileError(path, line, exc.message.split("\n")[0]) from None
    lines = _line_index(text)

    values: Dict[str, Dict[str, object]] = {"mesh": {}, "ni": {}, "router": {}, "traffic": {}, "top": {}}
    for section in parser.sections():
        schema = _SCHEMA.get(section)
        if schema is None:
            raise ConfigFileError(path, lines.get((section, None)), f"unknown section [{section}]")
        for key, raw in parser.items(section):
            line = lines.get((section, key))
            if key not in schema:
                raise ConfigFileError(path, line, f"unknown key {key!r} in [{section}]")
            target, conv = schema[key]
            obj, attr = target.split(".")
            try:
                values[obj][attr] = conv(raw.strip())
            except ValueError as exc:
                raise ConfigFileError(path, line, f"bad value for {key}: {exc}") from None

    top = values["top"]
    seed = top.get("seed", 0)
    values["traffic"]["seed"] = seed
    try:
        return ExperimentConfig(
            mesh=MeshSpec(**values["mesh"]),
            ni=NiConfig(**values["ni"]),
            router=RouterParams(**values["router"]),
            traffic=TrafficSpec(**values["traffic"]),
            **top,
        )
    except ConfigurationError as exc:
        raise ConfigFileError(path, None, str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    return parse_config(text, path)


def preset_config(mesh: Optional[Tuple[int, int]] = None) -> ExperimentConfig:
    """Defaults used by the built-in presets (4x4 mesh, victim at (1,1) reading from (2,1))."""
    cfg = ExperimentConfig()
    if mesh is not None:
        cfg = dataclasses.replace(cfg, mesh=MeshSpec(*mesh))
    return cfg
