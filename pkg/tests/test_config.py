from pathlib import Path

import pytest

from nwnoc.config import ConfigFileError, ExperimentConfig, load_config, parse_config, preset_config
from nwnoc.errors import ConfigurationError
from nwnoc.protocol import Bus, Variant
from nwnoc.traffic import Direction

DEFAULT_INI = Path(__file__).resolve().parents[1] / "configs" / "default.ini"


def test_shipped_config_matches_defaults():
    # the example file spells out every default
    assert load_config(DEFAULT_INI) == ExperimentConfig()


def test_overrides_are_applied():
    cfg = parse_config("""
[mesh]
width = 3
height = 2
boundary_memories = west:0, north:2
[router]
output_buffered = no
[traffic]
direction = two_dir
source = 0,0
target = 2,1
wide_outstanding = 4
[experiment]
variant = wide-only
seed = 9
""")
    assert (cfg.mesh.width, cfg.mesh.height) == (3, 2)
    assert cfg.mesh.boundary_memories == (("west", 0), ("north", 2))
    assert not cfg.router.output_buffered
    assert cfg.traffic.direction is Direction.BIDIRECTIONAL
    assert cfg.variant is Variant.WIDE_ONLY
    assert cfg.seed == cfg.traffic.seed == 9
    assert cfg.max_outstanding == {Bus.NARROW: 8, Bus.WIDE: 4}


@pytest.mark.parametrize("text,line,fragment", [
    ("[mesh]\nwidth = 4\n[bogus]\nx = 1\n", 3, "unknown section"),
    ("[mesh]\nwidth = 4\ncolour = red\n", 3, "unknown key"),
    ("[ni]\n\nbypass = maybe\n", 3, "bypass"),
    ("[traffic]\nsource = 1\n", 2, "source"),
    ("[mesh]\nwidth = 4\nthis line is broken\n", 3, "malformed"),
])
def test_errors_name_the_line(text, line, fragment):
    with pytest.raises(ConfigFileError) as exc:
        parse_config(text, "x.ini")
    assert exc.value.line == line
    assert f"x.ini:{line}:" in str(exc.value) and fragment in str(exc.value)


def test_semantic_errors_are_configuration_errors():
    with pytest.raises(ConfigurationError, match="not a tile"):
        parse_config("[mesh]\nwidth = 2\nheight = 2\n[traffic]\ntarget = 2,1\n")
    with pytest.raises(ConfigurationError, match="off the mesh boundary"):
        parse_config("[mesh]\nboundary_memories = east:4\n")


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="config file not found"):
        load_config(tmp_path / "nope.ini")


def test_preset_config_mesh_override():
    assert preset_config((7, 7)).mesh.width == 7
    assert preset_config() == ExperimentConfig()


def test_with_seed_reaches_traffic():
    cfg = ExperimentConfig().with_seed(3)
    assert cfg.seed == cfg.traffic.seed == 3
