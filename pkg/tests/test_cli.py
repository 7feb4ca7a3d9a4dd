import subprocess
import sys

import pytest

from nwnoc.cli import main


def test_zeroload_preset(capsys):
    assert main(["preset", "zeroload"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["round_trip_cycles,18", "router_cycles,8", "ni_cycles,1", "endpoint_cycles,9"]


def test_boundary_bw_preset(capsys):
    assert main(["preset", "boundary-bw"]) == 0
    rows = dict(line.split(",") for line in capsys.readouterr().out.splitlines())
    assert rows["mesh"] == "7x7" and rows["boundary_ports"] == "28"
    assert rows["wide_link_gbps"] == "629.76"
    assert rows["boundary_bandwidth_tb_per_s"] == "4.408"


def test_unknown_preset_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["preset", "fig9"])
    assert exc.value.code == 2


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == 2
    assert "config file not found" in capsys.readouterr().err


def test_bad_config_line_exits_2(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[mesh]\nwidth = four\n")
    assert main(["run", "--config", str(ini)]) == 2
    assert f"{ini}:2:" in capsys.readouterr().err


def test_run_writes_summary_and_trace(tmp_path, capsys):
    ini = tmp_path / "small.ini"
    ini.write_text("[mesh]\nwidth = 2\nheight = 1\n[traffic]\nsource = 0,0\ntarget = 1,0\n"
                   "narrow_txn_count = 5\nwide_txn_count = 2\n")
    out = tmp_path / "o"
    assert main(["run", "--config", str(ini), "--out", str(out), "--trace", "--seed", "4"]) == 0
    summary = dict(line.split(",") for line in (out / "summary.csv").read_text().splitlines()[1:])
    assert summary["completed"] == "7" and summary["timeouts"] == "0"
    trace = (out / "trace.csv").read_text().splitlines()
    assert trace[0].startswith("cycle,") and len(trace) > 1
    assert (out / "occupancy.csv").read_text().startswith("ni,cycle,rob_free_bytes,outstanding")
    first = (out / "trace.csv").read_bytes()
    assert main(["run", "--config", str(ini), "--out", str(out), "--trace", "--seed", "4"]) == 0
    assert (out / "trace.csv").read_bytes() == first


def test_timeout_exits_1(tmp_path, capsys):
    ini = tmp_path / "t.ini"
    ini.write_text("[mesh]\nwidth = 2\nheight = 1\n[traffic]\nsource = 0,0\ntarget = 1,0\n")
    assert main(["run", "--config", str(ini), "--out", str(tmp_path), "--max-cycles", "20"]) == 1
    assert "timed out" in capsys.readouterr().err


def test_check_small(capsys):
    assert main(["check", "--runs", "5", "--seed", "100"]) == 0
    assert capsys.readouterr().out.splitlines() == ["runs,5", "violations,0"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "nwnoc", "preset", "zeroload"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "round_trip_cycles,18" in res.stdout
