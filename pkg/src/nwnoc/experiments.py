"""
Built-in experiments: zero-load round trip, the two interference sweeps,
boundary bandwidth and the randomized ordering check.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import os
import random
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from .axi import AxiTransaction, TxnKind, oracle_check_order
from .config import ExperimentConfig
from .errors import ProtocolError
from .kernel import RunReport, SimConfig
from .metrics import SimReport, measure
from .ni import NiConfig
from .protocol import Bus, Variant
from .topology import (Mesh, MeshSpec, RouterParams, boundary_bandwidth, build_mesh,
                       narrow_boundary_bandwidth, peak_link_bandwidth)
from .traffic import Direction, generate


def build_for(cfg: ExperimentConfig, variant: Optional[Variant] = None) -> Mesh:
    return build_mesh(cfg.mesh, variant or cfg.variant, ni=cfg.ni, router=cfg.router,
                      max_outstanding=cfg.max_outstanding, seed=cfg.seed)


def simulate(cfg: ExperimentConfig, level: Optional[int] = None,
             variant: Optional[Variant] = None, direction: Optional[Direction] = None,
             trace: bool = False) -> Tuple[SimReport, RunReport]:
    """Run one sweep point (or the plain traffic spec when ``level`` is None)."""
    traffic = cfg.traffic
    if direction is not None:
        traffic = dataclasses.replace(traffic, direction=direction)
    if trace:
        cfg = dataclasses.replace(cfg, ni=dataclasses.replace(cfg.ni, record_occupancy=True))
    mesh = build_for(cfg, variant)
    mesh.load(generate(traffic, level))
    run = mesh.run(SimConfig(max_cycles=cfg.max_cycles, seed=cfg.seed, record_trace=trace))
    return measure(mesh, run), run


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


@dataclass
class SweepResult:
    """Metric per level for every (direction, variant) curve of one sweep."""
    metric: str
    curves: Dict[Tuple[Direction, Variant], List[Tuple[int, float]]] = field(default_factory=dict)
    reports: Dict[Tuple[Direction, Variant, int], SimReport] = field(default_factory=dict)
    files: List[Path] = field(default_factory=list)

    def values(self, direction: Direction, variant: Variant) -> List[float]:
        return [v for _, v in self.curves[direction, variant]]

    @property
    def flagged(self) -> List[str]:
        out = []
        for (d, v, lv), rep in sorted(self.reports.items(), key=lambda kv: (kv[0][0].value,
                                                                          kv[0][1].value, kv[0][2])):
            if rep.flagged:
                out.append(f"{d.value}/{v.short}/level {lv}: {rep.timeouts} timeouts, "
                           f"{len(rep.order_violations)} order violations, {len(rep.rob_leaks)} ROB leaks, "
                           f"{len(rep.unbalanced_links)} unbalanced links")
        return out


def _point(args) -> Tuple[Direction, Variant, int, SimReport]:
    cfg, direction, variant, level = args
    rep, _ = simulate(cfg, level, variant, direction)
    return direction, variant, level, rep


def sweep(cfg: ExperimentConfig, metric: str, prefix: str, out_dir: Optional[Path] = None,
          jobs: int = 1) -> SweepResult:
    points = [(cfg, d, v, lv) for d in Direction for v in Variant
              for lv in cfg.traffic.interference_levels]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_point, points))
    else:
        done = [_point(p) for p in points]
    res = SweepResult(metric)
    for d, v, lv, rep in done:
        res.reports[d, v, lv] = rep
        value = rep.narrow.mean if metric == "narrow_read_lat" else rep.effective_wide_bw
        res.curves.setdefault((d, v), []).append((lv, value))
    for (d, v), rows in res.curves.items():
        rows.sort()
        if out_dir is not None:
            path = Path(out_dir) / f"{prefix}_{d.value}_{v.short}.csv"
            write_atomic(path, csv_text(("level", metric), [(lv, f"{val:.4f}") for lv, val in rows]))
            res.files.append(path)
    res.files.sort()
    return res


def fig5a(cfg: ExperimentConfig, out_dir: Optional[Path] = None, jobs: int = 1) -> SweepResult:
    """Narrow read latency under growing wide interference."""
    cfg = dataclasses.replace(cfg, traffic=dataclasses.replace(cfg.traffic, interference="wide"))
    return sweep(cfg, "narrow_read_lat", "lat", out_dir, jobs)


def fig5b(cfg: ExperimentConfig, out_dir: Optional[Path] = None, jobs: int = 1) -> SweepResult:
    """Effective wide bandwidth under growing narrow interference."""
    cfg = dataclasses.replace(cfg, traffic=dataclasses.replace(cfg.traffic, interference="narrow"))
    return sweep(cfg, "wide_read_bw", "bw", out_dir, jobs)


@dataclass(frozen=True)
class ZeroLoad:
    round_trip_cycles: int
    router_cycles: int
    ni_cycles: int
    endpoint_cycles: int


def zeroload(cfg: ExperimentConfig) -> ZeroLoad:
    """Single narrow read between two adjacent tiles of an otherwise idle mesh."""
    src = cfg.traffic.source
    dst = (src[0] + 1, src[1]) if src[0] + 1 < cfg.mesh.width else (src[0] - 1, src[1])
    mesh = build_for(cfg)
    mesh.load([AxiTransaction(src, 0, TxnKind.READ, Bus.NARROW, dst, uid=0)])
    run = mesh.run(SimConfig(max_cycles=cfg.max_cycles, seed=cfg.seed))
    rep = measure(mesh, run)
    hop = 2 if cfg.router.output_buffered else 1
    return ZeroLoad(int(rep.narrow.mean) if rep.narrow.count else -1,
                    4 * hop, 1, cfg.ni.internal_latency_cycles)


def boundary_report(spec: MeshSpec) -> List[Tuple[str, str]]:
    link = peak_link_bandwidth(Bus.WIDE.data_bits, spec.frequency_hz)
    return [
        ("mesh", f"{spec.width}x{spec.height}"),
        ("boundary_ports", str(spec.boundary_ports)),
        ("wide_link_gbps", f"{link / 1e9:.2f}"),
        ("wide_link_duplex_tbps", f"{2 * link / 1e12:.4f}"),
        ("boundary_bandwidth_tb_per_s", f"{boundary_bandwidth(spec) / 1e12:.3f}"),
        ("narrow_extra_tb_per_s", f"{narrow_boundary_bandwidth(spec) / 1e12:.3f}"),
    ]


# randomized ordering check ---------------------------------------------------

SHAPES = [(w, h) for w in range(1, 10) for h in range(1, 10) if 2 <= w * h <= 9]


@dataclass(frozen=True)
class OrderInstance:
    spec: MeshSpec
    variant: Variant
    router: RouterParams
    ni: NiConfig
    initiator_stall_prob: float
    txns: Tuple[AxiTransaction, ...]


def random_instance(seed: int) -> OrderInstance:
    rng = random.Random(seed)
    w, h = rng.choice(SHAPES)
    mems: Tuple[Tuple[str, int], ...] = ()
    if rng.random() < 0.3:
        edge = rng.choice(("north", "south", "east", "west"))
        mems = ((edge, rng.randrange(w if edge in ("north", "south") else h)),)
    spec = MeshSpec(w, h, mems)
    tiles = spec.tiles
    targets = tiles + [spec.attachment(e, i)[0] for e, i in mems]
    id_bits = rng.randint(2, 4)
    ni = NiConfig(wide_rob_bytes=rng.choice((1024, 2048, 8192)),
                  narrow_rob_bytes=rng.choice((128, 256, 2048)),
                  b_table_entries=rng.choice((2, 4, 64)),
                  reorder_table_entries=rng.choice((3, 8, 64)),
                  internal_latency_cycles=rng.choice((0, 1, 3, 9)),
                  eject_stall_prob=rng.choice((0.0, 0.1, 0.3)))
    router = RouterParams(output_buffered=rng.random() < 0.5)
    txns = []
    for src in rng.sample(tiles, rng.randint(1, min(3, len(tiles)))):
        dsts = [t for t in targets if t != src]
        for _ in range(rng.randint(3, 10)):
            bus = rng.choice((Bus.NARROW, Bus.WIDE))
            txns.append(AxiTransaction(src, rng.randrange(1 << id_bits),
                                       rng.choice((TxnKind.READ, TxnKind.WRITE)), bus,
                                       rng.choice(dsts), burst_len=rng.randint(1, 16),
                                       issue_cycle=rng.randrange(8), uid=len(txns)))
    return OrderInstance(spec, rng.choice(tuple(Variant)), router, ni,
                         rng.choice((0.0, 0.2)), tuple(txns))


ORDERING = "ordering"
FLOW_CONTROL = "flow-control"
PROGRESS = "progress"
CRASH = "crash"


class Problem(NamedTuple):
    category: str
    seed: int
    bypass: Optional[bool]
    message: str

    def __str__(self) -> str:
        mode = "" if self.bypass is None else f" bypass={'on' if self.bypass else 'off'}"
        return f"[{self.category}] seed {self.seed}{mode}: {self.message}"


@dataclass
class CheckOutcome:
    seed: int
    bypass: bool
    problems: List[Problem]
    orders: Dict[tuple, List[int]]


def run_instance(inst: OrderInstance, bypass: bool, seed: int = 0,
                 max_cycles: int = 20_000, debug: bool = False) -> CheckOutcome:
    ni = dataclasses.replace(inst.ni, bypass=bypass)
    mesh = build_mesh(inst.spec, inst.variant, ni=ni, router=inst.router,
                      initiator_stall_prob=inst.initiator_stall_prob, seed=seed)
    mesh.load(inst.txns)
    problems: List[Problem] = []

    def flag(category: str, message: str) -> None:
        problems.append(Problem(category, seed, bypass, message))

    try:
        run = mesh.run(SimConfig(max_cycles=max_cycles, seed=seed, debug=debug))
    except ProtocolError as exc:
        flag(FLOW_CONTROL, f"ProtocolError: {exc}")
        return CheckOutcome(seed, bypass, problems, {})
    except Exception as exc:  # any other simulator error fails the check without stopping the sweep
        flag(CRASH, f"{type(exc).__name__}: {exc}")
        return CheckOutcome(seed, bypass, problems, {})
    if run.timed_out:
        flag(PROGRESS, f"timed out after {run.cycles} cycles")
    for lid, (sent, received) in run.link_counts.items():
        if sent != received:
            flag(PROGRESS, f"link {lid}: {sent} sent, {received} received")
    if mesh.flits_in_network():
        flag(PROGRESS, f"{mesh.flits_in_network()} flits left in the network")
    orders: Dict[tuple, List[int]] = {}
    for ep in mesh.initiators.values():
        for v in oracle_check_order(ep.issue_log, ep.trace):
            flag(ORDERING, str(v))
        if ep.incomplete():
            flag(PROGRESS, f"{ep.name}: {len(ep.incomplete())} transactions never completed")
        for d in ep.trace:
            orders.setdefault(d.txn.stream, []).append(d.txn.uid)
    for n in mesh.nis.values():
        if n.slot_misses:
            flag(FLOW_CONTROL, f"{n.name}: {n.slot_misses} responses without a reserved slot")
        for bus, alloc in list(n.rob.items()) + list(n.btab.items()):
            if alloc.max_used_slots > alloc.num_slots:
                flag(FLOW_CONTROL, f"{n.name}: {bus.value} storage over capacity")
            if alloc.free_bytes != alloc.capacity_bytes:
                flag(FLOW_CONTROL, f"{n.name}: {bus.value} storage holds {alloc.used_bytes} B after drain")
    return CheckOutcome(seed, bypass, problems, orders)


def check_seed(seed: int) -> List[Problem]:
    """Run one random instance with bypass on and off; returns the problems found."""
    inst = random_instance(seed)
    on = run_instance(inst, True, seed)
    off = run_instance(inst, False, seed)
    problems = on.problems + off.problems
    if not problems and on.orders != off.orders:
        problems.append(Problem(ORDERING, seed, None, "delivery orders differ between bypass modes"))
    return problems


def _check_chunk(seeds: Sequence[int]) -> List[Problem]:
    out = []
    for s in seeds:
        out += check_seed(s)
    return out


def ordering_check(runs: int = 10_000, base_seed: int = 0, jobs: int = 1) -> List[Problem]:
    seeds = list(range(base_seed, base_seed + runs))
    if jobs <= 1:
        return _check_chunk(seeds)
    chunks = [seeds[i::jobs] for i in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(_check_chunk, chunks))
    return sorted((p for chunk in results for p in chunk), key=lambda p: (p.seed, str(p)))
