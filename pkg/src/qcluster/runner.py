"""Scenario execution: cluster assembly, run orchestration, artifact emission.

A run produces three artifacts: trace.jsonl (every event and record, one JSON
object per line), pulses.csv (the analog pulse schedule), and report.txt
(human-readable summary). Reruns of the same scenario and seed are
byte-identical.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .control import (
    Cluster,
    Interpreter,
    JobReport,
    JobServer,
    ReadoutEmulator,
    schedule_periodic_resync,
)
from .errors import ValidationError
from .fsm import FeedForwardFsm, ReadoutFsm, StarTopology
from .link import Lane, LaneConfig, ThroughputReport, effective_throughput
from .ptp import RingTopology, SyncLink
from .scenario import Scenario
from .sim import Board, ClockDomain, Engine
from .timebase import ns

PULSES_CSV_HEADER = "board,t_start_ns,length_ns,amplitude_V,frequency_GHz"


def build_cluster(scenario: Scenario) -> Cluster:
    """Wire boards, ring, star, FSMs and interpreters per the scenario.

    Fault-injection counter offsets are drawn from random.Random(seed) in
    ring order and added to each non-primary board's configured offset.
    """
    engine = Engine()
    boards = {}
    for spec in scenario.boards:
        boards[spec.id] = Board(spec.id, ClockDomain(
            phase_offset=spec.phase_ticks,
            drift_ppm=spec.drift_ppm,
            counter_correction=spec.offset_cycles,
        ))
    if scenario.random_offset_cycles is not None:
        low, high = scenario.random_offset_cycles
        rng = random.Random(scenario.seed)
        primary = scenario.ring_order[0]
        for board_id in scenario.ring_order:
            if board_id == primary:
                continue
            boards[board_id].clock.counter_correction += rng.randint(low, high)

    ring = RingTopology(
        [boards[i] for i in scenario.ring_order],
        [SyncLink(l.forward, l.reverse) for l in scenario.ring_links],
    )

    star = None
    readout = None
    feedforward = {}
    lanes = []
    emulator = ReadoutEmulator(scenario.scripts, scenario.demodulation_delay)
    if scenario.star_root is not None:
        lane_map = {}
        for lane_id, leaf in enumerate(scenario.star_leaves):
            lane = Lane(engine, lane_id, scenario.star_root, leaf, LaneConfig(
                fiber_delay=scenario.lane.fiber_delay,
                tx_cdc_depth=scenario.lane.tx_cdc_depth,
                rx_cdc_depth=scenario.lane.rx_cdc_depth,
                cdc_latency_cycles=scenario.lane.cdc_latency_cycles,
            ))
            boards[scenario.star_root].attach_lane(lane_id)
            boards[leaf].attach_lane(lane_id)
            lane_map[leaf] = lane
            lanes.append(lane)
        star = StarTopology(scenario.star_root, scenario.star_leaves, lane_map)
        readout = ReadoutFsm(engine, scenario.star_root, lanes,
                             broadcast_gap=scenario.broadcast_gap)
        for leaf in scenario.star_leaves:
            ff = FeedForwardFsm(engine, leaf)
            ff.attach(lane_map[leaf])
            feedforward[leaf] = ff

    interpreters = {}
    for board_id, board in boards.items():
        interpreters[board_id] = Interpreter(
            engine, board,
            readout=readout if board_id == scenario.star_root else None,
            feedforward=feedforward.get(board_id),
            emulator=emulator,
        )
    return Cluster(engine=engine, boards=boards, ring=ring, star=star,
                   readout=readout, feedforward=feedforward, emulator=emulator,
                   lanes=lanes, interpreters=interpreters)


@dataclass
class RunResult:
    scenario: Scenario
    report: JobReport
    throughput: Optional[ThroughputReport]
    trace_jsonl: str
    pulses_csv: str
    report_txt: str
    summary: dict


def run_scenario(scenario: Scenario, *, until: Optional[int] = None,
                 seed: Optional[int] = None) -> RunResult:
    """Run a scenario end to end; `until`/`seed` override the file's values."""
    if seed is not None:
        scenario.seed = seed
    cluster = build_cluster(scenario)
    server = JobServer(cluster)
    t_stop = until if until is not None else scenario.t_stop

    server.synchronize(turnaround=scenario.turnaround)
    if scenario.resync_period is not None:
        if t_stop is None:
            raise ValidationError("ring.resync_period", "periodic resync needs a t_stop")
        schedule_periodic_resync(cluster.engine, cluster.ring,
                                 scenario.resync_period, t_stop,
                                 turnaround=scenario.turnaround)

    if scenario.binaries:
        start_counter = scenario.start_counter
        if start_counter is None:
            start_counter = server.default_start_counter(scenario.start_margin_cycles)
        report = server.run_job(scenario.binaries, start_counter=start_counter,
                                t_stop=t_stop)
    else:
        if t_stop is not None:
            cluster.engine.run_until(t_stop)
        else:
            cluster.engine.run()
        report = server.build_report()

    throughput = None
    if cluster.lanes:
        throughput = effective_throughput(cluster.lanes[0].config,
                                          cluster.lanes[0].schedule)
    trace_jsonl = cluster.engine.trace_jsonl()
    pulses_csv = render_pulses_csv(report)
    report_txt = render_report_txt(scenario, report, throughput, cluster)
    summary = summarize(scenario, report, throughput, cluster)
    return RunResult(scenario, report, throughput, trace_jsonl, pulses_csv,
                     report_txt, summary)


def render_pulses_csv(report: JobReport) -> str:
    lines = [PULSES_CSV_HEADER]
    for pulse in report.pulses:
        lines.append(",".join([
            str(pulse.board),
            str(ns(pulse.t_start)),
            str(ns(pulse.length)),
            str(pulse.amplitude_v),
            str(pulse.frequency_hz / 1e9),
        ]))
    return "\n".join(lines) + "\n"


def _format_estimate(estimate) -> str:
    text = f"{estimate.cycles} cycles"
    if estimate.residual:
        text += f" ({'+' if estimate.residual > 0 else '-'}1/2 residual)"
    return text


def render_sync_lines(reports) -> list:
    lines = []
    for r in reports:
        role = "verify " if r.verification else "correct"
        lines.append(
            f"  {r.primary} -> {r.secondary} [{role}]: "
            f"offset {_format_estimate(r.offset)}, "
            f"transit {_format_estimate(r.transit)}, "
            f"correction {r.correction:+d}"
        )
    return lines


def render_throughput_txt(report: ThroughputReport) -> str:
    lines = [
        "lane throughput:",
        f"  line rate          {float(report.line_rate_bps) / 1e9:.4f} Gbps"
        f" ({report.line_rate_bps} bps)",
        f"  encoding factor    {report.encoding_factor}"
        f" (overhead {report.encoding_overhead} = {report.overhead_percent:.2f}%)",
        f"  payload ceiling    {float(report.payload_ceiling_bps) / 1e9:.4f} Gbps"
        f" ({report.payload_ceiling_bps} bps)",
        f"  compensation loss  {report.comp_fraction}",
        f"  effective payload  {float(report.effective_bps) / 1e9:.6f} Gbps"
        f" ({report.effective_bps} bps)",
    ]
    return "\n".join(lines) + "\n"


def render_report_txt(scenario: Scenario, report: JobReport,
                      throughput: Optional[ThroughputReport],
                      cluster: Cluster) -> str:
    lines = []
    title = scenario.description or "cluster run"
    lines.append(f"run report: {title}")
    lines.append(f"boards: {', '.join(str(b.id) for b in scenario.boards)}")
    lines.append("sync exchanges:")
    lines.extend(render_sync_lines(report.sync))
    if report.start_counter >= 0:
        lines.append(f"start broadcast: counter {report.start_counter}"
                     f" -> t={ns(report.start_tick)} ns")
    if report.latency:
        lines.append("latency (start pulse -> first conditional pulse):")
        for entry in report.latency:
            if entry.interval_ticks is None:
                lines.append(f"  board {entry.board}: no conditional pulse")
            else:
                lines.append(
                    f"  board {entry.board}: {ns(entry.interval_ticks)} ns"
                    f" ({entry.interval_ticks} ticks)")
    if report.arrivals:
        lines.append("feed-forward data arrival:")
        for entry in report.arrivals:
            if entry.first_branch_t is None:
                lines.append(f"  board {entry.board}: never branched")
                continue
            update = ("none" if entry.register_update_t is None
                      else f"{ns(entry.register_update_t)} ns")
            margin = ("n/a" if entry.margin_ticks is None
                      else f"{ns(entry.margin_ticks)} ns")
            verdict = "ok" if entry.ok else "MISSED"
            lines.append(
                f"  board {entry.board}: register update {update},"
                f" first branch {ns(entry.first_branch_t)} ns,"
                f" margin {margin} [{verdict}]")
    counters = report.counters
    lines.append(
        "counters: "
        f"frames_sent={counters['frames_sent']}"
        f" rejected_captures={counters['rejected_captures']}"
        f" dropped_frames={counters['dropped_frames']}")
    warnings = [r for r in cluster.engine.trace if r.kind == "warning"]
    lines.append(f"warnings: {len(warnings)}")
    lines.append(f"pulses: {len(report.pulses)}")
    lines.append(f"trace records: {len(cluster.engine.trace)}")
    body = "\n".join(lines) + "\n"
    if throughput is not None:
        body += render_throughput_txt(throughput)
    return body


def sync_entry(r) -> dict:
    return {
        "primary": r.primary,
        "secondary": r.secondary,
        "t1": r.exchange.t1, "t2": r.exchange.t2,
        "t3": r.exchange.t3, "t4": r.exchange.t4,
        "offset_cycles": r.offset.cycles,
        "offset_residual": str(r.offset.residual),
        "transit_cycles": r.transit.cycles,
        "transit_residual": str(r.transit.residual),
        "correction": r.correction,
        "verification": r.verification,
    }


def throughput_entry(report: ThroughputReport) -> dict:
    return {
        "line_rate_bps": str(report.line_rate_bps),
        "encoding_factor": str(report.encoding_factor),
        "encoding_overhead": str(report.encoding_overhead),
        "overhead_percent": report.overhead_percent,
        "payload_ceiling_bps": str(report.payload_ceiling_bps),
        "comp_fraction": str(report.comp_fraction),
        "effective_bps": str(report.effective_bps),
        "effective_gbps": float(report.effective_bps) / 1e9,
    }


def summarize(scenario: Scenario, report: JobReport,
              throughput: Optional[ThroughputReport], cluster: Cluster) -> dict:
    warnings = sum(1 for r in cluster.engine.trace if r.kind == "warning")
    return {
        "description": scenario.description,
        "seed": scenario.seed,
        "boards": [b.id for b in scenario.boards],
        "sync": [sync_entry(r) for r in report.sync],
        "start_counter": report.start_counter,
        "start_tick": report.start_tick,
        "latency": [
            {
                "board": e.board,
                "start_pulse_ns": None if e.start_pulse_t is None else ns(e.start_pulse_t),
                "first_conditional_ns": (None if e.first_conditional_t is None
                                         else ns(e.first_conditional_t)),
                "interval_ticks": e.interval_ticks,
                "interval_ns": None if e.interval_ticks is None else ns(e.interval_ticks),
            }
            for e in report.latency
        ],
        "arrivals": [
            {
                "board": e.board,
                "register_update_ns": (None if e.register_update_t is None
                                       else ns(e.register_update_t)),
                "first_branch_ns": (None if e.first_branch_t is None
                                    else ns(e.first_branch_t)),
                "margin_ns": None if e.margin_ticks is None else ns(e.margin_ticks),
                "ok": e.ok,
            }
            for e in report.arrivals
        ],
        "counters": report.counters,
        "warnings": warnings,
        "pulse_count": len(report.pulses),
        "trace_records": len(cluster.engine.trace),
        "throughput": None if throughput is None else throughput_entry(throughput),
    }


def write_outputs(result: RunResult, outdir) -> dict:
    """Write trace.jsonl, pulses.csv and report.txt under outdir; returns paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "trace": outdir / "trace.jsonl",
        "pulses": outdir / "pulses.csv",
        "report": outdir / "report.txt",
    }
    paths["trace"].write_text(result.trace_jsonl)
    paths["pulses"].write_text(result.pulses_csv)
    paths["report"].write_text(result.report_txt)
    return paths


@dataclass
class SyncCheckResult:
    reports: list
    report_txt: str
    closure_residual_cycles: int


def sync_check(scenario: Scenario, *, seed: Optional[int] = None) -> SyncCheckResult:
    """Ring synchronization only; reports corrections and the closure residual."""
    if seed is not None:
        scenario.seed = seed
    cluster = build_cluster(scenario)
    server = JobServer(cluster)
    reports = server.synchronize(turnaround=scenario.turnaround)
    closing = reports[-1]
    lines = ["sync check:"]
    lines.extend(render_sync_lines(reports))
    lines.append(f"ring closure residual: {_format_estimate(closing.offset)}")
    ok = closing.offset.cycles == 0
    lines.append(f"closure within one cycle: {'yes' if ok else 'NO'}")
    return SyncCheckResult(reports, "\n".join(lines) + "\n", closing.offset.cycles)


def throughput_check(scenario: Optional[Scenario] = None) -> ThroughputReport:
    """Lane throughput accounting; scenario lane parameters are optional."""
    if scenario is None:
        config = LaneConfig()
    else:
        config = LaneConfig(
            fiber_delay=scenario.lane.fiber_delay,
            tx_cdc_depth=scenario.lane.tx_cdc_depth,
            rx_cdc_depth=scenario.lane.rx_cdc_depth,
            cdc_latency_cycles=scenario.lane.cdc_latency_cycles,
        )
    return effective_throughput(config)
