"""Acceptance gate: nine end-to-end criteria, one printed verdict line each.

Each test prints `[criterion N] PASS|FAIL - summary` on the real stdout
(outside pytest capture) and then asserts with the gathered details.
Tolerances are part of each check; most are exact by construction.
"""

import json
import random
from fractions import Fraction

import pytest
import yaml

from qcluster.control import JobServer
from qcluster.frames import QubitResult, decode_frame, encode_frame
from qcluster.link import Lane, LaneConfig, LinkFrame, corrupt, effective_throughput
from qcluster.fsm import FeedForwardFsm
from qcluster.ptp import PtpExchange, SyncLink, compute_offset, compute_transit, perform_exchange
from qcluster.runner import build_cluster, run_scenario, sync_check
from qcluster.scenario import load_scenario, parse_scenario
from qcluster.sim import Board, ClockDomain, Engine

TICKS_PER_CYCLE = 165
TICKS_PER_SECOND = 82_500_000_000


@pytest.fixture
def verdict(capfd):
    def report(number: int, description: str, problems: list):
        status = "PASS" if not problems else "FAIL"
        with capfd.disabled():
            print(f"[criterion {number}] {status} - {description}", flush=True)
        assert not problems, "; ".join(problems[:10])
    return report


def test_criterion_1_offset_and_transit_recovery_is_exact(verdict):
    rng = random.Random(20260814)
    problems = []
    for _ in range(10_000):
        offset = rng.randint(-(10 ** 6), 10 ** 6)
        delay = rng.randint(0, 10 ** 4)
        turnaround = rng.randint(0, 1_000)
        t1 = rng.randint(0, 10 ** 9)
        exchange = PtpExchange(t1, t1 + delay + offset,
                               t1 + delay + offset + turnaround,
                               t1 + 2 * delay + turnaround)
        got_offset = compute_offset(exchange)
        got_transit = compute_transit(exchange)
        if (got_offset.cycles, got_offset.residual) != (offset, 0):
            problems.append(f"offset {offset}: got {got_offset}")
        if (got_transit.cycles, got_transit.residual) != (delay, 0):
            problems.append(f"transit {delay}: got {got_transit}")

    # odd timestamp sums: one extra cycle on the forward path makes the true
    # values half-integers; truncation toward zero must record the +-1/2
    for _ in range(2_000):
        offset = rng.randint(-(10 ** 6), 10 ** 6)
        delay = rng.randint(0, 10 ** 4)
        t1 = rng.randint(0, 10 ** 9)
        exchange = PtpExchange(t1, t1 + delay + 1 + offset,
                               t1 + delay + 1 + offset + 330,
                               t1 + 2 * delay + 1 + 330)
        got_offset = compute_offset(exchange)
        got_transit = compute_transit(exchange)
        true_offset = offset + Fraction(1, 2)
        true_transit = delay + Fraction(1, 2)
        if got_offset.cycles + got_offset.residual != true_offset:
            problems.append(f"odd offset {true_offset}: got {got_offset}")
        if abs(got_offset.residual) != Fraction(1, 2):
            problems.append(f"odd offset residual: got {got_offset.residual}")
        if got_offset.cycles != int(true_offset):  # int() truncates toward zero
            problems.append(f"odd offset rounding: {got_offset.cycles}")
        if got_transit.cycles + got_transit.residual != true_transit:
            problems.append(f"odd transit {true_transit}: got {got_transit}")

    # the same recovery through the event-driven exchange on live clocks
    for _ in range(50):
        offset = rng.randint(-(10 ** 6), 10 ** 6)
        delay_cycles = rng.randint(0, 10 ** 4)
        engine = Engine()
        primary = Board(1, ClockDomain())
        secondary = Board(2, ClockDomain(counter_correction=offset))
        link = SyncLink(delay_cycles * TICKS_PER_CYCLE,
                        delay_cycles * TICKS_PER_CYCLE)
        exchange = perform_exchange(engine, primary, secondary, link)
        got = compute_offset(exchange)
        if (got.cycles, got.residual) != (offset, 0):
            problems.append(f"live offset {offset}: got {got}")

    verdict(1, "offset/transit recovery exact over 10000 randomized exchanges",
            problems)


def ring_yaml(n: int, seed: int) -> str:
    boards = "\n".join(f"  - id: {i}" for i in range(1, n + 1))
    order = ", ".join(str(i) for i in range(1, n + 1))
    return (
        "schema_version: 1\n"
        f"seed: {seed}\n"
        "boards:\n"
        f"{boards}\n"
        "ring:\n"
        f"  order: [{order}]\n"
        "  link_delay: 3cycles\n"
        "fault_injection:\n"
        "  random_offset_cycles: [-1000000, 1000000]\n"
    )


def test_criterion_2_rings_converge_and_hold(verdict):
    problems = []
    for n in (2, 3, 4, 8):
        scenario = parse_scenario(ring_yaml(n, seed=100 + n))
        cluster = build_cluster(scenario)
        reports = JobServer(cluster).synchronize(turnaround=scenario.turnaround)
        closing = reports[-1]
        if not closing.verification or closing.offset.cycles != 0:
            problems.append(f"n={n}: closure offset {closing.offset.cycles}")
        t_sync = cluster.engine.now

        # 100 samples across 10 ms: every pair of counters must agree exactly
        horizon = TICKS_PER_SECOND // 100
        for i in range(100):
            t = t_sync + (i * horizon) // 99
            counts = {b.clock.counter_at(t) for b in cluster.boards.values()}
            if len(counts) != 1:
                problems.append(f"n={n}: counters diverge at t={t}: {counts}")
                break

        # no resync scheduled, zero drift: still aligned a full second out
        t_far = t_sync + TICKS_PER_SECOND
        cluster.engine.run_until(t_far)
        for i in range(10):
            t = t_sync + ((i + 1) * TICKS_PER_SECOND) // 10
            counts = {b.clock.counter_at(t) for b in cluster.boards.values()}
            if len(counts) != 1:
                problems.append(f"n={n}: counters diverge at 1s horizon: {counts}")
                break
    verdict(2, "rings of 2/3/4/8 boards converge to zero offset and hold 1 s",
            problems)


def test_criterion_3_throughput_overhead_exact(verdict):
    report = effective_throughput(LaneConfig())
    problems = []
    if report.encoding_overhead != Fraction(2, 66):
        problems.append(f"overhead {report.encoding_overhead} != 2/66")
    if report.payload_ceiling_bps != Fraction(10_000_000_000):
        problems.append(f"ceiling {report.payload_ceiling_bps} != 10 Gbps")
    expected = Fraction(10_000_000_000) * Fraction(4984, 4992)
    if report.effective_bps != expected:
        problems.append(f"effective {report.effective_bps} != {expected}")
    if abs(report.overhead_percent - 100 * 2 / 66) > 1e-12:
        problems.append(f"percent {report.overhead_percent}")
    verdict(3, "overhead exactly 2/66 (3.03%), payload 10 Gbps, "
               "10 x 4984/4992 Gbps with compensation", problems)


def test_criterion_4_frame_codec_round_trip(verdict):
    rng = random.Random(4)
    problems = []
    for _ in range(10_000):
        indices = rng.sample(range(21), rng.randint(0, 21))
        results = [QubitResult(i, rng.randint(0, 3)) for i in indices]
        word = encode_frame(results)
        if word >> 63:
            problems.append(f"spare bit set for {results}")
        decoded = decode_frame(word)
        if list(decoded) != sorted(results, key=lambda r: r.index):
            problems.append(f"round trip failed for {results}")
    full = encode_frame([QubitResult(i, 3) for i in range(21)])
    if full != (1 << 63) - 1:
        problems.append(f"21-slot frame {full:#x} does not fill bits 0..62")
    verdict(4, "21-qubit frame codec round-trips 10000 random result sets, "
               "spare bit clear", problems)


STAGGERED_PROGRAM = """\
board 1:
    measure q0 len=1us dest=c0
    measure q1 len=1.008us dest=c1
    end

board 2:
    hold 3us
    end
"""


def broadcast_times(trace_jsonl: str, board: int) -> list:
    times = []
    for line in trace_jsonl.splitlines():
        record = json.loads(line)
        if record["kind"] == "frame-broadcast" and record["board"] == board:
            times.append(record["t_ticks"])
    return times


def test_criterion_5_broadcast_gap(verdict, listing1_path):
    problems = []
    # two readouts finishing 8 ns apart force back-to-back broadcasts
    scenario = parse_scenario(listing1_path.read_text(),
                              program_text=STAGGERED_PROGRAM)
    result = run_scenario(scenario)
    times = broadcast_times(result.trace_jsonl, board=1)
    gaps = [b - a for a, b in zip(times, times[1:])]
    if len(times) != 2:
        problems.append(f"expected 2 broadcasts, saw {len(times)}")
    if any(gap < 2640 for gap in gaps):
        problems.append(f"gap below 2640 ticks: {gaps}")
    if 2640 not in gaps:
        problems.append(f"pacing never engaged (gaps {gaps})")

    # the shipped scenario batches both results into one frame; still no
    # transmission may start within 32 ns of the previous one
    shipped = run_scenario(load_scenario(listing1_path))
    times = broadcast_times(shipped.trace_jsonl, board=1)
    if any(b - a < 2640 for a, b in zip(times, times[1:])):
        problems.append("shipped scenario violates the gap")
    verdict(5, "root broadcasts start at least 2640 ticks (32 ns) apart",
            problems)


BRANCH_MATRIX = {
    (1, 1): [0.5, 0.75, 0.75],
    (1, 0): [0.5, 0.75],
    (0, 1): [0.35],
    (0, 0): [],
}


def scripted_scenario(listing1_path, scenario_dir, a: int, b: int):
    data = yaml.safe_load(listing1_path.read_text())
    data["readout"]["scripts"] = {"q0": [a], "q1": [b]}
    return parse_scenario(yaml.safe_dump(data), base_dir=scenario_dir)


def test_criterion_6_branch_matrix(verdict, listing1_path, scenario_dir):
    problems = []
    for (a, b), amplitudes in BRANCH_MATRIX.items():
        result = run_scenario(scripted_scenario(listing1_path, scenario_dir, a, b))
        conditional = sorted(
            (p for p in result.report.pulses if p.board == 2 and p.conditional),
            key=lambda p: p.t_start)
        got = [p.amplitude_v for p in conditional]
        if got != amplitudes:
            problems.append(f"({a},{b}): pulses {got} != {amplitudes}")
        if result.summary["counters"]["dropped_frames"] != 0:
            problems.append(f"({a},{b}): frames dropped")
    verdict(6, "scripted (1,1)/(1,0)/(0,1)/(0,0) yield 3/2/1/0 conditional "
               "pulses with expected amplitudes", problems)


def test_criterion_7_latency_budget(verdict, listing1_path):
    result = run_scenario(load_scenario(listing1_path))
    problems = []
    entry = next(e for e in result.report.latency if e.board == 2)
    # 1 us readout + 600 ns hold, within one control cycle (165 ticks = 2 ns)
    if entry.interval_ticks is None or abs(entry.interval_ticks - 132_000) > 165:
        problems.append(f"interval {entry.interval_ticks} ticks not 132000 +-165")

    arrival = next(e for e in result.report.arrivals if e.board == 2)
    if not arrival.ok:
        problems.append("results arrived after the hold expired")
    # the 600 ns hold splits into 150 ns demodulation plus the communication
    # budget: framing, serialization, flight and crossings within 450 ns
    measure_end = result.report.start_tick + 82_500
    demod_done = measure_end + 12_375
    communication = arrival.register_update_t - demod_done
    if not 0 < communication <= 37_125:
        problems.append(f"communication {communication} ticks outside 450 ns")
    # full-path safety: measure end + demodulation + link inside the hold
    if arrival.register_update_t > measure_end + 49_500:
        problems.append("register update missed the hold expiry")
    verdict(7, "start-to-conditional interval 1600 ns within one cycle, "
               "communication within 450 ns", problems)


def test_criterion_8_crc_fault_injection(verdict):
    rng = random.Random(8)
    problems = []
    for _ in range(10_000):
        words = tuple(rng.getrandbits(64) for _ in range(rng.randint(1, 4)))
        frame = LinkFrame.from_words(words)
        flipped = corrupt(frame, rng.randrange(64 * len(words)))
        if flipped.verifies():
            problems.append(f"missed corruption in {words}")
            break

    # corrupted deliveries must never reach the leaf register
    frames = [LinkFrame.from_words((encode_frame([QubitResult(i % 21, 1)]),))
              for i in range(200)]
    engine = Engine()
    lane = Lane(engine, 0, 1, 2)
    leaf = FeedForwardFsm(engine, 2)
    leaf.attach(lane)
    lane.inject_fault(2, lambda f: corrupt(f, rng.randrange(64)))
    for i, frame in enumerate(frames):
        lane.transmit(frame, sender=1, t_submit=i * 10_000)
    engine.run()
    if leaf.register != 0 or leaf.update_times:
        problems.append("leaf register absorbed a corrupted frame")
    if leaf.dropped_frames != len(frames):
        problems.append(f"dropped {leaf.dropped_frames} of {len(frames)}")

    # control: the identical traffic with no fault injector all lands
    engine = Engine()
    lane = Lane(engine, 0, 1, 2)
    leaf = FeedForwardFsm(engine, 2)
    leaf.attach(lane)
    for i, frame in enumerate(frames):
        lane.transmit(frame, sender=1, t_submit=i * 10_000)
    engine.run()
    if leaf.dropped_frames != 0 or len(leaf.update_times) != len(frames):
        problems.append("clean frames did not all land")
    verdict(8, "10000 single-bit corruptions all detected; corrupt frames "
               "never reach a leaf register", problems)


def test_criterion_9_determinism(verdict, listing1_path, ring8_path):
    problems = []
    first = run_scenario(load_scenario(listing1_path))
    second = run_scenario(load_scenario(listing1_path))
    for name in ("trace_jsonl", "pulses_csv", "report_txt"):
        if getattr(first, name) != getattr(second, name):
            problems.append(f"listing1 {name} differs between reruns")
    ring_a = sync_check(load_scenario(ring8_path))
    ring_b = sync_check(load_scenario(ring8_path))
    if ring_a.report_txt != ring_b.report_txt:
        problems.append("ring8 sync report differs between reruns")
    if ring_a.closure_residual_cycles != 0:
        problems.append(f"ring8 closure {ring_a.closure_residual_cycles} != 0")
    verdict(9, "identical scenario and seed reproduce byte-identical artifacts",
            problems)
