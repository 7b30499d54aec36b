import pytest

from qcluster.control import JobServer, ReadoutEmulator, schedule_periodic_resync
from qcluster.errors import (
    InterpreterLoop,
    MissingBinary,
    NotSynchronized,
    ScriptExhausted,
    StartInPast,
    UnknownBoard,
)
from qcluster.program import parse_program
from qcluster.runner import build_cluster
from qcluster.scenario import parse_scenario

TWO_BOARD_YAML = """
schema_version: 1
seed: 0
boards:
  - id: 1
  - id: 2
    offset_cycles: 977
ring:
  order: [1, 2]
  link_delay: 3cycles
star:
  root: 1
  leaves: [2]
lane:
  fiber_delay: 400ns
readout:
  scripts:
    q0: [1]
    q1: [1]
"""


def make_cluster(yaml_text=TWO_BOARD_YAML, program=None):
    scenario = parse_scenario(yaml_text, program_text=program)
    cluster = build_cluster(scenario)
    return cluster, JobServer(cluster), scenario


class TestReadoutEmulator:
    def test_scripts_consumed_in_order(self):
        emulator = ReadoutEmulator({0: [1, 0, 3]})
        assert [emulator.next_result(0) for _ in range(3)] == [1, 0, 3]

    def test_exhaustion_raises(self):
        emulator = ReadoutEmulator({0: [1]})
        emulator.next_result(0)
        with pytest.raises(ScriptExhausted):
            emulator.next_result(0)

    def test_unscripted_qubit_raises(self):
        with pytest.raises(ScriptExhausted):
            ReadoutEmulator({}).next_result(5)

    def test_reset_replays(self):
        emulator = ReadoutEmulator({0: [1, 0]})
        emulator.next_result(0)
        emulator.reset()
        assert emulator.next_result(0) == 1

    def test_bad_script_value(self):
        with pytest.raises(ValueError):
            ReadoutEmulator({0: [4]})


class TestTimedExecution:
    def test_pulse_then_hold_completes_at_620ns(self):
        program = ("board 1:\n pulse len=20ns freq=5GHz amp=1V\n hold 600ns\n end\n"
                   "board 2:\n end\n")
        cluster, server, scenario = make_cluster(program=program)
        server.run_job(scenario.binaries, start_counter=1000)
        t0 = cluster.boards[1].clock.time_of_counter(1000)
        halts = {r.board: r.t_ticks for r in cluster.engine.trace if r.kind == "halt"}
        assert halts[1] == t0 + 1650 + 49500  # 620 ns after the start

    def test_boards_start_at_the_same_tick_despite_boot_offsets(self):
        program = "board 1:\n end\nboard 2:\n end\n"
        cluster, server, scenario = make_cluster(program=program)
        assert (cluster.boards[1].clock.counter_at(0)
                != cluster.boards[2].clock.counter_at(0))
        server.run_job(scenario.binaries)
        starts = [r for r in cluster.engine.trace if r.kind == "board-start"]
        assert len(starts) == 2
        assert len({r.t_ticks for r in starts}) == 1
        assert len({r.detail["counter"] for r in starts}) == 1

    def test_zero_time_loop_detected(self):
        program = "board 1:\n label spin:\n goto spin\n end\nboard 2:\n end\n"
        cluster, server, scenario = make_cluster(program=program)
        with pytest.raises(InterpreterLoop):
            server.run_job(scenario.binaries)

    def test_loop_with_time_advancing_is_fine(self):
        program = ("board 1:\n label spin:\n hold 1us\n goto spin\n end\n"
                   "board 2:\n end\n")
        cluster, server, scenario = make_cluster(program=program)
        server.synchronize()
        for binary in scenario.binaries:
            server.upload(binary)
        server.broadcast_start(1000)
        t0 = cluster.boards[1].clock.time_of_counter(1000)
        cluster.engine.run_until(t0 + 10 * 82500)
        holds = [r for r in cluster.engine.trace if r.kind == "hold"]
        assert len(holds) >= 10


LISTING1_PROGRAM = """
board 1:
    measure q0 len=1us dest=c0
    measure q1 len=1us dest=c1
    end
board 2:
    pulse len=20ns freq=5.1GHz amp=0.5V
    hold 980ns
    hold 600ns
    ifbit c0 == 1 goto c0_set
    ifbit c1 == 1 goto only_c1
    goto done
    label c0_set:
    ifbit c1 == 1 goto both
    pulse len=20ns freq=5.1GHz amp=0.5V
    pulse len=20ns freq=5.1GHz amp=0.75V
    goto done
    label both:
    pulse len=20ns freq=5.1GHz amp=0.5V
    pulse len=20ns freq=5.1GHz amp=0.75V
    pulse len=20ns freq=5.1GHz amp=0.75V
    goto done
    label only_c1:
    pulse len=20ns freq=5.1GHz amp=0.35V
    label done:
    end
"""


class TestMeasureFlow:
    def test_results_feed_forward_into_branches(self):
        cluster, server, scenario = make_cluster(program=LISTING1_PROGRAM)
        report = server.run_job(scenario.binaries)
        conditional = [p for p in report.pulses if p.conditional]
        assert [p.amplitude_v for p in conditional] == [0.5, 0.75, 0.75]
        assert report.counters["frames_sent"] == 1
        assert report.counters["dropped_frames"] == 0

    def test_measure_is_non_blocking(self):
        # both measures dispatch at the start tick and demodulate together
        cluster, server, scenario = make_cluster(program=LISTING1_PROGRAM)
        server.run_job(scenario.binaries)
        measures = [r for r in cluster.engine.trace if r.kind == "measure"]
        assert len(measures) == 2
        assert measures[0].t_ticks == measures[1].t_ticks
        captures = [r for r in cluster.engine.trace if r.kind == "capture"]
        assert len(captures) == 2
        assert captures[0].t_ticks == captures[1].t_ticks
        # 1 us tone + 150 ns demodulation
        assert captures[0].t_ticks - measures[0].t_ticks == 82500 + 12375

    def test_branch_before_data_reads_zero_with_warning(self):
        program = ("board 1:\n measure q0 len=1us dest=c0\n end\n"
                   "board 2:\n hold 100ns\n ifbit c0 == 0 goto hit\n end\n"
                   " label hit:\n pulse len=20ns freq=1GHz amp=1V\n end\n")
        cluster, server, scenario = make_cluster(program=program)
        report = server.run_job(scenario.binaries)
        warnings = [r for r in cluster.engine.trace
                    if r.kind == "warning" and r.detail.get("reason") == "unknown-bit"]
        assert len(warnings) == 1
        # unknown reads as 0, so the branch is taken
        assert any(p.conditional for p in report.pulses)
        arrival = next(a for a in report.arrivals if a.board == 2)
        assert arrival.ok is False

    def test_latency_report_for_branching_board(self):
        cluster, server, scenario = make_cluster(program=LISTING1_PROGRAM)
        report = server.run_job(scenario.binaries)
        entry = next(l for l in report.latency if l.board == 2)
        assert entry.interval_ticks == 132000  # exactly 1600 ns
        arrival = next(a for a in report.arrivals if a.board == 2)
        assert arrival.ok is True
        assert arrival.margin_ticks is not None and arrival.margin_ticks >= 0


class TestJobServer:
    def test_broadcast_requires_sync(self):
        cluster, server, scenario = make_cluster(program="board 1:\n end\nboard 2:\n end\n")
        for binary in scenario.binaries:
            server.binaries[binary.board] = binary
        with pytest.raises(NotSynchronized):
            server.broadcast_start(10**6)

    def test_broadcast_requires_all_binaries(self):
        cluster, server, _ = make_cluster(program="board 1:\n end\n")
        server.synchronize()
        server.upload(parse_program("board 1:\n end\n")[0])
        with pytest.raises(MissingBinary) as info:
            server.broadcast_start(10**6)
        assert "[2]" in str(info.value)

    def test_upload_unknown_board(self):
        cluster, server, _ = make_cluster()
        with pytest.raises(UnknownBoard):
            server.upload(parse_program("board 9:\n end\n")[0])

    def test_start_in_past(self):
        cluster, server, scenario = make_cluster(program="board 1:\n end\nboard 2:\n end\n")
        server.synchronize()
        for binary in scenario.binaries:
            server.upload(binary)
        with pytest.raises(StartInPast):
            server.broadcast_start(0)

    def test_reupload_replaces(self):
        cluster, server, _ = make_cluster()
        server.synchronize()
        server.upload(parse_program("board 1:\n hold 1us\n end\n")[0])
        server.upload(parse_program("board 1:\n end\n")[0])
        server.upload(parse_program("board 2:\n end\n")[0])
        server.broadcast_start(10**6)
        cluster.engine.run()
        assert not any(r.kind == "hold" for r in cluster.engine.trace)

    def test_second_shot_replays_scripts_and_clears_registers(self):
        cluster, server, scenario = make_cluster(program=LISTING1_PROGRAM)
        first = server.run_job(scenario.binaries)
        assert len([p for p in first.pulses if p.conditional]) == 3
        counter = server.default_start_counter()
        server.broadcast_start(counter)
        assert cluster.feedforward[2].register == 0  # cleared for the new shot
        cluster.engine.run()
        report = server.build_report()
        assert len([p for p in report.pulses if p.conditional]) == 6
        assert cluster.readout.frames_sent == 2


class TestPeriodicResync:
    def test_resync_repeats_until_horizon(self):
        cluster, server, _ = make_cluster()
        server.synchronize()
        period = 82_500_000  # 1 ms
        schedule_periodic_resync(cluster.engine, cluster.ring, period,
                                 t_stop=3_500 * 82500)
        cluster.engine.run_until(3_500 * 82500)
        closings = [r for r in cluster.engine.trace
                    if r.kind == "sync-report" and r.detail["verification"]]
        assert len(closings) == 1 + 3  # initial sync plus one per period
