"""Per-board program interpreter, scripted readout, and the job server."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import (
    InterpreterLoop,
    MissingBinary,
    NotSynchronized,
    ScriptExhausted,
    StartInPast,
    UnknownBoard,
)
from .fsm import FeedForwardFsm, ReadoutFsm, StarTopology
from .program import BoardBinary, BranchIfBit, End, Goto, Hold, Measure, Pulse
from .ptp import RingTopology, SyncReport, ring_synchronize, start_ring_sync
from .sim import Board, Engine
from .timebase import ticks_of

DEMODULATION_DELAY_TICKS = ticks_of(150, "ns")
DEFAULT_START_MARGIN_CYCLES = 500  # 1 us of headroom for the start broadcast


class ReadoutEmulator:
    """Scripted per-qubit measurement results with a fixed demodulation delay.

    Each measure of qubit q consumes the next entry of scripts[q]; running
    past the end raises rather than inventing data. Scripts rewind on reset
    so repeated shots replay identically.
    """

    def __init__(self, scripts: dict, demodulation_delay: int = DEMODULATION_DELAY_TICKS):
        self.scripts = {int(q): list(values) for q, values in scripts.items()}
        for q, values in self.scripts.items():
            for v in values:
                if v not in (0, 1, 2, 3):
                    raise ValueError(f"script for q{q} holds non-2-bit value {v}")
        self.demodulation_delay = demodulation_delay
        self._cursor = {q: 0 for q in self.scripts}

    def next_result(self, qubit: int) -> int:
        script = self.scripts.get(qubit)
        position = self._cursor.get(qubit, 0)
        if script is None or position >= len(script):
            raise ScriptExhausted(f"no scripted result left for q{qubit}")
        self._cursor[qubit] = position + 1
        return script[position]

    def reset(self):
        self._cursor = {q: 0 for q in self.scripts}


@dataclass(frozen=True)
class PulseRecord:
    board: int
    t_start: int  # ticks
    length: int
    amplitude_v: float
    frequency_hz: int
    conditional: bool  # emitted at or after the board's first branch


class Interpreter:
    """Executes one board's instruction stream on the event engine.

    Zero-time instructions (branches, gotos, measure dispatch, end) run
    back-to-back within one event; pulse and hold schedule the next step
    after their duration. A run of zero-time steps longer than the program
    itself means the control flow cannot be making progress.
    """

    def __init__(self, engine: Engine, board: Board, *,
                 readout: Optional[ReadoutFsm] = None,
                 feedforward: Optional[FeedForwardFsm] = None,
                 emulator: Optional[ReadoutEmulator] = None):
        self.engine = engine
        self.board = board
        self.readout = readout
        self.feedforward = feedforward
        self.emulator = emulator
        self.binary: Optional[BoardBinary] = None
        self.pc = 0
        self.halted = True
        self.branched = False
        self.pulses: list[PulseRecord] = []
        self.first_branch_time: Optional[int] = None
        self.unknown_bit_reads = 0

    def load(self, binary: BoardBinary):
        self.binary = binary

    def start(self, t_start: int, start_counter: int):
        if self.binary is None:
            raise MissingBinary(f"board {self.board.id} has no binary loaded")
        self.pc = 0
        self.halted = False
        self.branched = False
        self.first_branch_time = None
        self.engine.schedule(t_start, self._step, kind="board-start",
                             board=self.board.id, detail={"counter": start_counter})

    def _halt(self, reason: str):
        self.halted = True
        self.engine.record("halt", board=self.board.id, reason=reason)

    def _step(self):
        if self.halted or self.binary is None:
            return
        instructions = self.binary.instructions
        instant_steps = 0
        while True:
            if self.pc >= len(instructions):
                self._halt("end of program")
                return
            if instant_steps > len(instructions):
                raise InterpreterLoop(
                    f"board {self.board.id}: {instant_steps} zero-time steps "
                    f"in a {len(instructions)}-instruction program"
                )
            instruction = instructions[self.pc]
            if isinstance(instruction, Pulse):
                self._emit_pulse(instruction)
                self.pc += 1
                if instruction.length == 0:
                    instant_steps += 1
                    continue
                self.engine.schedule_after(instruction.length, self._step,
                                           kind="exec", board=self.board.id,
                                           detail={"pc": self.pc})
                return
            if isinstance(instruction, Hold):
                self.engine.record("hold", board=self.board.id,
                                   duration_ticks=instruction.duration)
                self.pc += 1
                if instruction.duration == 0:
                    instant_steps += 1
                    continue
                self.engine.schedule_after(instruction.duration, self._step,
                                           kind="exec", board=self.board.id,
                                           detail={"pc": self.pc})
                return
            if isinstance(instruction, Measure):
                self._dispatch_measure(instruction)
                self.pc += 1
                instant_steps += 1
                continue
            if isinstance(instruction, BranchIfBit):
                self._branch(instruction)
                instant_steps += 1
                continue
            if isinstance(instruction, Goto):
                self.pc = instruction.target
                instant_steps += 1
                continue
            if isinstance(instruction, End):
                self._halt("end")
                return
            raise TypeError(f"unknown instruction {instruction!r}")

    def _emit_pulse(self, instruction: Pulse):
        record = PulseRecord(
            board=self.board.id,
            t_start=self.engine.now,
            length=instruction.length,
            amplitude_v=instruction.amplitude_v,
            frequency_hz=int(instruction.frequency_hz),
            conditional=self.branched,
        )
        self.pulses.append(record)
        self.engine.record("pulse", board=self.board.id,
                           length_ticks=instruction.length,
                           amplitude_V=instruction.amplitude_v,
                           frequency_hz=instruction.frequency_hz,
                           conditional=record.conditional)

    def _dispatch_measure(self, instruction: Measure):
        if self.emulator is None:
            raise ScriptExhausted(f"board {self.board.id} has no readout emulator")
        value = self.emulator.next_result(instruction.qubit)
        available_at = (self.engine.now + instruction.pulse_length
                        + self.emulator.demodulation_delay)
        self.engine.record("measure", board=self.board.id,
                           qubit=instruction.qubit, dest=instruction.dest,
                           length_ticks=instruction.pulse_length,
                           available_at_ticks=available_at)

        def capture():
            if self.readout is None:
                self.engine.record("warning", board=self.board.id,
                                   reason="no readout collector on this board",
                                   qubit=instruction.qubit)
                return
            self.readout.capture(instruction.dest, value)

        self.engine.schedule(available_at, capture, kind="readout-avail",
                             board=self.board.id,
                             detail={"qubit": instruction.qubit,
                                     "dest": instruction.dest, "state": value})

    def _branch(self, instruction: BranchIfBit):
        if self.first_branch_time is None:
            self.first_branch_time = self.engine.now
        if self.feedforward is not None:
            value = self.feedforward.query([instruction.bit])[instruction.bit]
        else:
            value = None
        if value is None:
            self.unknown_bit_reads += 1
            self.engine.record("warning", board=self.board.id,
                               reason="unknown-bit", bit=instruction.bit)
            value = 0
        taken = value == instruction.expected
        self.engine.record("branch", board=self.board.id, bit=instruction.bit,
                           expected=instruction.expected, value=value, taken=taken)
        self.branched = True
        self.pc = instruction.target if taken else self.pc + 1


@dataclass
class Cluster:
    """Everything one simulated cluster holds, wired and ready to run."""

    engine: Engine
    boards: dict  # id -> Board
    ring: RingTopology
    star: Optional[StarTopology] = None
    readout: Optional[ReadoutFsm] = None
    feedforward: dict = field(default_factory=dict)  # leaf id -> FeedForwardFsm
    emulator: Optional[ReadoutEmulator] = None
    lanes: list = field(default_factory=list)
    interpreters: dict = field(default_factory=dict)  # id -> Interpreter

    def counters(self) -> dict:
        out = {
            "frames_sent": self.readout.frames_sent if self.readout else 0,
            "rejected_captures": self.readout.rejected_captures if self.readout else 0,
            "dropped_frames": sum(ff.dropped_frames for ff in self.feedforward.values()),
        }
        return out


@dataclass(frozen=True)
class LatencyReport:
    """Start-pulse to first-conditional-pulse interval for one board."""

    board: int
    start_pulse_t: Optional[int]
    first_conditional_t: Optional[int]

    @property
    def interval_ticks(self) -> Optional[int]:
        if self.start_pulse_t is None or self.first_conditional_t is None:
            return None
        return self.first_conditional_t - self.start_pulse_t


@dataclass(frozen=True)
class ArrivalReport:
    """Did the feed-forward data beat the board's first branch?"""

    board: int
    register_update_t: Optional[int]
    first_branch_t: Optional[int]
    unknown_bit_reads: int

    @property
    def margin_ticks(self) -> Optional[int]:
        if self.register_update_t is None or self.first_branch_t is None:
            return None
        return self.first_branch_t - self.register_update_t

    @property
    def ok(self) -> bool:
        if self.first_branch_t is None:
            return True  # board never branched; nothing to miss
        return (self.register_update_t is not None
                and self.register_update_t <= self.first_branch_t
                and self.unknown_bit_reads == 0)


@dataclass
class JobReport:
    sync: list
    start_counter: int
    start_tick: int
    pulses: list
    latency: list
    arrivals: list
    counters: dict


class JobServer:
    """Uploads binaries, drives ring sync, and issues the start broadcast."""

    def __init__(self, cluster: Cluster):
        self.cluster = cluster
        self.binaries: dict[int, BoardBinary] = {}
        self.synchronized = False
        self.sync_reports: list[SyncReport] = []
        self.start_counter: Optional[int] = None
        self.start_tick: Optional[int] = None

    def synchronize(self, **kwargs) -> list[SyncReport]:
        reports = ring_synchronize(self.cluster.engine, self.cluster.ring, **kwargs)
        self.sync_reports = reports
        self.synchronized = True
        return reports

    def upload(self, binary: BoardBinary):
        """Load a binary onto its board; re-upload replaces."""
        if binary.board not in self.cluster.boards:
            raise UnknownBoard(f"board {binary.board} is not in the cluster")
        self.binaries[binary.board] = binary
        self.cluster.interpreters[binary.board].load(binary)

    def default_start_counter(self, margin_cycles: int = DEFAULT_START_MARGIN_CYCLES) -> int:
        primary = self.cluster.ring.boards[0]
        return primary.clock.counter_at(self.cluster.engine.now) + margin_cycles

    def broadcast_start(self, start_counter: Optional[int] = None) -> int:
        """Order every board to start at the given counter value; returns it.

        After synchronization all boards map the counter to the same global
        tick, so first instructions issue simultaneously.
        """
        if not self.synchronized:
            raise NotSynchronized("ring synchronization has not run")
        missing = sorted(b for b in self.cluster.boards if b not in self.binaries)
        if missing:
            raise MissingBinary(f"boards {missing} have no binary loaded")
        if start_counter is None:
            start_counter = self.default_start_counter()
        engine = self.cluster.engine
        starts = {}
        for board_id, board in sorted(self.cluster.boards.items()):
            t_start = board.clock.time_of_counter(start_counter)
            if t_start < engine.now or board.clock.counter_at(engine.now) >= start_counter:
                raise StartInPast(
                    f"counter {start_counter} already passed on board {board_id}"
                )
            starts[board_id] = t_start
        # fresh shot: previous results must not leak into this job's branches
        if self.cluster.readout is not None:
            self.cluster.readout.reset()
        for ff in self.cluster.feedforward.values():
            ff.reset()
        if self.cluster.emulator is not None:
            self.cluster.emulator.reset()
        engine.record("start-broadcast", board=None, counter=start_counter,
                      start_ticks={str(b): t for b, t in starts.items()})
        for board_id, t_start in sorted(starts.items()):
            self.cluster.interpreters[board_id].start(t_start, start_counter)
        self.start_counter = start_counter
        self.start_tick = min(starts.values())
        return start_counter

    def run_job(self, binaries, *, start_counter: Optional[int] = None,
                t_stop: Optional[int] = None, **sync_kwargs) -> JobReport:
        """Full flow: sync if needed, upload, broadcast start, run, report."""
        if not self.synchronized:
            self.synchronize(**sync_kwargs)
        for binary in binaries:
            self.upload(binary)
        self.broadcast_start(start_counter)
        if t_stop is None:
            self.cluster.engine.run()
        else:
            self.cluster.engine.run_until(t_stop)
        return self.build_report()

    def build_report(self) -> JobReport:
        pulses = []
        latency = []
        arrivals = []
        for board_id in sorted(self.cluster.interpreters):
            interp = self.cluster.interpreters[board_id]
            pulses.extend(interp.pulses)
            start_pulse = next((p.t_start for p in interp.pulses), None)
            conditional = next(
                (p.t_start for p in interp.pulses if p.conditional), None)
            latency.append(LatencyReport(board_id, start_pulse, conditional))
            ff = self.cluster.feedforward.get(board_id)
            if ff is not None:
                branch_t = interp.first_branch_time
                update = None
                if branch_t is not None:
                    before = [t for t in ff.update_times if t <= branch_t]
                    update = before[-1] if before else None
                elif ff.update_times:
                    update = ff.update_times[-1]
                arrivals.append(ArrivalReport(
                    board_id, update, branch_t, interp.unknown_bit_reads))
        pulses.sort(key=lambda p: (p.t_start, p.board))
        return JobReport(
            sync=self.sync_reports,
            start_counter=self.start_counter if self.start_counter is not None else -1,
            start_tick=self.start_tick if self.start_tick is not None else -1,
            pulses=pulses,
            latency=latency,
            arrivals=arrivals,
            counters=self.cluster.counters(),
        )


def schedule_periodic_resync(engine: Engine, ring: RingTopology, period: int,
                             t_stop: int, **sync_kwargs):
    """Re-run ring sync every `period` ticks until t_stop (event-driven)."""

    def kick():
        start_ring_sync(engine, ring, on_complete=lambda reports: None, **sync_kwargs)
        if engine.now + period <= t_stop:
            engine.schedule_after(period, kick, kind="resync")

    if period <= 0:
        raise ValueError("resync period must be positive")
    engine.schedule_after(period, kick, kind="resync")
