"""Line-oriented board program format.

A program file holds one or more board sections:

    board 1:
        pulse len=20ns freq=5.1GHz amp=0.5V
        measure q0 len=1us dest=c0
        hold 600ns
        ifbit c0 == 1 goto flip
        goto done
        label flip:
        pulse len=20ns freq=5.1GHz amp=0.75V
        label done:
        end

`#` starts a comment. Durations use the shared literal syntax (ns/us/ms/s/ps
or control-clock `cycles`). Labels mark positions and occupy no instruction
slot; branch targets resolve at parse time. `measure` is non-blocking: it
fires the readout chain and retires immediately, with the result landing in
classical bit c<dest> once demodulated and broadcast.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .errors import NonRepresentableDuration, ProgramSyntaxError
from .frames import QUBITS_PER_FRAME
from .timebase import as_fraction, parse_duration


@dataclass(frozen=True)
class Pulse:
    length: int  # ticks
    frequency_hz: Fraction  # waveform metadata; no timing role
    amplitude_v: float


@dataclass(frozen=True)
class Measure:
    qubit: int
    pulse_length: int  # ticks the readout tone plays
    dest: int  # classical bit, doubles as the frame slot index


@dataclass(frozen=True)
class Hold:
    duration: int


@dataclass(frozen=True)
class BranchIfBit:
    bit: int
    expected: int
    target: int  # resolved instruction index


@dataclass(frozen=True)
class Goto:
    target: int


@dataclass(frozen=True)
class End:
    pass


Instruction = Union[Pulse, Measure, Hold, BranchIfBit, Goto, End]


@dataclass(frozen=True)
class BoardBinary:
    board: int
    instructions: tuple


_BOARD_RE = re.compile(r"^board\s+(\d+)\s*:$")
_LABEL_RE = re.compile(r"^label\s+([A-Za-z_]\w*)\s*:$")
_PULSE_RE = re.compile(r"^pulse\s+len=(\S+)\s+freq=(\S+)\s+amp=(\S+)$")
_MEASURE_RE = re.compile(r"^measure\s+q(\d+)\s+len=(\S+)\s+dest=c(\d+)$")
_HOLD_RE = re.compile(r"^hold\s+(\S+)$")
_IFBIT_RE = re.compile(r"^ifbit\s+c(\d+)\s*==\s*([01])\s+goto\s+([A-Za-z_]\w*)$")
_GOTO_RE = re.compile(r"^goto\s+([A-Za-z_]\w*)$")
_FREQ_RE = re.compile(r"^(-?\d+(?:\.\d+)?)(GHz|MHz|kHz|Hz)$")
_AMP_RE = re.compile(r"^(-?\d+(?:\.\d+)?)V$")

_HZ_PER_UNIT = {"GHz": 10**9, "MHz": 10**6, "kHz": 10**3, "Hz": 1}


def parse_frequency(text: str, line_no: int) -> Fraction:
    m = _FREQ_RE.match(text)
    if m is None:
        raise ProgramSyntaxError(line_no, f"bad frequency {text!r}")
    return as_fraction(m.group(1)) * _HZ_PER_UNIT[m.group(2)]


def parse_amplitude(text: str, line_no: int) -> float:
    m = _AMP_RE.match(text)
    if m is None:
        raise ProgramSyntaxError(line_no, f"bad amplitude {text!r} (want e.g. 0.5V)")
    return float(m.group(1))


def _duration(text: str, line_no: int) -> int:
    try:
        value = parse_duration(text)
    except NonRepresentableDuration as exc:
        raise ProgramSyntaxError(line_no, str(exc)) from exc
    if value < 0:
        raise ProgramSyntaxError(line_no, f"duration {text!r} is negative")
    return value


def _classical_bit(text: str, line_no: int) -> int:
    bit = int(text)
    if bit >= QUBITS_PER_FRAME:
        raise ProgramSyntaxError(
            line_no, f"classical bit c{bit} outside c0..c{QUBITS_PER_FRAME - 1}"
        )
    return bit


def parse_program(text: str) -> list[BoardBinary]:
    """Parse program text into per-board instruction streams.

    Branch targets resolve to instruction indices; a label at the very end of
    a section points one past the last instruction, which halts.
    """
    sections: list[tuple[int, int, list]] = []  # (board id, line no, raw lines)
    current: list = []
    seen_boards = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _BOARD_RE.match(line)
        if m:
            board = int(m.group(1))
            if board in seen_boards:
                raise ProgramSyntaxError(line_no, f"duplicate section for board {board}")
            seen_boards.add(board)
            current = []
            sections.append((board, line_no, current))
            continue
        if not sections:
            raise ProgramSyntaxError(line_no, "instruction before any 'board N:' header")
        current.append((line_no, line))
    return [_assemble(board, lines) for board, _, lines in sections]


def _assemble(board: int, lines: list) -> BoardBinary:
    labels: dict[str, int] = {}
    slot = 0
    for line_no, line in lines:
        m = _LABEL_RE.match(line)
        if m:
            name = m.group(1)
            if name in labels:
                raise ProgramSyntaxError(line_no, f"duplicate label {name!r}")
            labels[name] = slot
        else:
            slot += 1

    def resolve(name: str, line_no: int) -> int:
        if name not in labels:
            raise ProgramSyntaxError(line_no, f"unknown label {name!r}")
        return labels[name]

    instructions: list[Instruction] = []
    for line_no, line in lines:
        if _LABEL_RE.match(line):
            continue
        m = _PULSE_RE.match(line)
        if m:
            instructions.append(Pulse(
                length=_duration(m.group(1), line_no),
                frequency_hz=parse_frequency(m.group(2), line_no),
                amplitude_v=parse_amplitude(m.group(3), line_no),
            ))
            continue
        m = _MEASURE_RE.match(line)
        if m:
            qubit = int(m.group(1))
            if qubit >= QUBITS_PER_FRAME:
                raise ProgramSyntaxError(
                    line_no, f"qubit q{qubit} outside q0..q{QUBITS_PER_FRAME - 1}")
            instructions.append(Measure(
                qubit=qubit,
                pulse_length=_duration(m.group(2), line_no),
                dest=_classical_bit(m.group(3), line_no),
            ))
            continue
        m = _HOLD_RE.match(line)
        if m:
            instructions.append(Hold(duration=_duration(m.group(1), line_no)))
            continue
        m = _IFBIT_RE.match(line)
        if m:
            instructions.append(BranchIfBit(
                bit=_classical_bit(m.group(1), line_no),
                expected=int(m.group(2)),
                target=resolve(m.group(3), line_no),
            ))
            continue
        m = _GOTO_RE.match(line)
        if m:
            instructions.append(Goto(target=resolve(m.group(1), line_no)))
            continue
        if line == "end":
            instructions.append(End())
            continue
        raise ProgramSyntaxError(line_no, f"cannot parse {line!r}")
    return BoardBinary(board=board, instructions=tuple(instructions))
