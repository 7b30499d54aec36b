"""Scenario files: YAML schema, validation, and the parsed model.

A scenario pins everything a run needs: boards and their clock errors, the
sync ring, the fiber star, lane parameters, readout scripts, the board
program, and the run horizon. Durations are string literals like "400ns" or
"3cycles" (control-clock cycles); bare integers mean raw base ticks. All
randomness (boot-time counter offsets) comes from the scenario seed, so a
scenario replays byte-for-byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import yaml

from .errors import (
    NonRepresentableDuration,
    ParseError,
    ProgramSyntaxError,
    ValidationError,
)
from .program import parse_program
from .timebase import as_fraction, parse_duration

SCHEMA_VERSION = 1


@dataclass
class BoardSpec:
    id: int
    offset_cycles: int = 0  # boot-time counter disagreement
    drift_ppm: Fraction = Fraction(0)
    phase_ticks: int = 0


@dataclass
class LinkDelaySpec:
    forward: int  # ticks
    reverse: int


@dataclass
class LaneParams:
    fiber_delay: int = 0
    tx_cdc_depth: int = 16
    rx_cdc_depth: int = 16
    cdc_latency_cycles: int = 2


@dataclass
class Scenario:
    description: str = ""
    seed: int = 0
    boards: list = field(default_factory=list)
    ring_order: list = field(default_factory=list)
    ring_links: list = field(default_factory=list)
    turnaround: int = 330  # 2 control cycles
    resync_period: Optional[int] = None
    star_root: Optional[int] = None
    star_leaves: list = field(default_factory=list)
    lane: LaneParams = field(default_factory=LaneParams)
    demodulation_delay: int = 12375  # 150 ns
    broadcast_gap: int = 2640  # 32 ns
    scripts: dict = field(default_factory=dict)
    program_text: Optional[str] = None
    binaries: list = field(default_factory=list)
    start_counter: Optional[int] = None
    start_margin_cycles: int = 500
    t_stop: Optional[int] = None
    random_offset_cycles: Optional[tuple] = None


def _expect_map(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ValidationError(path, f"expected a mapping, got {type(value).__name__}")
    return value

def _expect_list(value, path: str) -> list:
    if not isinstance(value, list):
        raise ValidationError(path, f"expected a list, got {type(value).__name__}")
    return value

def _expect_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(path, f"expected an integer, got {value!r}")
    return value

def _reject_unknown(mapping: dict, allowed: set, path: str):
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ValidationError(path, f"unknown keys {unknown} (allowed: {sorted(allowed)})")

def _ticks(value, path: str) -> int:
    """Duration field: a literal like '32ns'/'3cycles', or a bare tick count."""
    if isinstance(value, bool):
        raise ValidationError(path, f"expected a duration, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        try:
            return parse_duration(value)
        except NonRepresentableDuration as exc:
            raise ValidationError(path, str(exc)) from exc
    raise ValidationError(path, f"expected a duration literal or tick count, got {value!r}")

def _nonnegative(value: int, path: str) -> int:
    if value < 0:
        raise ValidationError(path, f"must be non-negative, got {value}")
    return value


def _parse_boards(raw, path: str) -> list:
    boards = []
    seen = set()
    for i, entry in enumerate(_expect_list(raw, path)):
        here = f"{path}[{i}]"
        if isinstance(entry, int):
            entry = {"id": entry}
        entry = _expect_map(entry, here)
        _reject_unknown(entry, {"id", "offset_cycles", "drift_ppm", "phase_ticks"}, here)
        board_id = _expect_int(entry.get("id"), f"{here}.id")
        if board_id in seen:
            raise ValidationError(f"{here}.id", f"duplicate board id {board_id}")
        seen.add(board_id)
        drift_raw = entry.get("drift_ppm", 0)
        try:
            drift = as_fraction(drift_raw)
        except (ValueError, TypeError) as exc:
            raise ValidationError(f"{here}.drift_ppm", f"bad value {drift_raw!r}") from exc
        boards.append(BoardSpec(
            id=board_id,
            offset_cycles=_expect_int(entry.get("offset_cycles", 0), f"{here}.offset_cycles"),
            drift_ppm=drift,
            phase_ticks=_nonnegative(
                _expect_int(entry.get("phase_ticks", 0), f"{here}.phase_ticks"),
                f"{here}.phase_ticks"),
        ))
    if not boards:
        raise ValidationError(path, "at least one board is required")
    return boards


def _parse_ring(raw, board_ids: set, scenario: Scenario):
    ring = _expect_map(raw, "ring")
    _reject_unknown(ring, {"order", "link_delay", "links", "turnaround", "resync_period"},
                    "ring")
    order = _expect_list(ring.get("order"), "ring.order")
    for i, board_id in enumerate(order):
        _expect_int(board_id, f"ring.order[{i}]")
        if board_id not in board_ids:
            raise ValidationError(f"ring.order[{i}]", f"unknown board {board_id}")
    if len(set(order)) != len(order) or set(order) != board_ids:
        raise ValidationError("ring.order", "must list every board exactly once")
    if len(order) < 2:
        raise ValidationError("ring.order", "a ring needs at least 2 boards")
    scenario.ring_order = list(order)

    default_delay = _nonnegative(_ticks(ring.get("link_delay", "3cycles"),
                                        "ring.link_delay"), "ring.link_delay")
    links_raw = ring.get("links")
    if links_raw is None:
        scenario.ring_links = [LinkDelaySpec(default_delay, default_delay)
                               for _ in order]
    else:
        links = _expect_list(links_raw, "ring.links")
        if len(links) != len(order):
            raise ValidationError(
                "ring.links", f"need {len(order)} links to close the ring, got {len(links)}")
        scenario.ring_links = []
        for i, entry in enumerate(links):
            here = f"ring.links[{i}]"
            if isinstance(entry, (int, str)):
                delay = _nonnegative(_ticks(entry, here), here)
                scenario.ring_links.append(LinkDelaySpec(delay, delay))
                continue
            entry = _expect_map(entry, here)
            _reject_unknown(entry, {"forward", "reverse"}, here)
            forward = _nonnegative(_ticks(entry.get("forward", 0), f"{here}.forward"),
                                   f"{here}.forward")
            reverse = _nonnegative(_ticks(entry.get("reverse", 0), f"{here}.reverse"),
                                   f"{here}.reverse")
            scenario.ring_links.append(LinkDelaySpec(forward, reverse))
    scenario.turnaround = _nonnegative(
        _ticks(ring.get("turnaround", "2cycles"), "ring.turnaround"), "ring.turnaround")
    if ring.get("resync_period") is not None:
        period = _ticks(ring["resync_period"], "ring.resync_period")
        if period <= 0:
            raise ValidationError("ring.resync_period", "must be positive")
        scenario.resync_period = period


def _parse_star(raw, board_ids: set, scenario: Scenario):
    star = _expect_map(raw, "star")
    _reject_unknown(star, {"root", "leaves"}, "star")
    root = _expect_int(star.get("root"), "star.root")
    if root not in board_ids:
        raise ValidationError("star.root", f"unknown board {root}")
    leaves = _expect_list(star.get("leaves"), "star.leaves")
    for i, leaf in enumerate(leaves):
        _expect_int(leaf, f"star.leaves[{i}]")
        if leaf not in board_ids:
            raise ValidationError(f"star.leaves[{i}]", f"unknown board {leaf}")
        if leaf == root:
            raise ValidationError(f"star.leaves[{i}]", "root cannot be its own leaf")
    if len(set(leaves)) != len(leaves):
        raise ValidationError("star.leaves", "duplicate leaf")
    if len(leaves) > 4:
        raise ValidationError("star.leaves", "a root board drives at most 4 lanes")
    scenario.star_root = root
    scenario.star_leaves = list(leaves)


def _parse_lane(raw, scenario: Scenario):
    lane = _expect_map(raw, "lane")
    _reject_unknown(lane, {"fiber_delay", "tx_cdc_depth", "rx_cdc_depth",
                           "cdc_latency_cycles"}, "lane")
    params = LaneParams()
    params.fiber_delay = _nonnegative(
        _ticks(lane.get("fiber_delay", 0), "lane.fiber_delay"), "lane.fiber_delay")
    params.tx_cdc_depth = _expect_int(lane.get("tx_cdc_depth", 16), "lane.tx_cdc_depth")
    params.rx_cdc_depth = _expect_int(lane.get("rx_cdc_depth", 16), "lane.rx_cdc_depth")
    params.cdc_latency_cycles = _expect_int(
        lane.get("cdc_latency_cycles", 2), "lane.cdc_latency_cycles")
    for name in ("tx_cdc_depth", "rx_cdc_depth"):
        if getattr(params, name) <= 0:
            raise ValidationError(f"lane.{name}", "must be positive")
    if params.cdc_latency_cycles < 0:
        raise ValidationError("lane.cdc_latency_cycles", "must be non-negative")
    scenario.lane = params


def _parse_readout(raw, scenario: Scenario):
    readout = _expect_map(raw, "readout")
    _reject_unknown(readout, {"demodulation_delay", "broadcast_gap", "scripts"}, "readout")
    scenario.demodulation_delay = _nonnegative(
        _ticks(readout.get("demodulation_delay", "150ns"), "readout.demodulation_delay"),
        "readout.demodulation_delay")
    scenario.broadcast_gap = _nonnegative(
        _ticks(readout.get("broadcast_gap", "32ns"), "readout.broadcast_gap"),
        "readout.broadcast_gap")
    scripts_raw = readout.get("scripts", {})
    scripts = {}
    for key, values in _expect_map(scripts_raw, "readout.scripts").items():
        here = f"readout.scripts.{key}"
        name = str(key)
        if name.startswith("q"):
            name = name[1:]
        try:
            qubit = int(name)
        except ValueError:
            raise ValidationError(here, f"bad qubit key {key!r} (want e.g. q0)")
        if not 0 <= qubit < 21:
            raise ValidationError(here, f"qubit {qubit} outside q0..q20")
        values = _expect_list(values, here)
        for i, v in enumerate(values):
            if _expect_int(v, f"{here}[{i}]") not in (0, 1, 2, 3):
                raise ValidationError(f"{here}[{i}]", f"result {v} does not fit in 2 bits")
        scripts[qubit] = list(values)
    scenario.scripts = scripts


_TOP_KEYS = {"schema_version", "description", "seed", "boards", "ring", "star",
             "lane", "readout", "program", "program_text", "start_counter",
             "start_margin_cycles", "t_stop", "fault_injection"}


def parse_scenario(text: str, *, program_text: Optional[str] = None,
                   base_dir: Optional[Path] = None) -> Scenario:
    """Parse and validate scenario YAML; optional program_text overrides the file's."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"bad YAML: {exc}") from exc
    if raw is None:
        raise ParseError("empty scenario")
    raw = _expect_map(raw, "scenario")
    _reject_unknown(raw, _TOP_KEYS, "scenario")

    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")

    scenario = Scenario()
    if "description" in raw:
        scenario.description = str(raw["description"])
    scenario.seed = _expect_int(raw.get("seed", 0), "seed")

    scenario.boards = _parse_boards(raw.get("boards"), "boards")
    board_ids = {b.id for b in scenario.boards}

    if raw.get("ring") is None:
        raise ValidationError("ring", "a sync ring is required")
    _parse_ring(raw["ring"], board_ids, scenario)

    if raw.get("star") is not None:
        _parse_star(raw["star"], board_ids, scenario)
    if raw.get("lane") is not None:
        _parse_lane(raw["lane"], scenario)
    if raw.get("readout") is not None:
        _parse_readout(raw["readout"], scenario)

    if raw.get("start_counter") is not None:
        scenario.start_counter = _expect_int(raw["start_counter"], "start_counter")
    scenario.start_margin_cycles = _expect_int(
        raw.get("start_margin_cycles", 500), "start_margin_cycles")
    if raw.get("t_stop") is not None:
        scenario.t_stop = _nonnegative(_ticks(raw["t_stop"], "t_stop"), "t_stop")

    if raw.get("fault_injection") is not None:
        fault = _expect_map(raw["fault_injection"], "fault_injection")
        _reject_unknown(fault, {"random_offset_cycles"}, "fault_injection")
        if fault.get("random_offset_cycles") is not None:
            bounds = _expect_list(fault["random_offset_cycles"],
                                  "fault_injection.random_offset_cycles")
            if len(bounds) != 2:
                raise ValidationError("fault_injection.random_offset_cycles",
                                      "expected [low, high]")
            low = _expect_int(bounds[0], "fault_injection.random_offset_cycles[0]")
            high = _expect_int(bounds[1], "fault_injection.random_offset_cycles[1]")
            if low > high:
                raise ValidationError("fault_injection.random_offset_cycles",
                                      f"low {low} > high {high}")
            scenario.random_offset_cycles = (low, high)

    if program_text is None:
        if raw.get("program_text") is not None:
            program_text = str(raw["program_text"])
        elif raw.get("program") is not None:
            rel = str(raw["program"])
            path = (base_dir / rel) if base_dir is not None else Path(rel)
            try:
                program_text = path.read_text()
            except OSError as exc:
                raise ValidationError("program", f"cannot read {rel!r}: {exc}") from exc
    if program_text is not None:
        try:
            scenario.binaries = parse_program(program_text)
        except ProgramSyntaxError as exc:
            raise ValidationError("program", str(exc)) from exc
        scenario.program_text = program_text
        for binary in scenario.binaries:
            if binary.board not in board_ids:
                raise ValidationError(
                    "program", f"program section for unknown board {binary.board}")

    if scenario.resync_period is not None and scenario.t_stop is None:
        raise ValidationError("ring.resync_period", "periodic resync needs a t_stop")
    return scenario


def load_scenario(path) -> Scenario:
    """Load a .scenario file; sidecar program paths resolve next to it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return parse_scenario(text, base_dir=path.parent)
