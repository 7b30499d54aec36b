"""Readout and feed-forward state machines at the ends of the fiber star.

The root board's readout FSM collects measurement results into frame slots
and broadcasts them to every leaf; each leaf's feed-forward FSM merges the
frames into a register the board program branches on.
"""

from __future__ import annotations

from enum import Enum
from typing import Iterable, Optional

from .errors import IndexOutOfRange
from .frames import QUBITS_PER_FRAME, QubitResult, decode_frame
from .frames import encode_frame
from .link import Lane, LinkFrame
from .sim import MAX_LANES_PER_BOARD, Engine
from .timebase import ticks_of

BROADCAST_GAP_TICKS = ticks_of(32, "ns")  # 2640: floor between frame starts


class ReadoutPhase(Enum):
    IDLE = "idle"
    ACCUMULATING = "accumulating"
    TRANSMITTING = "transmitting"
    COOLDOWN = "cooldown"


class _Slot:
    __slots__ = ("state", "valid", "locked")

    def __init__(self):
        self.state = 0
        self.valid = False
        self.locked = False


class ReadoutFsm:
    """Root-node collector: captures results, broadcasts them as 64-bit frames.

    A captured slot locks until its frame goes out; a second capture of a
    locked slot is rejected and counted, so a pending result is never
    overwritten. Broadcasts start as soon as at least one slot is valid,
    subject to the 32 ns floor between consecutive frame starts; all slots
    clear and unlock when their frame's transmission starts.
    """

    def __init__(self, engine: Engine, board_id: int, lanes: Iterable[Lane] = (),
                 *, qubit_count: int = QUBITS_PER_FRAME,
                 broadcast_gap: int = BROADCAST_GAP_TICKS):
        self.engine = engine
        self.board_id = board_id
        self.lanes = list(lanes)
        self.qubit_count = qubit_count
        self.broadcast_gap = broadcast_gap
        self.slots = [_Slot() for _ in range(qubit_count)]
        self.rejected_captures = 0
        self.frames_sent = 0
        self.last_tx_start: Optional[int] = None
        self._tx_armed = False
        self._transmitting = False

    @property
    def phase(self) -> ReadoutPhase:
        if self._transmitting:
            return ReadoutPhase.TRANSMITTING
        if any(slot.valid for slot in self.slots):
            return ReadoutPhase.ACCUMULATING
        if (self.last_tx_start is not None
                and self.engine.now < self.last_tx_start + self.broadcast_gap):
            return ReadoutPhase.COOLDOWN
        return ReadoutPhase.IDLE

    def reset(self):
        """Clear all slots for a new shot. Counters are cumulative diagnostics."""
        for slot in self.slots:
            slot.state = 0
            slot.valid = False
            slot.locked = False

    def capture(self, qubit: int, state: int) -> bool:
        """Latch one result; False (and a rejection count) if the slot is locked."""
        if not 0 <= qubit < self.qubit_count:
            raise IndexOutOfRange(f"qubit {qubit} outside 0..{self.qubit_count - 1}")
        if state not in (0, 1, 2, 3):
            raise ValueError(f"state {state} does not fit in 2 bits")
        slot = self.slots[qubit]
        if slot.locked:
            self.rejected_captures += 1
            self.engine.record("capture-reject", board=self.board_id,
                               qubit=qubit, state=state, pending_state=slot.state)
            return False
        slot.state = state
        slot.valid = True
        slot.locked = True
        self.engine.record("capture", board=self.board_id, qubit=qubit, state=state)
        self._arm_transmit()
        return True

    def _arm_transmit(self):
        if self._tx_armed:
            return
        earliest = self.engine.now
        if self.last_tx_start is not None:
            earliest = max(earliest, self.last_tx_start + self.broadcast_gap)
        self._tx_armed = True
        self.engine.schedule(earliest, self._transmit, kind="frame-tx",
                             board=self.board_id)

    def _transmit(self):
        self._tx_armed = False
        results = [QubitResult(i, slot.state)
                   for i, slot in enumerate(self.slots) if slot.valid]
        if not results:
            return
        self._transmitting = True
        word = encode_frame(results)
        frame = LinkFrame.from_words([word])
        self.reset()
        self.last_tx_start = self.engine.now
        self.frames_sent += 1
        self.engine.record("frame-broadcast", board=self.board_id,
                           word=f"{word:016x}",
                           slots=[r.index for r in results],
                           lanes=[lane.id for lane in self.lanes])
        for lane in self.lanes:
            lane.transmit(frame, self.board_id)
        self._transmitting = False

    def attach_lane(self, lane: Lane):
        if len(self.lanes) >= MAX_LANES_PER_BOARD:
            raise ValueError(f"readout fan-out limited to {MAX_LANES_PER_BOARD} lanes")
        self.lanes.append(lane)


class FeedForwardFsm:
    """Leaf-node register of broadcast results, in the same layout as the wire frame.

    Frames merge per slot: a later frame updates only the slots it carries.
    Frames that fail CRC are dropped and counted; the register never absorbs
    a corrupt word. Queries are read-only; unknown slots answer None.
    """

    def __init__(self, engine: Engine, board_id: int):
        self.engine = engine
        self.board_id = board_id
        self.register = 0
        self.dropped_frames = 0
        self.last_update: Optional[int] = None
        self.update_times: list[int] = []

    def store(self, frame: LinkFrame, crc_ok: bool = True):
        if not crc_ok:
            self.dropped_frames += 1
            self.engine.record("ff-drop", board=self.board_id, reason="crc")
            return
        for word in frame.payload:
            for result in decode_frame(word):
                shift = 3 * result.index
                self.register = ((self.register & ~(0b111 << shift))
                                 | ((0b100 | result.state) << shift))
        self.last_update = self.engine.now
        self.update_times.append(self.engine.now)
        self.engine.record("ff-store", board=self.board_id,
                           register=f"{self.register:016x}")

    def query(self, qubits: Iterable[int]) -> dict:
        """Latest known state per qubit; None when no result has arrived."""
        answer = {}
        for qubit in sorted(set(qubits)):
            if not 0 <= qubit < QUBITS_PER_FRAME:
                raise IndexOutOfRange(f"qubit {qubit} outside 0..{QUBITS_PER_FRAME - 1}")
            slot = (self.register >> (3 * qubit)) & 0b111
            answer[qubit] = (slot & 0b011) if slot & 0b100 else None
        self.engine.record("ff-query", board=self.board_id, answer=answer)
        return answer

    def reset(self):
        self.register = 0
        self.last_update = None
        self.update_times = []

    def attach(self, lane: Lane):
        """Wire this FSM to receive every frame the lane delivers to its board."""
        lane.on_deliver(self.board_id, self.store)


class StarTopology:
    """Root board fanned out to leaf boards over dedicated lanes."""

    def __init__(self, root: int, leaves: list[int], lanes: dict):
        if len(leaves) != len(set(leaves)) or root in leaves:
            raise ValueError("star leaves must be unique and distinct from the root")
        if len(leaves) > MAX_LANES_PER_BOARD:
            raise ValueError(f"root fan-out limited to {MAX_LANES_PER_BOARD} leaves")
        missing = [leaf for leaf in leaves if leaf not in lanes]
        if missing:
            raise ValueError(f"leaves {missing} have no lane to the root")
        self.root = root
        self.leaves = list(leaves)
        self.lanes = dict(lanes)  # leaf id -> Lane
