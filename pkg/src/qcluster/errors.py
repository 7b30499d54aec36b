"""Exception types shared across the simulator."""


class SimError(Exception):
    """Base class for every error raised by this package."""


class NonRepresentableDuration(SimError):
    """Duration is not an exact whole number of base ticks."""


class SchedulingInPast(SimError):
    """Event scheduled before the engine's current time."""


class NegativeTransit(SimError):
    """A sync exchange produced an impossible negative link delay."""


class RingOpen(SimError):
    """Ring topology is not closed; synchronization cannot run."""


class FifoOverflow(SimError):
    """Transmit-side clock-domain-crossing FIFO has no room for the frame."""


class IndexOutOfRange(SimError):
    """Qubit/slot/bit index outside its valid range."""


class DuplicateIndex(SimError):
    """Same qubit index supplied twice for one frame."""


class ProgramSyntaxError(SimError):
    """Board program text failed to parse."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnknownBoard(SimError):
    """Referenced board id does not exist in the cluster."""


class NotSynchronized(SimError):
    """Start broadcast attempted before ring synchronization."""


class StartInPast(NotSynchronized):
    """Start counter value already passed on some board."""


class MissingBinary(SimError):
    """Start broadcast attempted while some board has no program loaded."""


class ScriptExhausted(SimError):
    """Readout emulator script has no result left for a measure."""


class InterpreterLoop(SimError):
    """Board program executed more zero-time steps than it has instructions."""


class ParseError(SimError):
    """Scenario file is not well-formed."""


class ValidationError(SimError):
    """Scenario content is invalid; carries the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
