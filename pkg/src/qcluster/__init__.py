"""Deterministic discrete-event simulator of a multi-FPGA control cluster.

Models a ring of FPGA boards that synchronize their clock counters with a
minimal two-way time-transfer scheme, exchange framed data over serial fiber
lanes, and run timed board programs with mid-circuit measurement and
feed-forward branching. All time arithmetic is exact integer ticks on an
82.5 GHz grid; identical inputs replay identical traces, byte for byte.
"""

__version__ = "0.1.0"

from .control import Cluster, JobServer, ReadoutEmulator
from .frames import QubitResult, decode_frame, encode_frame
from .fsm import FeedForwardFsm, ReadoutFsm, StarTopology
from .link import Lane, LaneConfig, LaneSchedule, LinkFrame, effective_throughput
from .program import parse_program
from .ptp import (
    PtpExchange,
    RingTopology,
    SyncLink,
    compute_offset,
    compute_transit,
    perform_exchange,
    ring_synchronize,
)
from .runner import build_cluster, run_scenario, sync_check, write_outputs
from .scenario import Scenario, load_scenario, parse_scenario
from .sim import Board, ClockDomain, Engine
from .timebase import BASE_TICK_HZ, ns, parse_duration, ticks_of

__all__ = [
    "BASE_TICK_HZ",
    "Board",
    "ClockDomain",
    "Cluster",
    "Engine",
    "FeedForwardFsm",
    "JobServer",
    "Lane",
    "LaneConfig",
    "LaneSchedule",
    "LinkFrame",
    "PtpExchange",
    "QubitResult",
    "ReadoutEmulator",
    "ReadoutFsm",
    "RingTopology",
    "Scenario",
    "StarTopology",
    "SyncLink",
    "build_cluster",
    "compute_offset",
    "compute_transit",
    "decode_frame",
    "effective_throughput",
    "encode_frame",
    "load_scenario",
    "ns",
    "parse_duration",
    "parse_program",
    "parse_scenario",
    "perform_exchange",
    "ring_synchronize",
    "run_scenario",
    "sync_check",
    "ticks_of",
    "write_outputs",
    "__version__",
]
