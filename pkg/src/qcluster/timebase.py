"""Global integer time base.

Every clock in the cluster is modeled on one tick grid whose rate is the least
common multiple of all modeled frequencies: 82.5 GHz. One control-clock cycle
(500 MHz) is 165 ticks, one link user-clock cycle (161.1328125 MHz) is 512
ticks, one serial line bit (10.3125 Gbps) is 8 ticks, and one cycle of the
10 MHz lab reference is 8250 ticks. All simulator time arithmetic is integer
ticks (or exact Fractions for drifted clocks); floating point never touches a
timestamp. Nanosecond values are derived views for humans only.
"""

from __future__ import annotations

import re
from fractions import Fraction

from .errors import NonRepresentableDuration

BASE_TICK_HZ = 82_500_000_000  # 82.5 GHz

CONTROL_CLOCK_HZ = Fraction(500_000_000)
USER_CLOCK_HZ = Fraction(10_312_500_000, 64)  # 161.1328125 MHz, line rate / 64
LINE_RATE_BPS = Fraction(10_312_500_000)
REFERENCE_CLOCK_HZ = Fraction(10_000_000)

CONTROL_CYCLE_TICKS = 165
USER_CYCLE_TICKS = 512
LINE_BIT_TICKS = 8
REFERENCE_CYCLE_TICKS = 8250

_SECONDS_PER_UNIT = {
    "ps": Fraction(1, 10**12),
    "ns": Fraction(1, 10**9),
    "us": Fraction(1, 10**6),
    "ms": Fraction(1, 10**3),
    "s": Fraction(1),
}

_DURATION_RE = re.compile(
    r"^\s*(?P<value>-?\d+(?:\.\d+)?)\s*(?P<unit>ps|ns|us|ms|s|cycles)\s*$"
)


def as_fraction(value) -> Fraction:
    """Exact Fraction from int/str/Fraction; floats go through their decimal repr."""
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


def ticks_of(value, unit: str) -> int:
    """Convert a duration to base ticks, exactly.

    Raises NonRepresentableDuration when the result is not an integer
    (e.g. 7 ps is 0.5775 ticks).
    """
    if unit not in _SECONDS_PER_UNIT:
        raise NonRepresentableDuration(f"unknown unit {unit!r}")
    ticks = as_fraction(value) * _SECONDS_PER_UNIT[unit] * BASE_TICK_HZ
    if ticks.denominator != 1:
        raise NonRepresentableDuration(
            f"{value}{unit} is {float(ticks)} base ticks, not an integer"
        )
    return int(ticks)


def period_ticks(frequency_hz) -> int:
    """Clock period in base ticks; the frequency must divide the base rate."""
    freq = as_fraction(frequency_hz)
    if freq <= 0:
        raise NonRepresentableDuration(f"frequency {frequency_hz} must be positive")
    period = Fraction(BASE_TICK_HZ) / freq
    if period.denominator != 1:
        raise NonRepresentableDuration(
            f"period of {frequency_hz} Hz is {float(period)} ticks, not an integer"
        )
    return int(period)


def cycles_ticks(count: int, frequency_hz) -> int:
    """Duration of `count` whole cycles of the given clock, in base ticks."""
    return count * period_ticks(frequency_hz)


def parse_duration(text: str) -> int:
    """Parse a duration literal like '32ns', '1.5us' or '3cycles' to base ticks.

    'cycles' counts control-clock cycles (500 MHz).
    """
    m = _DURATION_RE.match(text)
    if m is None:
        raise NonRepresentableDuration(f"bad duration literal {text!r}")
    value, unit = m.group("value"), m.group("unit")
    if unit == "cycles":
        count = Fraction(value)
        if count.denominator != 1:
            raise NonRepresentableDuration(f"{text!r}: cycle counts must be whole")
        return cycles_ticks(int(count), CONTROL_CLOCK_HZ)
    return ticks_of(value, unit)


def ns(ticks: int) -> float:
    """Nanosecond view of a tick count, for reports. Ticks stay authoritative."""
    return ticks / 82.5
