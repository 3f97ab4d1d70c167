"""Measurement-file parsing and signal assembly.

Reads emonTx-style CSV records (12 Hz RMS current/voltage, power,
power factor, UTC timestamps), resamples one channel onto a uniform
index grid by zero-order hold, and sums aligned plug channels into a
ground-truth aggregate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ValidationError
from .series import SignalSeries

EMONTX_HEADER = "timestamp_utc,irms,vrms,pva,pw,pf"
CHANNELS = ("irms", "pw", "pva")
PF_TOL = 1e-6

# Grid-length arithmetic tolerance for timestamps that are "exactly" on
# a sample boundary up to float rounding.
_GRID_EPS = 1e-9


class GapWarning(UserWarning):
    """A recording contains a hole longer than the configured limit."""


@dataclass(frozen=True)
class EmonRecord:
    """One measurement row from an energy-monitor node."""

    timestamp_utc: float
    irms: float
    vrms: float
    pva: float
    pw: float
    pf: float

    def __post_init__(self):
        if not all(
            math.isfinite(v)
            for v in (self.timestamp_utc, self.irms, self.vrms, self.pva, self.pw, self.pf)
        ):
            raise ValidationError("non-finite field in record")
        if self.irms < 0 or self.vrms < 0 or self.pva < 0:
            raise ValidationError("irms, vrms and pva must be nonnegative")
        if abs(self.pf) > 1.0 + PF_TOL:
            raise ValidationError(f"power factor {self.pf} outside [-1, 1]")


class Gap(NamedTuple):
    """A hole between consecutive records, measured in sample periods."""

    start_k: int
    periods: int


def parse_emontx_csv(path: str | Path) -> list[EmonRecord]:
    """Parse a full recording, reporting the line number of any bad row."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != EMONTX_HEADER:
        raise ValidationError(
            f"bad header in {path}: expected '{EMONTX_HEADER}'"
        )
    records: list[EmonRecord] = []
    last_ts: float | None = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 6:
            raise ValidationError(f"line {lineno}: expected 6 fields, got {len(fields)}")
        try:
            values = [float(f) for f in fields]
        except ValueError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from exc
        try:
            rec = EmonRecord(*values)
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from exc
        if last_ts is not None and rec.timestamp_utc <= last_ts:
            raise ValidationError(
                f"line {lineno}: timestamp {rec.timestamp_utc!r} not after {last_ts!r}"
            )
        last_ts = rec.timestamp_utc
        records.append(rec)
    return records


def write_emontx_csv(records: list[EmonRecord], path: str | Path) -> None:
    """Serialize records so that a reparse reproduces them exactly."""
    lines = [EMONTX_HEADER]
    for rec in records:
        lines.append(
            ",".join(
                repr(float(v))
                for v in (rec.timestamp_utc, rec.irms, rec.vrms, rec.pva, rec.pw, rec.pf)
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def find_gaps(
    records: list[EmonRecord], nominal_rate: float, gap_periods: float = 10.0
) -> list[Gap]:
    """Holes between consecutive records longer than gap_periods."""
    gaps = []
    for prev, cur in zip(records, records[1:]):
        dt = cur.timestamp_utc - prev.timestamp_utc
        periods = round(dt * nominal_rate)
        if dt * nominal_rate > gap_periods:
            start_k = round(prev.timestamp_utc * nominal_rate)
            gaps.append(Gap(start_k=start_k, periods=periods))
    return gaps


def to_signal(
    records: list[EmonRecord],
    channel: str = "irms",
    nominal_rate: float = 12.0,
    gap_periods: float = 10.0,
) -> SignalSeries:
    """Resample one channel onto a uniform grid by zero-order hold.

    The grid starts at the first record and the start index encodes
    absolute time (round(t_first * rate)) so that signals from separate
    recordings sharing a clock stay aligned.  Gaps longer than
    gap_periods sample periods raise a GapWarning.
    """
    if len(records) < 2:
        raise ValidationError("need at least 2 records to build a signal")
    if channel not in CHANNELS:
        raise ValidationError(f"unknown channel '{channel}', expected one of {CHANNELS}")
    if nominal_rate <= 0:
        raise ValidationError(f"nominal_rate must be > 0, got {nominal_rate}")
    for gap in find_gaps(records, nominal_rate, gap_periods):
        warnings.warn(
            f"gap of {gap.periods} sample periods at k={gap.start_k}", GapWarning,
            stacklevel=2,
        )
    ts = np.array([r.timestamp_utc for r in records])
    vals = np.array([getattr(r, channel) for r in records])
    span = ts[-1] - ts[0]
    length = int(math.ceil(span * nominal_rate - _GRID_EPS)) + 1
    grid = ts[0] + np.arange(length) / nominal_rate
    src = np.searchsorted(ts, grid + _GRID_EPS, side="right") - 1
    start_index = round(ts[0] * nominal_rate)
    return SignalSeries(
        vals[src], sample_period=1.0 / nominal_rate, start_index=start_index
    )


def sum_aligned(signals: list[SignalSeries]) -> SignalSeries:
    """Pointwise sum over the intersection of the signals' index ranges.

    The addends are sorted canonically before the left-to-right fold so
    the result is exactly permutation-invariant.
    """
    if not signals:
        raise ValidationError("nothing to sum")
    first = signals[0]
    for s in signals[1:]:
        if not first.same_grid(s):
            raise ValidationError(
                f"mismatched sample periods: {first.sample_period} vs {s.sample_period}"
            )
    lo = max(s.start_index for s in signals)
    hi = min(s.end_index for s in signals)
    if hi <= lo:
        raise ValidationError("signals have no overlapping index range")
    windows = sorted((s.window(lo, hi - 1) for s in signals), key=tuple)
    total = reduce(np.add, windows)
    return SignalSeries(total, sample_period=first.sample_period, start_index=lo)


def write_signal_csv(signal: SignalSeries, path: str | Path) -> None:
    """Write the `k,value` form; floats round-trip exactly."""
    lines = ["k,value"]
    for p, v in enumerate(signal.values):
        lines.append(f"{signal.start_index + p},{float(v)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_signal_csv(path: str | Path, sample_period: float = 1.0) -> SignalSeries:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "k,value":
        raise ValidationError(f"bad signal header in {path}: expected 'k,value'")
    ks: list[int] = []
    vals: list[float] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            k_str, v_str = line.split(",")
            ks.append(int(k_str))
            vals.append(float(v_str))
        except ValueError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from exc
    if not ks:
        raise ValidationError(f"no samples in {path}")
    for prev, cur in zip(ks, ks[1:]):
        if cur != prev + 1:
            raise ValidationError(f"non-contiguous index {cur} after {prev}")
    return SignalSeries(np.array(vals), sample_period=sample_period, start_index=ks[0])
