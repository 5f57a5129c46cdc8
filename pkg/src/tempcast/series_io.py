"""Series ingestion, monthly aggregation and reversible transforms.

Raw hourly weather CSVs (the Kaggle Szeged layout by default) are parsed into
an hourly :class:`TimeSeries`, bucketed into calendar-month means, and then
fed to the models through z-score normalization, differencing and sliding
supervised windows. Every transform here has an exact inverse.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    ConfigError,
    DegenerateSeries,
    EmptyInput,
    GapError,
    InsufficientData,
    ParseError,
    ShapeError,
)

DEFAULT_TIMESTAMP_COL = "Formatted Date"
DEFAULT_TEMPERATURE_COL = "Temperature (C)"
DEFAULT_LOOKBACK = 12


class Frequency(enum.Enum):
    HOURLY = "hourly"
    MONTHLY = "monthly"


def _month_index(ym):
    return ym[0] * 12 + (ym[1] - 1)


def _month_from_index(idx):
    return (idx // 12, idx % 12 + 1)


def shift_month(ym, k):
    """Return the (year, month) pair ``k`` months after ``ym``."""
    return _month_from_index(_month_index(ym) + k)


def format_month(ym) -> str:
    return f"{ym[0]:04d}-{ym[1]:02d}"


@dataclass(frozen=True)
class TimeSeries:
    """Timestamped temperature values at hourly or monthly frequency.

    Monthly timestamps are ``(year, month)`` tuples; hourly timestamps are
    ``datetime`` objects. Values are stored as a read-only float64 array.
    """

    timestamps: tuple
    values: np.ndarray
    frequency: Frequency = Frequency.MONTHLY

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        if len(values) == 0:
            raise EmptyInput("a time series needs at least one point")
        if len(self.timestamps) != len(values):
            raise ShapeError(
                f"{len(self.timestamps)} timestamps for {len(values)} values"
            )
        if not np.all(np.isfinite(values)):
            raise ParseError("series contains non-finite values")
        if self.frequency is Frequency.MONTHLY:
            idx = [_month_index(ts) for ts in self.timestamps]
            if any(b - a != 1 for a, b in zip(idx, idx[1:])):
                raise ShapeError("monthly timestamps must be consecutive months")
        else:
            if any(b <= a for a, b in zip(self.timestamps, self.timestamps[1:])):
                raise ShapeError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.values)

    @classmethod
    def monthly(cls, values: Iterable[float], start=(2000, 1)) -> "TimeSeries":
        """Build a monthly series starting at ``start`` from raw values."""
        values = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                            dtype=float)
        stamps = tuple(shift_month(start, i) for i in range(len(values)))
        return cls(stamps, values, Frequency.MONTHLY)

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.timestamps, values, self.frequency)

    def step_back(self, k: int = 1):
        """Timestamp ``k`` periods before the first point."""
        first = self.timestamps[0]
        if self.frequency is Frequency.MONTHLY:
            return shift_month(first, -k)
        return first - timedelta(hours=k)

    def step_forward(self, k: int = 1):
        """Timestamp ``k`` periods after the last point."""
        last = self.timestamps[-1]
        if self.frequency is Frequency.MONTHLY:
            return shift_month(last, k)
        return last + timedelta(hours=k)

    def slice(self, start=None, stop=None) -> "TimeSeries":
        return TimeSeries(
            self.timestamps[start:stop], self.values[start:stop], self.frequency
        )


@dataclass(frozen=True)
class NormalizationParams:
    mean: float
    sample_std: float

    def __post_init__(self):
        if not self.sample_std > 0:
            raise DegenerateSeries("sample standard deviation must be positive")


@dataclass(frozen=True)
class DifferencingRecord:
    """Leading values dropped by each differencing pass, outermost first."""

    order_d: int
    seed_values: tuple = field(default_factory=tuple)

    def __post_init__(self):
        seeds = tuple(tuple(float(v) for v in s) for s in self.seed_values)
        object.__setattr__(self, "seed_values", seeds)
        if self.order_d < 0 or len(seeds) != self.order_d:
            raise ShapeError(
                f"differencing record of order {self.order_d} has {len(seeds)} seeds"
            )


@dataclass(frozen=True)
class SupervisedWindowSet:
    inputs: np.ndarray  # (count, lookback)
    targets: np.ndarray  # (count,)
    lookback: int

    def __len__(self):
        return len(self.targets)


# --------------------------------------------------------------------------
# Parsing

_TS_RE = re.compile(
    r"^\s*(\d{4})-(\d{1,2})-(\d{1,2})"
    r"(?:[ T](\d{1,2}):(\d{2})(?::(\d{2})(?:\.(\d+))?)?)?"
    r"\s*(Z|[+-]\d{2}:?\d{2})?\s*$"
)


def parse_timestamp(text: str) -> datetime:
    """Parse ISO-like timestamps, including ``2006-04-01 00:00:00.000 +0200``."""
    m = _TS_RE.match(text)
    if not m:
        raise ValueError(f"unrecognised timestamp {text!r}")
    year, month, day, hour, minute, sec, frac, tz = m.groups()
    micro = int((frac or "0")[:6].ljust(6, "0"))
    tzinfo = None
    if tz == "Z":
        tzinfo = timezone.utc
    elif tz:
        sign = 1 if tz[0] == "+" else -1
        digits = tz[1:].replace(":", "")
        offset = timedelta(hours=int(digits[:2]), minutes=int(digits[2:]))
        tzinfo = timezone(sign * offset)
    return datetime(
        int(year), int(month), int(day), int(hour or 0), int(minute or 0),
        int(sec or 0), micro, tzinfo=tzinfo,
    )


def _as_text_stream(source):
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8-sig"))
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8-sig", newline="")
    if isinstance(source, io.TextIOBase):
        return source
    # binary stream
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline="")


def parse_csv(
    source,
    timestamp_col: str = DEFAULT_TIMESTAMP_COL,
    temperature_col: str = DEFAULT_TEMPERATURE_COL,
) -> TimeSeries:
    """Read an hourly weather CSV into an hourly :class:`TimeSeries`.

    ``source`` may be a path, raw bytes, or a text/binary stream. Only the
    timestamp and temperature columns are read. Rows are sorted by instant
    and duplicated instants are collapsed to the mean of their readings.
    Row numbers in errors count the header as row 1.
    """
    stream = _as_text_stream(source)
    try:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None:
            raise EmptyInput("input CSV is empty")
        header = [h.strip() for h in header]
        for col in (timestamp_col, temperature_col):
            if col not in header:
                raise ConfigError(f"column {col!r} not found in header {header}")
        ts_i = header.index(timestamp_col)
        temp_i = header.index(temperature_col)

        buckets: dict = defaultdict(list)
        kinds = set()
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                stamp = parse_timestamp(row[ts_i])
            except (ValueError, IndexError):
                raise ParseError(f"row {rowno}: unparsable timestamp", row=rowno) from None
            try:
                temp = float(row[temp_i])
            except (ValueError, IndexError):
                raise ParseError(f"row {rowno}: unparsable temperature", row=rowno) from None
            if not math.isfinite(temp):
                raise ParseError(f"row {rowno}: non-finite temperature", row=rowno)
            kinds.add(stamp.tzinfo is None)
            if len(kinds) > 1:
                raise ParseError(
                    f"row {rowno}: mixes timezone-aware and naive timestamps", row=rowno
                )
            buckets[stamp].append((temp, stamp))
    finally:
        if isinstance(source, (str, Path)):
            stream.close()

    if not buckets:
        raise EmptyInput("input CSV has a header but no data rows")

    stamps = sorted(buckets)
    # Keep the wall-clock reading of the first row seen for each instant.
    values = [float(np.mean([t for t, _ in buckets[s]])) for s in stamps]
    walls = [buckets[s][0][1] for s in stamps]
    return TimeSeries(tuple(walls), np.array(values), Frequency.HOURLY)


def aggregate_monthly(hourly: TimeSeries) -> TimeSeries:
    """Average hourly readings into one value per calendar month.

    Months are bucketed on the local wall-clock date written in the data.
    """
    if hourly.frequency is not Frequency.HOURLY:
        raise ConfigError("aggregate_monthly expects an hourly series")
    sums: dict = defaultdict(float)
    counts: dict = defaultdict(int)
    for stamp, value in zip(hourly.timestamps, hourly.values):
        key = (stamp.year, stamp.month)
        sums[key] += value
        counts[key] += 1
    # Summation order above follows timestamp order, which is fixed after
    # parsing, so the means do not depend on the original row order.
    months = sorted(sums)
    lo, hi = _month_index(months[0]), _month_index(months[-1])
    present = {_month_index(m) for m in months}
    missing = [_month_from_index(i) for i in range(lo, hi + 1) if i not in present]
    if missing:
        raise GapError(missing)
    values = np.array([sums[m] / counts[m] for m in months])
    return TimeSeries(tuple(months), values, Frequency.MONTHLY)


# --------------------------------------------------------------------------
# Canonical monthly file


def write_monthly_csv(series: TimeSeries, path) -> None:
    """Write ``timestamp,value`` rows with ``YYYY-MM`` stamps."""
    if series.frequency is not Frequency.MONTHLY:
        raise ConfigError("only monthly series have a canonical file form")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("timestamp,value\n")
        for ym, v in zip(series.timestamps, series.values):
            fh.write(f"{format_month(ym)},{float(v)!r}\n")


def read_monthly_csv(source) -> TimeSeries:
    stream = _as_text_stream(source)
    try:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None:
            raise EmptyInput("monthly series file is empty")
        header = [h.strip() for h in header]
        if header[:2] != ["timestamp", "value"]:
            raise ConfigError(f"expected header 'timestamp,value', got {header}")
        stamps, values = [], []
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            m = re.fullmatch(r"\s*(\d{4})-(\d{2})\s*", row[0])
            if not m:
                raise ParseError(f"row {rowno}: timestamp must be YYYY-MM", row=rowno)
            try:
                value = float(row[1])
            except (ValueError, IndexError):
                raise ParseError(f"row {rowno}: unparsable value", row=rowno) from None
            stamps.append((int(m.group(1)), int(m.group(2))))
            values.append(value)
    finally:
        if isinstance(source, (str, Path)):
            stream.close()
    if not values:
        raise EmptyInput("monthly series file has no data rows")
    idx = [_month_index(s) for s in stamps]
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ParseError("monthly timestamps must be strictly increasing")
    present = set(idx)
    missing = [_month_from_index(i) for i in range(idx[0], idx[-1] + 1) if i not in present]
    if missing:
        raise GapError(missing)
    return TimeSeries(tuple(stamps), np.array(values), Frequency.MONTHLY)


# --------------------------------------------------------------------------
# Transforms


def zscore_normalize(series: TimeSeries) -> tuple[TimeSeries, NormalizationParams]:
    x = series.values
    if len(x) < 2:
        raise InsufficientData("z-score normalization needs at least 2 points")
    mean = float(np.mean(x))
    std = float(np.std(x, ddof=1))
    if not std > 0:
        raise DegenerateSeries("constant series cannot be z-score normalized")
    params = NormalizationParams(mean, std)
    return series.with_values((x - mean) / std), params


def denormalize(series: TimeSeries, params: NormalizationParams) -> TimeSeries:
    return series.with_values(denormalize_values(series.values, params))


def denormalize_values(values, params: NormalizationParams) -> np.ndarray:
    return np.asarray(values, dtype=float) * params.sample_std + params.mean


def difference(series: TimeSeries, d: int) -> tuple[TimeSeries, DifferencingRecord]:
    """Apply first-order differencing ``d`` times.

    Each differenced value is stamped with the later of its two source
    timestamps, so every pass drops the first timestamp.
    """
    if d < 0:
        raise ConfigError("differencing order must be non-negative")
    if d >= len(series):
        raise InsufficientData(f"cannot difference {len(series)} points {d} times")
    x = np.asarray(series.values, dtype=float)
    seeds = []
    for _ in range(d):
        seeds.append([float(x[0])])
        x = x[1:] - x[:-1]
    out = TimeSeries(series.timestamps[d:], x, series.frequency)
    return out, DifferencingRecord(d, tuple(seeds))


def integrate_values(values, record: DifferencingRecord) -> np.ndarray:
    """Invert :func:`difference` on a bare value array."""
    x = np.asarray(values, dtype=float)
    for seed in reversed(record.seed_values):
        if len(seed) != 1:
            raise ShapeError(f"seed entry has {len(seed)} values, expected 1")
        x = np.concatenate(([seed[0]], seed[0] + np.cumsum(x)))
    return x


def integrate(series: TimeSeries, record: DifferencingRecord) -> TimeSeries:
    """Invert :func:`difference`, innermost pass first.

    ``series`` may be longer than the differenced original, e.g. with
    forecasts appended; the cumulative sums simply run further.
    """
    values = integrate_values(series.values, record)
    d = record.order_d
    stamps = tuple(series.step_back(k) for k in range(d, 0, -1)) + series.timestamps
    return TimeSeries(stamps, values, series.frequency)


def make_windows(series, lookback: int = DEFAULT_LOOKBACK) -> SupervisedWindowSet:
    """Frame a series as (window, next value) pairs with stride 1."""
    x = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    if lookback < 1:
        raise ConfigError("lookback must be at least 1")
    n = len(x)
    if n <= lookback:
        raise InsufficientData(f"series of length {n} has no target for lookback {lookback}")
    idx = np.arange(lookback)[None, :] + np.arange(n - lookback)[:, None]
    return SupervisedWindowSet(x[idx].copy(), x[lookback:].copy(), lookback)


def as_values(series) -> np.ndarray:
    """Accept a :class:`TimeSeries` or any sequence of numbers."""
    if isinstance(series, TimeSeries):
        return np.asarray(series.values, dtype=float)
    return np.asarray(series, dtype=float).reshape(-1)


def concat(first: TimeSeries, second: TimeSeries) -> TimeSeries:
    return TimeSeries(
        first.timestamps + second.timestamps,
        np.concatenate([first.values, second.values]),
        first.frequency,
    )


def load_series(path, frequency: str = "hourly",
                timestamp_col: str = DEFAULT_TIMESTAMP_COL,
                temperature_col: str = DEFAULT_TEMPERATURE_COL) -> TimeSeries:
    """Load a monthly series from either a raw hourly CSV or a canonical file."""
    if frequency == "monthly":
        return read_monthly_csv(path)
    if frequency == "hourly":
        return aggregate_monthly(parse_csv(path, timestamp_col, temperature_col))
    raise ConfigError(f"unknown frequency {frequency!r}")
