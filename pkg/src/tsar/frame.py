"""Uniform time grids, frames with missing values, and window bookkeeping.

Missing values are represented by ``nan`` in float64 arrays. Every reduction
in this package filters them out explicitly instead of relying on ``nan``
propagation.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

__all__ = [
    "TimeGrid",
    "SeriesFrame",
    "SplitSpec",
    "ObservationMask",
    "FrameFormatError",
    "split_train_test",
    "window_concat",
    "deconcat",
    "read_csv",
    "write_csv",
    "parse_timestamp",
    "format_timestamp",
]


class FrameFormatError(ValueError):
    """Raised on malformed CSV input."""


@dataclass(frozen=True)
class TimeGrid:
    """Row ``t`` sits at ``origin + t * step`` epoch seconds."""

    origin: int
    step: int
    length: int

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.length < 0:
            raise ValueError(f"length must be nonnegative, got {self.length}")

    def timestamp(self, t):
        return self.origin + int(t) * self.step

    def timestamps(self):
        return self.origin + self.step * np.arange(self.length, dtype=np.int64)

    def index_of(self, timestamp):
        """Row index (possibly out of range) of an on-grid timestamp."""
        offset = int(timestamp) - self.origin
        if offset % self.step:
            raise ValueError(
                f"timestamp {format_timestamp(timestamp)} is not on the grid "
                f"(origin {format_timestamp(self.origin)}, step {self.step}s)"
            )
        return offset // self.step

    def is_aligned(self, other):
        return other.step == self.step and (other.origin - self.origin) % self.step == 0

    def slice(self, start, stop):
        return TimeGrid(self.timestamp(start), self.step, max(stop - start, 0))


@dataclass(frozen=True, eq=False)
class SeriesFrame:
    """Immutable ``T x M`` table of float values on a uniform time grid."""

    grid: TimeGrid
    columns: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        columns = tuple(str(c) for c in self.columns)
        if len(set(columns)) != len(columns):
            raise ValueError(f"column names must be unique, got {columns}")
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim == 1 and len(columns) == 1:
            values = values[:, None]
        if values.shape != (self.grid.length, len(columns)):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"({self.grid.length}, {len(columns)})"
            )
        values.flags.writeable = False
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, values, columns=None, origin=0, step=1):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if columns is None:
            columns = [f"x{i}" for i in range(values.shape[1])]
        return cls(TimeGrid(int(origin), int(step), values.shape[0]), tuple(columns), values)

    @classmethod
    def from_pandas(cls, df):
        """Build a frame from a DataFrame indexed by uniformly spaced datetimes."""
        import pandas as pd

        index = pd.DatetimeIndex(df.index)
        if index.tz is not None:
            index = index.tz_convert("UTC").tz_localize(None)
        seconds = index.asi8 // 10**9
        step = _infer_step(seconds)
        return cls(
            TimeGrid(int(seconds[0]) if len(seconds) else 0, step, len(seconds)),
            tuple(df.columns),
            df.to_numpy(dtype=np.float64, na_value=np.nan),
        )

    def to_pandas(self):
        import pandas as pd

        index = pd.to_datetime(self.grid.timestamps(), unit="s", utc=True)
        return pd.DataFrame(np.array(self.values), index=index, columns=list(self.columns))

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_components(self):
        return len(self.columns)

    def __len__(self):
        return self.grid.length

    def rows(self, start, stop):
        """Rows ``start..stop-1`` as a new array; out-of-range rows are all nan."""
        out = np.full((max(stop - start, 0), self.n_components), np.nan)
        lo, hi = max(start, 0), min(stop, self.grid.length)
        if lo < hi:
            out[lo - start:hi - start] = self.values[lo:hi]
        return out

    def at_time(self, timestamp):
        t = self.grid.index_of(timestamp)
        return self.rows(t, t + 1)[0]

    def column(self, name):
        return self.values[:, self.columns.index(name)]

    def with_values(self, values):
        return SeriesFrame(self.grid, self.columns, values)

    def row_slice(self, start, stop):
        return SeriesFrame(self.grid.slice(start, stop), self.columns, self.values[start:stop])

    def equals(self, other):
        return (
            self.grid == other.grid
            and self.columns == other.columns
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


@dataclass(frozen=True)
class SplitSpec:
    ratio: float = 2 / 3

    def __post_init__(self):
        if not 0 < self.ratio < 1:
            raise ValueError(f"split ratio must lie in (0, 1), got {self.ratio}")


@dataclass(frozen=True, eq=False)
class ObservationMask:
    """Partition of flat window indices into observed and unobserved."""

    observed: np.ndarray
    unobserved: np.ndarray

    @classmethod
    def from_vector(cls, rho):
        seen = ~np.isnan(np.asarray(rho, dtype=np.float64))
        return cls(np.flatnonzero(seen), np.flatnonzero(~seen))

    @classmethod
    def from_bool(cls, seen):
        seen = np.asarray(seen, dtype=bool).ravel()
        return cls(np.flatnonzero(seen), np.flatnonzero(~seen))

    @property
    def size(self):
        return len(self.observed) + len(self.unobserved)

    def as_bool(self):
        seen = np.zeros(self.size, dtype=bool)
        seen[self.observed] = True
        return seen

    def key(self):
        return np.packbits(self.as_bool()).tobytes() + self.size.to_bytes(8, "little")


def split_train_test(frame, spec=SplitSpec()):
    """Split positionally: the first ``round(r*T)`` rows train, the rest test."""
    T = frame.grid.length
    if T < 2:
        raise ValueError("frame too short to split")
    n_train = min(max(int(round(spec.ratio * T)), 1), T - 1)
    return frame.row_slice(0, n_train), frame.row_slice(n_train, T)


def window_concat(frame, t, P, F):
    """Flatten rows ``t-P+1 .. t+F`` component-major into a vector of length M(P+F)."""
    if P < 1 or F < 1:
        raise ValueError("P and F must be at least 1")
    values = frame.values if isinstance(frame, SeriesFrame) else np.asarray(frame, dtype=np.float64)
    T = values.shape[0]
    window = np.full((P + F, values.shape[1]), np.nan)
    lo, hi = max(t - P + 1, 0), min(t + F + 1, T)
    if lo < hi:
        window[lo - (t - P + 1):hi - (t - P + 1)] = values[lo:hi]
    return window.T.ravel()


def deconcat(flat, M, P, F):
    """Inverse of :func:`window_concat`: a ``(P+F) x M`` window."""
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape != (M * (P + F),):
        raise ValueError(f"expected a vector of length {M * (P + F)}, got shape {flat.shape}")
    return flat.reshape(M, P + F).T.copy()


def parse_timestamp(text):
    """ISO-8601 string to integer epoch seconds; naive times are taken as UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    stamp = datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    seconds = stamp.timestamp()
    if seconds != int(seconds):
        raise ValueError(f"timestamp {text!r} has sub-second precision")
    return int(seconds)


def format_timestamp(seconds):
    return datetime.fromtimestamp(int(seconds), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _infer_step(seconds):
    if len(seconds) < 2:
        raise ValueError("cannot infer the time step from fewer than two rows")
    return int(seconds[1] - seconds[0])


def _parse_cell(text):
    text = text.strip()
    if not text or text.lower() == "nan":
        return math.nan
    return float(text)


def read_csv(source, step=None):
    """Parse a CSV of ISO-8601 UTC timestamps followed by numeric columns.

    ``step`` (seconds) is required only when the file has fewer than two rows.
    """
    if isinstance(source, str) and "\n" not in source:
        with open(source, newline="") as fh:
            return read_csv(fh, step=step)
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    header = next(reader, None)
    if not header or len(header) < 2:
        raise FrameFormatError("line 1: header row with a time column and at least one value column required")
    columns = [h.strip() for h in header[1:]]
    stamps, rows = [], []
    for line_no, record in enumerate(reader, start=2):
        if not record or all(not c.strip() for c in record):
            continue
        if len(record) != len(header):
            raise FrameFormatError(
                f"line {line_no}: expected {len(header)} cells, got {len(record)}"
            )
        try:
            stamp = parse_timestamp(record[0])
            row = [_parse_cell(c) for c in record[1:]]
        except ValueError as exc:
            raise FrameFormatError(f"line {line_no}: {exc}") from None
        if stamps:
            gap = stamp - stamps[-1]
            if gap <= 0:
                raise FrameFormatError(f"line {line_no}: timestamps must be strictly increasing")
            if step is None:
                step = gap
            elif gap != step:
                raise FrameFormatError(
                    f"line {line_no}: non-uniform spacing ({gap}s after a {step}s step)"
                )
        stamps.append(stamp)
        rows.append(row)
    if step is None:
        if stamps:
            raise FrameFormatError("cannot infer the time step from a single row")
        step = 1
    origin = stamps[0] if stamps else 0
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(columns))
    try:
        return SeriesFrame(TimeGrid(origin, int(step), len(rows)), tuple(columns), values)
    except ValueError as exc:
        raise FrameFormatError(str(exc)) from None


def format_value(value):
    """Shortest text that parses back to the identical float; empty for nan."""
    return "" if math.isnan(value) else repr(float(value))


def write_csv(frame, target, time_header="time"):
    if isinstance(target, str):
        with open(target, "w", newline="") as fh:
            return write_csv(frame, fh, time_header)
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow([time_header, *frame.columns])
    for stamp, row in zip(frame.grid.timestamps(), frame.values):
        writer.writerow([format_timestamp(stamp), *(format_value(v) for v in row)])

