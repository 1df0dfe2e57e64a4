"""Uniformly sampled signals: containers, CSV I/O, resampling and differentiation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SPACING_RTOL = 1e-6


def _frozen_array(values, ndim):
    if not isinstance(values, np.ndarray):
        values = np.asarray(values)
    if np.iscomplexobj(values):
        raise ValueError("complex data is not supported")
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("values must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """Scalar signal sampled at ``t0 + k * dt``.

    ``values`` is stored as a read-only float array.
    """

    t0: float
    dt: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "values", _frozen_array(self.values, 1))

    def __len__(self):
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def t_end(self) -> float:
        return self.t0 + (len(self) - 1) * self.dt

    def segment(self, start: int, stop: int) -> "TimeSeries":
        """Samples ``start:stop`` as a new series with shifted start time."""
        return TimeSeries(self.t0 + start * self.dt, self.dt, self.values[start:stop])

    def window(self, t_start: float, t_stop: float) -> "TimeSeries":
        """Samples with ``t_start <= t < t_stop`` (half-open, in time units)."""
        tol = 1e-9 * self.dt
        start = max(0, math.ceil((t_start - self.t0 - tol) / self.dt))
        stop = min(len(self), math.ceil((t_stop - self.t0 - tol) / self.dt))
        return self.segment(start, stop)


@dataclass(frozen=True)
class Trajectory:
    """Sequence of n-dimensional states sampled at ``t0 + k * dt``."""

    t0: float
    dt: float
    states: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))
        states = np.array(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        object.__setattr__(self, "states", _frozen_array(states, 2))
        if self.states.shape[1] < 1:
            raise ValueError("state dimension must be at least 1")

    def __len__(self):
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def component(self, index: int) -> TimeSeries:
        return TimeSeries(self.t0, self.dt, self.states[:, index])


class CSVFormatError(ValueError):
    """Raised when a CSV file cannot be interpreted as a uniformly sampled signal."""


def _parse_float(text, row, col):
    try:
        value = float(text)
    except ValueError:
        raise CSVFormatError(
            f"non-numeric cell {text!r} at row {row}, column {col!r}"
        ) from None
    if not math.isfinite(value):
        raise CSVFormatError(f"non-finite cell {text!r} at row {row}, column {col!r}")
    return value


def _uniform_step(times, path):
    steps = np.diff(times)
    dt = (times[-1] - times[0]) / (len(times) - 1)
    if dt <= 0:
        raise CSVFormatError(f"{path}: time column must be increasing")
    bad = np.flatnonzero(np.abs(steps - dt) > SPACING_RTOL * dt)
    if bad.size:
        k = int(bad[0])
        raise CSVFormatError(
            f"{path}: non-uniform spacing between rows {k + 2} and {k + 3} "
            f"(step {steps[k]!r}, expected {dt!r})"
        )
    return float(dt)


def _read_columns(path, columns, dt=None, t0=0.0, time_column="t"):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CSVFormatError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]

    def resolve(col):
        if isinstance(col, int) or (isinstance(col, str) and col.isdigit()):
            idx = int(col)
            if not 0 <= idx < len(header):
                raise CSVFormatError(f"{path}: column index {idx} out of range")
            return idx
        if col not in header:
            raise CSVFormatError(f"{path}: no column named {col!r} (have {header})")
        return header.index(col)

    indices = [resolve(c) for c in columns]
    data = np.empty((len(rows), len(indices)))
    for i, row in enumerate(rows):
        for j, idx in enumerate(indices):
            if idx >= len(row):
                raise CSVFormatError(f"{path}: row {i + 2} has no column {header[idx]!r}")
            data[i, j] = _parse_float(row[idx].strip(), i + 2, header[idx])

    if time_column in header and time_column not in [header[i] for i in indices]:
        tcol = header.index(time_column)
        times = np.array(
            [_parse_float(row[tcol].strip(), i + 2, time_column) for i, row in enumerate(rows)]
        )
        if len(times) >= 2:
            dt = _uniform_step(times, path)
        elif dt is None:
            raise CSVFormatError(f"{path}: cannot infer dt from a single row; pass dt")
        t0 = float(times[0]) if len(times) else t0
    elif dt is None:
        raise CSVFormatError(f"{path}: no {time_column!r} column; dt must be supplied")
    return t0, dt, data


def _header(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="") as fh:
        try:
            return [h.strip() for h in next(csv.reader(fh))]
        except StopIteration:
            raise CSVFormatError(f"{path}: empty file") from None


def load_csv(path, column=None, *, dt=None, t0=0.0) -> TimeSeries:
    """Read one column of a headed CSV file as a :class:`TimeSeries`.

    ``column`` is a header name or a zero-based index; by default the first
    column not named ``t``. The sample spacing is inferred from a ``t``
    column when present, otherwise ``dt`` is required.
    """
    if column is None:
        names = [h for h in _header(path) if h != "t"]
        if not names:
            raise CSVFormatError(f"{path}: no value column")
        column = names[0]
    t0, dt, data = _read_columns(path, [column], dt=dt, t0=t0)
    if data.shape[0] == 0:
        raise CSVFormatError(f"{path}: no data rows")
    return TimeSeries(t0, dt, data[:, 0])


def load_trajectory_csv(path, columns=None, *, dt=None, t0=0.0) -> Trajectory:
    """Read several value columns (default: every column except ``t``)."""
    if columns is None:
        columns = [h for h in _header(path) if h != "t"]
    t0, dt, data = _read_columns(path, list(columns), dt=dt, t0=t0)
    return Trajectory(t0, dt, data)


def fmt(value) -> str:
    """Decimal text with 17 significant digits (round-trips IEEE doubles)."""
    return format(float(value), ".17g")


def write_csv(path, series, names=None):
    """Write a TimeSeries, Trajectory, or a list of TimeSeries sharing one grid."""
    if isinstance(series, TimeSeries):
        t0, dt, cols = series.t0, series.dt, series.values[:, None]
        names = names or ["x"]
    elif isinstance(series, Trajectory):
        t0, dt, cols = series.t0, series.dt, series.states
        names = names or [f"x{i + 1}" for i in range(series.dim)]
    else:
        series = list(series)
        first = series[0]
        for s in series[1:]:
            if s.dt != first.dt or s.t0 != first.t0 or len(s) != len(first):
                raise ValueError("series must share t0, dt and length")
        t0, dt = first.t0, first.dt
        cols = np.column_stack([s.values for s in series])
        names = names or [f"x{i + 1}" for i in range(len(series))]
    if len(names) != cols.shape[1]:
        raise ValueError("one name per column required")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *names])
        for k, row in enumerate(cols):
            w.writerow([fmt(t0 + k * dt), *(fmt(v) for v in row)])
    return path


def interpolate_linear(ts: TimeSeries, new_dt: float) -> TimeSeries:
    """Piecewise-linear resampling onto ``t0, t0 + new_dt, ...`` within the original span."""
    if not new_dt > 0:
        raise ValueError("new_dt must be positive")
    m = len(ts)
    if m < 2:
        raise ValueError("need at least two samples to interpolate")
    if new_dt == ts.dt:
        return ts
    span = (m - 1) * ts.dt
    # tolerance so that e.g. 430 * 2 / 0.2 lands on 4300 despite rounding
    n = int(math.floor(span / new_dt + 1e-9)) + 1
    # positions in units of the old grid
    pos = np.arange(n) * (new_dt / ts.dt)
    pos[-1] = min(pos[-1], m - 1)
    idx = np.minimum(np.floor(pos).astype(int), m - 2)
    frac = pos - idx
    x = ts.values
    out = x[idx] * (1.0 - frac) + x[idx + 1] * frac
    exact = frac == 0.0
    out[exact] = x[idx[exact]]
    if abs(pos[-1] - (m - 1)) < 1e-9:
        out[-1] = x[-1]
    return TimeSeries(ts.t0, new_dt, out)


def central_difference(values: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order central difference along axis 0, dropping two samples per edge."""
    x = np.asarray(values, dtype=float)
    if x.shape[0] < 5:
        raise ValueError("need at least 5 samples to differentiate")
    return (-x[4:] + 8.0 * x[3:-1] - 8.0 * x[1:-3] + x[:-4]) / (12.0 * dt)


def differentiate(ts: TimeSeries) -> TimeSeries:
    """Derivative of ``ts`` on its interior; output starts at ``t0 + 2 * dt``."""
    return TimeSeries(ts.t0 + 2 * ts.dt, ts.dt, central_difference(ts.values, ts.dt))
