"""Time-series frames, min-max scaling, Haar denoising, windowing and resampling."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import DTYPE

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_SPLITS = (0.7, 0.1, 0.2)
# hours ahead for one-, two- and three-step forecasts
DEFAULT_STEP_HOURS = (1, 6, 12)


class CsvFormatError(ValueError):
    pass


@dataclass
class TimeSeriesFrame:
    """Timestamped channels plus one target column, all of equal length."""

    timestamps: np.ndarray
    channels: dict[str, np.ndarray]
    target: np.ndarray
    target_name: str = "target"

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        self.channels = {k: np.asarray(v, dtype=DTYPE) for k, v in self.channels.items()}
        self.target = np.asarray(self.target, dtype=DTYPE)
        n = len(self.timestamps)
        if len(self.target) != n or any(len(v) != n for v in self.channels.values()):
            raise ValueError("all columns must have the same length as the timestamps")
        if n > 1 and not np.all(np.diff(self.timestamps.astype(np.int64)) > 0):
            raise ValueError("timestamps must be strictly increasing")
        for name, col in [*self.channels.items(), (self.target_name, self.target)]:
            if not np.all(np.isfinite(col)):
                raise ValueError(f"column {name!r} has missing or non-finite values")

    def __len__(self):
        return len(self.timestamps)

    @property
    def channel_names(self) -> list[str]:
        return list(self.channels)

    def columns(self) -> np.ndarray:
        """``(n, channels + 1)`` matrix with the target as the last column."""
        return np.column_stack([*self.channels.values(), self.target]) if len(self) else np.empty((0, len(self.channels) + 1))

    def slice(self, start: int, stop: int) -> "TimeSeriesFrame":
        return TimeSeriesFrame(self.timestamps[start:stop],
                               {k: v[start:stop] for k, v in self.channels.items()},
                               self.target[start:stop], self.target_name)

    def with_columns(self, matrix: np.ndarray) -> "TimeSeriesFrame":
        names = self.channel_names
        return TimeSeriesFrame(self.timestamps, {k: matrix[:, j] for j, k in enumerate(names)},
                               matrix[:, -1], self.target_name)


def read_frame_csv(path, target: str | None = None) -> TimeSeriesFrame:
    """Load a frame: first column ISO-8601 timestamps, then numeric columns.

    ``target`` names the target column (default: the last column). Any
    unparseable row raises :class:`CsvFormatError` citing its line number.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if len(header) < 2:
            raise CsvFormatError(f"{path}:1: need a timestamp column and at least one value column")
        names = [h.strip() for h in header[1:]]
        target = names[-1] if target is None else target
        if target not in names:
            raise CsvFormatError(f"{path}:1: target column {target!r} not in header")
        stamps, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                stamps.append(np.datetime64(row[0].strip(), "s"))
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: {exc}") from None
            if not all(np.isfinite(values)):
                raise CsvFormatError(f"{path}:{lineno}: missing or non-finite value")
            rows.append(values)
    data = np.array(rows, dtype=DTYPE).reshape(len(rows), len(names))
    ts = np.array(stamps, dtype="datetime64[s]")
    if len(ts) > 1:
        bad = np.nonzero(np.diff(ts.astype(np.int64)) <= 0)[0]
        if len(bad):
            raise CsvFormatError(f"{path}:{bad[0] + 3}: timestamps must be strictly increasing")
    channels = {n: data[:, j] for j, n in enumerate(names) if n != target}
    return TimeSeriesFrame(ts, channels, data[:, names.index(target)], target)


def write_frame_csv(frame: TimeSeriesFrame, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", *frame.channel_names, frame.target_name])
        cols = frame.columns()
        for ts, row in zip(frame.timestamps, cols):
            w.writerow([str(ts), *(repr(float(v)) for v in row)])


@dataclass
class NormalizerState:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if np.any(self.maxs < self.mins):
            raise ValueError("max must be >= min for every column")

    @property
    def spans(self):
        span = self.maxs - self.mins
        return np.where(span > 0, span, 1.0)

    def apply(self, matrix):
        out = (matrix - self.mins) / self.spans
        return np.where(self.maxs > self.mins, out, 0.0)

    def invert(self, matrix):
        return matrix * self.spans + self.mins

    def invert_target(self, values):
        return values * self.spans[-1] + self.mins[-1]


def fit_apply_minmax(frame: TimeSeriesFrame, train_fraction: float = 1.0):
    """Scale every column (target included) by statistics of the leading rows.

    Constant columns map to zeros with a warning.
    """
    if not 0 < train_fraction <= 1:
        raise ValueError("train_fraction must lie in (0, 1]")
    cols = frame.columns()
    n_fit = max(1, int(round(train_fraction * len(frame))))
    head = cols[:n_fit]
    state = NormalizerState(head.min(axis=0), head.max(axis=0))
    names = [*frame.channel_names, frame.target_name]
    for j in np.nonzero(state.maxs == state.mins)[0]:
        warnings.warn(f"column {names[j]!r} is constant on the fit rows; mapped to zeros", stacklevel=2)
    return frame.with_columns(state.apply(cols)), state


# Haar wavelet ------------------------------------------------------------

_SQRT2 = np.sqrt(2.0)


def haar_dwt(x, levels: int = 1):
    """Orthonormal Haar decomposition along the last axis.

    Length must be a multiple of ``2**levels``. Returns the coarsest
    approximation and the detail coefficients, finest scale first.
    """
    x = np.asarray(x, dtype=DTYPE)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if x.shape[-1] % (2 ** levels):
        raise ValueError("length must be a multiple of 2**levels")
    details = []
    approx = x
    for _ in range(levels):
        even, odd = approx[..., 0::2], approx[..., 1::2]
        details.append((even - odd) / _SQRT2)
        approx = (even + odd) / _SQRT2
    return approx, details


def haar_idwt(approx, details):
    approx = np.asarray(approx, dtype=DTYPE)
    for d in reversed(details):
        out = np.empty(approx.shape[:-1] + (2 * approx.shape[-1],))
        out[..., 0::2] = (approx + d) / _SQRT2
        out[..., 1::2] = (approx - d) / _SQRT2
        approx = out
    return approx


def wavelet_denoise(series, levels: int = 1, axis: int = -1) -> np.ndarray:
    """Zero the Haar detail coefficients of the finest ``levels`` scales.

    Works along ``axis`` of an array of any rank. Lengths that are not a
    multiple of ``2**levels`` are padded at the end by repeating the last
    sample, and the padding is trimmed after reconstruction. Edge padding
    keeps a constant tail block constant, so the last partial block is as
    stable under repeated denoising as the full ones.
    """
    x = np.moveaxis(np.asarray(series, dtype=DTYPE), axis, -1)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    n = x.shape[-1]
    block = 2 ** levels
    if n < block:
        raise ValueError(f"series of length {n} too short for {levels} Haar levels")
    pad = (-n) % block
    if pad:
        widths = [(0, 0)] * (x.ndim - 1) + [(0, pad)]
        x = np.pad(x, widths, mode="edge")
    # Zeroing every detail band equals replacing each block of 2**levels
    # samples by its mean. Pairwise averaging computes that mean while keeping
    # constant blocks bit-exact, so a second pass changes nothing.
    approx = x
    for _ in range(levels):
        approx = (approx[..., 0::2] + approx[..., 1::2]) / 2.0
    out = np.repeat(approx, block, axis=-1)[..., :n]
    return np.moveaxis(out, -1, axis)


# windowing ---------------------------------------------------------------

@dataclass
class WindowedDataset:
    """Supervised (window, future target) pairs.

    ``X`` has shape ``(samples, window, channels + 1)``; the past target is
    the last feature. ``input_end`` is the timestamp of each window's last
    row and ``target_time`` that of the predicted point.
    """

    X: np.ndarray
    y: np.ndarray
    split: np.ndarray
    input_end: np.ndarray
    target_time: np.ndarray
    window: int
    lead: int
    feature_names: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.y)

    def part(self, name: str):
        mask = self.split == name
        return self.X[mask], self.y[mask]

    def mask(self, name: str):
        return self.split == name


def lead_hours(horizon_steps: int, step_hours=DEFAULT_STEP_HOURS) -> int:
    if horizon_steps not in (1, 2, 3):
        raise ValueError("horizon_steps must be 1, 2 or 3")
    return int(step_hours[horizon_steps - 1])


def split_bounds(n: int, splits=DEFAULT_SPLITS) -> list[tuple[int, int]]:
    """Chronological row ranges for train/val/test."""
    fractions = np.asarray(splits, dtype=DTYPE)
    if len(fractions) != 3 or np.any(fractions < 0) or not np.isclose(fractions.sum(), 1.0):
        raise ValueError("splits must be three non-negative fractions summing to 1")
    cuts = np.round(np.cumsum(fractions) * n).astype(int)
    cuts[-1] = n
    starts = [0, cuts[0], cuts[1]]
    return [(int(a), int(b)) for a, b in zip(starts, cuts)]


def _window_segment(cols, stamps, window, lead):
    n = len(cols)
    count = n - window - lead + 1
    if count <= 0:
        return None
    view = np.lib.stride_tricks.sliding_window_view(cols, window, axis=0)  # (n-window+1, D, window)
    X = np.ascontiguousarray(view[:count].transpose(0, 2, 1))
    y = cols[window - 1 + lead: window - 1 + lead + count, -1].copy()
    end = stamps[window - 1: window - 1 + count]
    tgt = stamps[window - 1 + lead: window - 1 + lead + count]
    return X, y, end, tgt


def make_windows(frame: TimeSeriesFrame, window: int = 15, horizon_steps: int = 1,
                 step_hours=DEFAULT_STEP_HOURS, splits=DEFAULT_SPLITS) -> WindowedDataset:
    """Build windows of all channels plus past target, predicting one future target.

    With ``splits`` the rows are first cut chronologically into train/val/test
    and each segment is windowed on its own, so no window straddles a split
    boundary. With ``splits=None`` the whole frame is one ``"train"`` segment.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    lead = lead_hours(horizon_steps, step_hours)
    cols = frame.columns()
    n = len(frame)
    if n < window + lead:
        raise ValueError(f"series of length {n} shorter than window + lead = {window + lead}")
    bounds = [(0, n)] if splits is None else split_bounds(n, splits)
    names = SPLIT_NAMES[:1] if splits is None else SPLIT_NAMES
    parts = []
    for name, (a, b) in zip(names, bounds):
        seg = _window_segment(cols[a:b], frame.timestamps[a:b], window, lead)
        if seg is not None:
            parts.append((name, seg))
    if not parts:
        raise ValueError("no split segment is long enough for one window")
    D = cols.shape[1]
    X = np.concatenate([p[1][0] for p in parts]) if parts else np.empty((0, window, D))
    return WindowedDataset(
        X=X,
        y=np.concatenate([p[1][1] for p in parts]),
        split=np.concatenate([np.full(len(p[1][1]), p[0]) for p in parts]),
        input_end=np.concatenate([p[1][2] for p in parts]),
        target_time=np.concatenate([p[1][3] for p in parts]),
        window=window,
        lead=lead,
        feature_names=[*frame.channel_names, frame.target_name],
    )


# resampling --------------------------------------------------------------

def resample_yield(env_hourly: TimeSeriesFrame, yield_weekly: TimeSeriesFrame) -> TimeSeriesFrame:
    """Daily frame: environmental channels averaged per day, yield interpolated.

    The daily grid runs from the day of the first to the day of the last
    yield measurement. Every day on the grid must have environmental data.
    """
    if len(yield_weekly) < 2:
        raise ValueError("need at least two yield measurements to interpolate")
    env_days = env_hourly.timestamps.astype("datetime64[D]")
    y_days = yield_weekly.timestamps.astype("datetime64[D]")
    if y_days[0] < env_days[0] or y_days[-1] > env_days[-1]:
        raise ValueError("yield timestamps must fall within the environmental series")
    grid = np.arange(y_days[0], y_days[-1] + np.timedelta64(1, "D"), dtype="datetime64[D]")
    day_index = (env_days - grid[0]).astype(np.int64)
    in_grid = (day_index >= 0) & (day_index < len(grid))
    counts = np.bincount(day_index[in_grid], minlength=len(grid))
    if np.any(counts == 0):
        missing = grid[np.nonzero(counts == 0)[0][0]]
        raise ValueError(f"no environmental data on {missing}")
    channels = {}
    for name, col in env_hourly.channels.items():
        sums = np.bincount(day_index[in_grid], weights=col[in_grid], minlength=len(grid))
        channels[name] = sums / counts
    channels[env_hourly.target_name] = (
        np.bincount(day_index[in_grid], weights=env_hourly.target[in_grid], minlength=len(grid)) / counts)
    x_known = (y_days - grid[0]).astype(np.int64).astype(DTYPE)
    target = np.interp(np.arange(len(grid), dtype=DTYPE), x_known, yield_weekly.target)
    return TimeSeriesFrame(grid.astype("datetime64[s]"), channels, target, yield_weekly.target_name)
