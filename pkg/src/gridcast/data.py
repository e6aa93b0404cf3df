"""Dataset ingestion, chronological splitting, standardization, and windowing.

CSV files are read as [timesteps x variates] matrices in row-major time order.
Splits are contiguous and chronological; standardization statistics come from
the training split only and are applied unchanged to validation and test.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from gridcast.errors import DataError

ColumnKey = Union[int, str]


@dataclass(frozen=True)
class TimeSeriesDataset:
    """An immutable multivariate series: rows are time steps, columns variates.

    ``timesteps == 0`` only ever arises from a degenerate split requested
    explicitly; ingestion always rejects empty inputs.
    """

    name: str
    values: np.ndarray
    frequency: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DataError(f"dataset values must be 2-d, got shape {v.shape}")
        if v.shape[1] < 1:
            raise DataError("dataset needs at least one variate column")
        if not np.isfinite(v).all():
            raise DataError(f"dataset {self.name!r} contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def timesteps(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    """Integer train/val/test ratio, e.g. 7:1:2 or 6:2:2."""

    train: int
    val: int
    test: int

    def __post_init__(self):
        if min(self.train, self.val, self.test) < 0:
            raise DataError(f"split ratios must be non-negative, got {self}")
        if self.train <= 0:
            raise DataError(f"train ratio must be positive, got {self}")

    @classmethod
    def parse(cls, text: str) -> "SplitSpec":
        parts = text.split(":")
        if len(parts) != 3:
            raise DataError(f"split spec must look like 'a:b:c', got {text!r}")
        try:
            a, b, c = (int(p) for p in parts)
        except ValueError:
            raise DataError(f"split spec must hold integers, got {text!r}") from None
        return cls(a, b, c)

    def __str__(self) -> str:
        return f"{self.train}:{self.val}:{self.test}"


@dataclass
class WindowBatch:
    """A batch of (lookback, horizon) pairs, target immediately after input."""

    inputs: np.ndarray  # [batch, T, N]
    targets: np.ndarray  # [batch, F, N]
    variate_index: Optional[np.ndarray] = None


@dataclass(frozen=True)
class VariateStats:
    """Per-variate mean and standard deviation from the training split."""

    mean: np.ndarray  # [N]
    std: np.ndarray  # [N], strictly positive (degenerate columns clamped to 1)


def _parse_cell(cell: str, line_no: int, column: str) -> float:
    text = cell.strip()
    if text == "":
        raise DataError(f"blank cell at line {line_no}, column {column!r}")
    try:
        value = float(text)
    except ValueError:
        raise DataError(
            f"cell at line {line_no}, column {column!r} is not a number: {cell!r}"
        ) from None
    if not math.isfinite(value):
        raise DataError(
            f"cell at line {line_no}, column {column!r} is not finite: {cell!r}"
        )
    return value


def _is_number(cell: str) -> bool:
    try:
        float(cell.strip())
    except ValueError:
        return False
    return cell.strip() != ""


def _resolve_columns(keys: Sequence[ColumnKey], names: list) -> list:
    out = []
    for key in keys:
        if isinstance(key, int):
            if not -len(names) <= key < len(names):
                raise DataError(f"column index {key} out of range for {len(names)} columns")
            out.append(key % len(names))
        else:
            if key not in names:
                raise DataError(f"column {key!r} not found; columns are {names}")
            out.append(names.index(key))
    return out


def load_csv(
    path,
    value_columns: Optional[Sequence[ColumnKey]] = None,
    drop_columns: Optional[Sequence[ColumnKey]] = None,
    name: Optional[str] = None,
    frequency: str = "",
) -> TimeSeriesDataset:
    """Read a CSV into a dataset; rows are time order, columns variate order.

    A header row is auto-detected (any non-numeric first row). Columns can be
    selected by ``value_columns`` or removed by ``drop_columns`` (names or
    indices), which is how a leading date column is discarded.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r]  # tolerate trailing blank lines
    if not rows:
        raise DataError(f"{path} is empty")

    has_header = not all(_is_number(c) for c in rows[0])
    if has_header:
        names = [c.strip() for c in rows[0]]
        first_data_line = 2
        data_rows = rows[1:]
    else:
        names = [f"c{i}" for i in range(len(rows[0]))]
        first_data_line = 1
        data_rows = rows
    if not data_rows:
        raise DataError(f"{path} has a header but no data rows")

    if value_columns is not None:
        keep = _resolve_columns(value_columns, names)
    else:
        keep = list(range(len(names)))
        if drop_columns:
            dropped = set(_resolve_columns(drop_columns, names))
            keep = [i for i in keep if i not in dropped]
    if not keep:
        raise DataError(f"{path}: no value columns remain after selection")

    width = len(names)
    values = np.empty((len(data_rows), len(keep)), dtype=np.float64)
    for r, row in enumerate(data_rows):
        line_no = first_data_line + r
        if len(row) != width:
            raise DataError(
                f"ragged row at line {line_no}: expected {width} cells, found {len(row)}"
            )
        for j, col in enumerate(keep):
            values[r, j] = _parse_cell(row[col], line_no, names[col])

    from os.path import basename

    return TimeSeriesDataset(
        name=name if name is not None else basename(str(path)),
        values=values,
        frequency=frequency,
    )


def chronological_split(
    ds: TimeSeriesDataset, spec: SplitSpec, allow_empty: bool = False
) -> tuple:
    """Cut the series into contiguous train/val/test blocks, in time order.

    Boundaries fall at floor(cumulative ratio fraction x timesteps), so the
    three blocks concatenate back to the source exactly.
    """
    if min(spec.val, spec.test) == 0 and not allow_empty:
        raise DataError(f"split ratio {spec} has an empty part; pass allow_empty to permit")
    total = spec.train + spec.val + spec.test
    ts = ds.timesteps
    b1 = (ts * spec.train) // total
    b2 = (ts * (spec.train + spec.val)) // total
    parts = []
    for tag, lo, hi, ratio in (
        ("train", 0, b1, spec.train),
        ("val", b1, b2, spec.val),
        ("test", b2, ts, spec.test),
    ):
        if hi - lo == 0:
            if ratio > 0:
                raise DataError(
                    f"{tag} split of {ds.name!r} is empty ({ts} steps at {spec})"
                )
            warnings.warn(f"{tag} split of {ds.name!r} is empty by request ({spec})")
        parts.append(
            TimeSeriesDataset(f"{ds.name}:{tag}", ds.values[lo:hi], ds.frequency)
        )
    return tuple(parts)


def standardize(
    train: TimeSeriesDataset, val: TimeSeriesDataset, test: TimeSeriesDataset
) -> tuple:
    """Zero-mean/unit-std all three splits using train-split statistics only.

    Uses population (biased) standard deviation. Constant training columns get
    std clamped to 1 with a warning rather than an error.
    """
    mean = train.values.mean(axis=0)
    std = train.values.std(axis=0)
    degenerate = std == 0.0
    if degenerate.any():
        warnings.warn(
            f"variates {np.flatnonzero(degenerate).tolist()} are constant in the "
            "training split; std clamped to 1"
        )
        std = np.where(degenerate, 1.0, std)
    stats = VariateStats(mean=mean, std=std)
    out = tuple(
        TimeSeriesDataset(ds.name, (ds.values - mean) / std, ds.frequency)
        if ds.timesteps
        else ds
        for ds in (train, val, test)
    )
    return out + (stats,)


def destandardize(values: np.ndarray, stats: VariateStats) -> np.ndarray:
    return values * stats.std + stats.mean


def save_stats(stats: VariateStats, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variate_index", "mean", "std"])
        for i, (m, s) in enumerate(zip(stats.mean, stats.std)):
            writer.writerow([i, repr(float(m)), repr(float(s))])


def load_stats(path) -> VariateStats:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    mean = np.array([float(r[1]) for r in body])
    std = np.array([float(r[2]) for r in body])
    return VariateStats(mean=mean, std=std)


def n_windows(timesteps: int, T: int, F: int, stride: int = 1) -> int:
    """Number of stride-spaced (lookback, horizon) windows that fit."""
    if timesteps < T + F:
        raise DataError(
            f"split too short: {timesteps} steps cannot host lookback {T} + horizon {F}"
        )
    return (timesteps - T - F) // stride + 1


def make_windows(
    ds: TimeSeriesDataset,
    T: int,
    F: int,
    stride: int = 1,
    batch_size: int = 1,
    shuffle: bool = False,
    rng: Optional[np.random.Generator] = None,
    variate_index: Optional[np.ndarray] = None,
) -> Iterator[WindowBatch]:
    """Yield batches of contiguous (input, target) windows.

    Window i covers rows [i*stride, i*stride+T) with its target immediately
    following. Shuffling permutes window start order and requires a seeded rng.
    """
    count = n_windows(ds.timesteps, T, F, stride)
    starts = np.arange(count, dtype=np.int64) * stride
    if shuffle:
        if rng is None:
            raise DataError("shuffle=True needs an explicit rng for reproducibility")
        starts = rng.permutation(starts)
    cols = slice(None) if variate_index is None else np.asarray(variate_index)
    for lo in range(0, count, batch_size):
        batch_starts = starts[lo : lo + batch_size]
        in_idx = batch_starts[:, None] + np.arange(T)
        out_idx = batch_starts[:, None] + T + np.arange(F)
        yield WindowBatch(
            inputs=ds.values[in_idx][:, :, cols],
            targets=ds.values[out_idx][:, :, cols],
            variate_index=None if variate_index is None else np.asarray(variate_index),
        )


def borrow_prefix(
    train: TimeSeriesDataset,
    val: TimeSeriesDataset,
    test: TimeSeriesDataset,
    T: int,
) -> tuple:
    """Prefix val/test with the last T steps of the preceding split.

    Off by default in the evaluation protocol; turning it on lets the first
    test window start at the true split boundary instead of T steps after it,
    adding T extra windows per split.
    """
    before_test = np.concatenate([train.values, val.values])
    val2 = TimeSeriesDataset(
        val.name, np.concatenate([train.values[-T:], val.values]), val.frequency
    )
    test2 = TimeSeriesDataset(
        test.name, np.concatenate([before_test[-T:], test.values]), test.frequency
    )
    return train, val2, test2


def synthetic_sines(
    timesteps: int,
    n_variates: int = 4,
    period: float = 48.0,
    noise: float = 0.05,
    seed: int = 0,
    name: str = "synthetic-sines",
) -> TimeSeriesDataset:
    """Phase-shifted noisy sinusoids sharing one period across variates."""
    rng = np.random.default_rng(seed)
    t = np.arange(timesteps, dtype=np.float64)[:, None]
    phase = 2.0 * np.pi * np.arange(n_variates) / n_variates
    values = np.sin(2.0 * np.pi * t / period + phase)
    values += noise * rng.standard_normal(values.shape)
    return TimeSeriesDataset(name=name, values=values, frequency="synthetic")


def synthetic_long_memory(
    timesteps: int,
    n_variates: int = 2,
    period: int = 200,
    knots: int = 8,
    noise: float = 0.05,
    seed: int = 0,
    name: str = "synthetic-long-memory",
) -> TimeSeriesDataset:
    """Periodic random step pattern whose cycle exceeds short lookbacks.

    Each variate repeats a fixed pattern of ``knots`` random +-1 levels,
    cosine-smoothed, with period ``period``. A lookback longer than one period
    can copy the previous cycle; a shorter one faces ambiguous level patterns.
    """
    if period % knots != 0:
        raise DataError(f"period {period} must be divisible by knots {knots}")
    seg = period // knots
    rng = np.random.default_rng(seed)
    values = np.empty((timesteps, n_variates))
    u = (1.0 - np.cos(np.pi * np.arange(seg) / seg)) / 2.0  # 0 -> 1 ramp
    for n in range(n_variates):
        levels = rng.choice([-1.0, 1.0], size=knots)
        if np.all(levels == levels[0]):
            levels[rng.integers(knots)] *= -1.0  # keep the pattern non-constant
        nxt = np.roll(levels, -1)
        pattern = (levels[:, None] + (nxt - levels)[:, None] * u).ravel()
        reps = -(-timesteps // period)
        values[:, n] = np.tile(pattern, reps)[:timesteps]
    values += noise * rng.standard_normal(values.shape)
    return TimeSeriesDataset(name=name, values=values, frequency="synthetic")
