"""Time-ordered metric sequences and their index bookkeeping.

Positions are 1-based everywhere. ``original_index`` records where each value
sat in the full stream, so any subsequence (an odd/even half, a binary
segmentation segment) still reports changepoints in raw-stream units.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from perfshift.errors import (
    EmptySeriesError,
    NonBinaryValueError,
    PerfShiftError,
    SeriesTooShortError,
    WindowTooLargeError,
)

BINARY = "binary"
CONTINUOUS = "continuous"
KINDS = (BINARY, CONTINUOUS)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MetricSeries:
    """Observations of one metric for one entity, in time order.

    Parameters
    ----------
    values : ndarray of float
        Observations; binary series hold 0.0/1.0.
    kind : {"binary", "continuous"}
    original_index : ndarray of int
        Strictly increasing 1-based positions in the full stream.
    entity_id : str
    label : str
        Metric name, e.g. ``"whiff"``.
    timestamps : tuple of str, optional
        Opaque per-value tags (game dates); never used by the statistics.
    """

    values: np.ndarray
    kind: str
    original_index: np.ndarray
    entity_id: str = ""
    label: str = ""
    timestamps: Optional[tuple] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        index = np.array(self.original_index, dtype=np.int64)
        if values.ndim != 1 or values.size == 0:
            raise EmptySeriesError("series must hold at least one value")
        if self.kind not in KINDS:
            raise PerfShiftError(f"unknown series kind {self.kind!r}")
        if index.shape != values.shape:
            raise PerfShiftError("original_index and values differ in length")
        if index[0] < 1 or np.any(np.diff(index) <= 0):
            raise PerfShiftError("original_index must be positive and strictly increasing")
        if not np.all(np.isfinite(values)):
            raise PerfShiftError("series values must be finite")
        if self.kind == BINARY and not np.all((values == 0.0) | (values == 1.0)):
            bad = values[(values != 0.0) & (values != 1.0)][0]
            raise NonBinaryValueError(f"binary series holds non-binary value {bad!r}")
        stamps = self.timestamps
        if stamps is not None:
            stamps = tuple(stamps)
            if len(stamps) != values.size:
                raise PerfShiftError("timestamps and values differ in length")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "original_index", _frozen(index))
        object.__setattr__(self, "timestamps", stamps)

    def __len__(self) -> int:
        return int(self.values.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MetricSeries):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.entity_id == other.entity_id
            and self.label == other.label
            and self.timestamps == other.timestamps
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.original_index, other.original_index)
        )

    __hash__ = None

    def segment(self, start: int, end: int) -> "MetricSeries":
        """Return positions ``start..end`` (1-based, inclusive) as a new series."""
        if not 1 <= start <= end <= len(self):
            raise PerfShiftError(f"segment ({start}, {end}) outside 1..{len(self)}")
        return self._take(slice(start - 1, end))

    def position_of(self, original: int) -> int:
        """1-based position of the observation with the given original index."""
        pos = int(np.searchsorted(self.original_index, original))
        if pos >= len(self) or self.original_index[pos] != original:
            raise PerfShiftError(f"original index {original} not in series")
        return pos + 1

    def timestamp_at(self, original: int):
        if self.timestamps is None:
            return None
        return self.timestamps[self.position_of(original) - 1]

    def _take(self, key) -> "MetricSeries":
        stamps = None
        if self.timestamps is not None:
            stamps = tuple(np.asarray(self.timestamps, dtype=object)[key])
        return MetricSeries(
            values=self.values[key].copy(),
            kind=self.kind,
            original_index=self.original_index[key].copy(),
            entity_id=self.entity_id,
            label=self.label,
            timestamps=stamps,
        )


@dataclass(frozen=True)
class SplitPair:
    """Odd-position and even-position halves of one series."""

    odd: MetricSeries
    even: MetricSeries

    def interleave(self) -> MetricSeries:
        """Rebuild the parent series by merging the halves on original_index."""
        index = np.concatenate([self.odd.original_index, self.even.original_index])
        order = np.argsort(index, kind="stable")
        values = np.concatenate([self.odd.values, self.even.values])[order]
        stamps = None
        if self.odd.timestamps is not None and self.even.timestamps is not None:
            merged = list(self.odd.timestamps) + list(self.even.timestamps)
            stamps = tuple(merged[i] for i in order)
        return MetricSeries(
            values=values,
            kind=self.odd.kind,
            original_index=index[order],
            entity_id=self.odd.entity_id,
            label=self.odd.label,
            timestamps=stamps,
        )


def new_metric_series(
    values: Sequence[float],
    kind: str,
    entity_id: str = "",
    label: str = "",
    timestamps: Optional[Sequence] = None,
) -> MetricSeries:
    """Build a series whose original_index runs 1..n.

    Raises
    ------
    EmptySeriesError
        If ``values`` is empty.
    NonBinaryValueError
        If ``kind`` is binary and some value is not 0 or 1.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EmptySeriesError("series must hold at least one value")
    return MetricSeries(
        values=values,
        kind=kind,
        original_index=np.arange(1, values.size + 1),
        entity_id=entity_id,
        label=label,
        timestamps=timestamps,
    )


def split_odd_even(s: MetricSeries) -> SplitPair:
    """Split by position: odd half gets positions 1, 3, 5, ..., even half 2, 4, 6, ...

    Original indices carry over from the parent, so the first observation
    always lands in the odd (candidate-search) half.
    """
    if len(s) < 2:
        raise SeriesTooShortError("need at least 2 observations to split")
    return SplitPair(odd=s._take(slice(0, None, 2)), even=s._take(slice(1, None, 2)))


def rolling_mean(s: MetricSeries, window: int) -> np.ndarray:
    """Trailing-window means; entry ``k`` covers positions ``k-window+1..k``.

    Only full windows are reported, so the output has ``n - window + 1`` entries.
    """
    if window < 1:
        raise PerfShiftError("window must be at least 1")
    n = len(s)
    if window > n:
        raise WindowTooLargeError(f"window {window} exceeds series length {n}")
    out = np.lib.stride_tricks.sliding_window_view(s.values, window).mean(axis=1)
    lo, hi = s.values.min(), s.values.max()
    # summation rounding can leave a constant window a hair outside its range
    return np.clip(out, lo, hi)
