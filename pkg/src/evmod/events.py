"""Event data model: parsing, frame-aligned partitioning and uniform sampling.

Events are held in numpy structured arrays (``EVENT_DTYPE``) rather than as
lists of objects; :class:`Event` is the scalar view used at API edges.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple, Sequence, Union

import numpy as np

EVENT_DTYPE = np.dtype([("t", "<i8"), ("x", "<i4"), ("y", "<i4"), ("p", "i1")])
CSV_HEADER = "t,x,y,p"

Source = Union[str, bytes, os.PathLike, IO[str], IO[bytes]]


class EventFormatError(ValueError):
    """Raised for malformed or out-of-range event input."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Event(NamedTuple):
    x: int
    y: int
    t: int
    p: int


@dataclass(frozen=True)
class SensorGeometry:
    width: int = 346
    height: int = 260

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"sensor geometry must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class ParseReport:
    n_events: int
    header: bool
    non_monotonic: int  # count of events whose t is below the preceding event's t


@dataclass(frozen=True)
class PartitionReport:
    n_events: int
    dropped: int  # events at or after the last frame timestamp

    @property
    def kept(self) -> int:
        return self.n_events - self.dropped


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def make_events(events: Iterable[Event | tuple[int, int, int, int]]) -> np.ndarray:
    """Build an event array from ``(x, y, t, p)`` tuples."""
    rows = [(int(e[2]), int(e[0]), int(e[1]), int(e[3])) for e in events]
    return np.array(rows, dtype=EVENT_DTYPE) if rows else np.empty(0, dtype=EVENT_DTYPE)


def to_event_list(events: np.ndarray) -> list[Event]:
    return [Event(int(e["x"]), int(e["y"]), int(e["t"]), int(e["p"])) for e in events]


def canonical_order(events: np.ndarray) -> np.ndarray:
    """Indices sorting events by t, then x, y, p."""
    return np.lexsort((events["p"], events["y"], events["x"], events["t"]))


def validate_events(events: np.ndarray, geometry: SensorGeometry) -> None:
    if events.dtype != EVENT_DTYPE:
        raise TypeError(f"expected EVENT_DTYPE array, got {events.dtype}")
    if len(events) == 0:
        return
    bad = np.flatnonzero(
        (events["x"] < 0)
        | (events["x"] >= geometry.width)
        | (events["y"] < 0)
        | (events["y"] >= geometry.height)
        | ((events["p"] != 1) & (events["p"] != -1))
        | (events["t"] < 0)
    )
    if len(bad):
        e = events[bad[0]]
        raise EventFormatError(f"invalid event at index {bad[0]}: {tuple(e.tolist())}")


def _read_text(source: Source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, os.PathLike):
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def parse_events(source: Source, geometry: SensorGeometry = SensorGeometry()) -> tuple[np.ndarray, ParseReport]:
    """Parse ``t,x,y,p`` CSV text into an event array in file order.

    ``source`` may be CSV text, raw bytes, a path-like object or an open file.
    A plain ``str`` is treated as CSV content, not a path.  Out-of-order
    timestamps are accepted and counted in the report.
    """
    text = _read_text(source)
    lines = text.splitlines()
    header = False
    rows: list[tuple[int, int, int, int]] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if not rows and not header and lineno == 1 and line.replace(" ", "") == CSV_HEADER:
            header = True
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise EventFormatError(f"expected 4 fields t,x,y,p, got {len(parts)}", lineno)
        try:
            t, x, y, p = (int(v) for v in parts)
        except ValueError:
            raise EventFormatError(f"non-integer field in {line!r}", lineno) from None
        if t < 0:
            raise EventFormatError(f"negative timestamp {t}", lineno)
        if not 0 <= x < geometry.width:
            raise EventFormatError(f"x={x} out of bounds for width {geometry.width}", lineno)
        if not 0 <= y < geometry.height:
            raise EventFormatError(f"y={y} out of bounds for height {geometry.height}", lineno)
        if p not in (1, -1):
            raise EventFormatError(f"polarity must be 1 or -1, got {p}", lineno)
        rows.append((t, x, y, p))

    events = np.array(rows, dtype=EVENT_DTYPE) if rows else np.empty(0, dtype=EVENT_DTYPE)
    non_monotonic = int(np.count_nonzero(np.diff(events["t"]) < 0)) if len(events) > 1 else 0
    return events, ParseReport(n_events=len(events), header=header, non_monotonic=non_monotonic)


def serialize_events(events: np.ndarray) -> str:
    """Canonical CSV: no header, sorted by (t, x, y, p), ``\\n`` endings."""
    ordered = events[canonical_order(events)]
    buf = io.StringIO()
    for e in ordered.tolist():
        buf.write(f"{e[0]},{e[1]},{e[2]},{e[3]}\n")
    return buf.getvalue()


def parse_frame_timestamps(source: Source) -> np.ndarray:
    """One integer microsecond timestamp per line, strictly increasing."""
    text = _read_text(source)
    values = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            values.append(int(line))
        except ValueError:
            raise EventFormatError(f"frame timestamp is not an integer: {line!r}", lineno) from None
    stamps = np.asarray(values, dtype=np.int64)
    _check_frames(stamps)
    return stamps


def serialize_frame_timestamps(stamps: Sequence[int]) -> str:
    return "".join(f"{int(t)}\n" for t in stamps)


def _check_frames(stamps: np.ndarray) -> None:
    if len(stamps) == 0:
        raise ValueError("frame timestamps are empty")
    if stamps[0] <= 0:
        raise ValueError("first frame timestamp must be positive (windows start at t=0)")
    if np.any(np.diff(stamps) <= 0):
        raise ValueError("frame timestamps must be strictly increasing")


@dataclass(frozen=True)
class EventWindow:
    index: int  # 1-based
    t_start: int
    t_end: int
    events: np.ndarray = field(repr=False)
    geometry: SensorGeometry = SensorGeometry()

    def __post_init__(self) -> None:
        if self.t_start >= self.t_end:
            raise ValueError(f"window {self.index}: t_start must be < t_end")

    def __len__(self) -> int:
        return len(self.events)

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start


def partition(
    events: np.ndarray,
    frame_timestamps: Sequence[int],
    geometry: SensorGeometry = SensorGeometry(),
) -> tuple[list[EventWindow], PartitionReport]:
    """Split events into half-open windows ``[T_{i-1}, T_i)`` with ``T_0 = 0``.

    Events at or after the last frame timestamp are dropped and counted.
    """
    stamps = np.asarray(frame_timestamps, dtype=np.int64)
    _check_frames(stamps)
    events = np.asarray(events)
    if len(events) == 0:
        events = np.empty(0, dtype=EVENT_DTYPE)
    ordered = events[canonical_order(events)]
    bounds = np.concatenate(([0], stamps))
    # searchsorted on sorted t gives window slice edges directly
    cuts = np.searchsorted(ordered["t"], bounds, side="left")
    windows = []
    for i in range(len(stamps)):
        chunk = np.array(ordered[cuts[i] : cuts[i + 1]])
        windows.append(
            EventWindow(
                index=i + 1,
                t_start=int(bounds[i]),
                t_end=int(bounds[i + 1]),
                events=_frozen(chunk),
                geometry=geometry,
            )
        )
    dropped = len(ordered) - int(cuts[-1])
    return windows, PartitionReport(n_events=len(events), dropped=dropped)


@dataclass(frozen=True)
class SampleSet:
    window_index: int
    events: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)  # positions in the source window, ascending
    seed: int
    t_start: int = 0

    def __len__(self) -> int:
        return len(self.events)


def uniform_sample(window: EventWindow, size: int, seed: int) -> SampleSet:
    """Draw ``min(size, Q)`` events uniformly without replacement.

    The draw depends only on ``(Q, size, seed)``; output keeps the window's
    canonical (time) order.
    """
    if size < 1:
        raise ValueError(f"sample size must be >= 1, got {size}")
    q = len(window.events)
    if size >= q:
        idx = np.arange(q)
    else:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(q, size=size, replace=False))
    return SampleSet(
        window_index=window.index,
        events=_frozen(np.array(window.events[idx])),
        indices=_frozen(idx.astype(np.int64)),
        seed=seed,
        t_start=window.t_start,
    )
