"""Time-tag streams: the common currency between simulator and correlator.

Timestamps are integer picoseconds (int64). A stream is an immutable pair of
numpy arrays (channel, t) sorted by t, ties broken by channel and then by
input order.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence

import numpy as np

CSV_HEADER = "channel,t_ps"


class Origin(enum.IntEnum):
    """Provenance of a photon or click (simulation only)."""

    SIGNAL = 0
    HERALD = 1
    CLASSICAL = 2
    LEAK = 3
    NOISE = 4


class TimeTag(NamedTuple):
    channel: int
    t: int


class PhotonEvent(NamedTuple):
    wavelength: float
    t: int
    origin: Origin


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _first_unsorted(channel: np.ndarray, t: np.ndarray) -> Optional[int]:
    """Index of the first tag that breaks (t, channel) ordering, else None."""
    if len(t) < 2:
        return None
    dt = np.diff(t)
    bad = (dt < 0) | ((dt == 0) & (np.diff(channel) < 0))
    idx = np.flatnonzero(bad)
    return int(idx[0]) + 1 if len(idx) else None


class EventStream:
    """Sorted, immutable sequence of time tags.

    ``origins`` is optional simulator bookkeeping (one :class:`Origin` code per
    tag); it never reaches the CSV format and is ignored by equality.
    """

    __slots__ = ("channel", "t", "duration", "origins")

    def __init__(self, channel, t, duration: Optional[int] = None, origins=None, *, check: bool = True):
        channel = np.array(channel, dtype=np.int64).reshape(-1)
        t = np.array(t, dtype=np.int64).reshape(-1)
        if channel.shape != t.shape:
            raise ValueError("channel and t must have the same length")
        if origins is not None:
            origins = np.array(origins, dtype=np.int8).reshape(-1)
            if origins.shape != t.shape:
                raise ValueError("origins must match the number of tags")
        if duration is None:
            duration = int(t[-1]) if len(t) else 0
        duration = int(duration)
        if check:
            if len(t) and t[0] < 0:
                raise ValueError(f"negative timestamp {int(t.min())} ps")
            if len(t) and t[-1] > duration:
                raise ValueError(f"tag at {int(t[-1])} ps exceeds duration {duration} ps")
            bad = _first_unsorted(channel, t)
            if bad is not None:
                raise ValueError(
                    f"stream not sorted at index {bad}: "
                    f"({int(channel[bad - 1])},{int(t[bad - 1])}) before ({int(channel[bad])},{int(t[bad])})"
                )
        object.__setattr__(self, "channel", _frozen(channel))
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "duration", duration)
        object.__setattr__(self, "origins", None if origins is None else _frozen(origins))

    def __setattr__(self, name, value):
        raise AttributeError("EventStream is immutable")

    @classmethod
    def empty(cls, duration: int = 0) -> "EventStream":
        return cls([], [], duration)

    @classmethod
    def from_tags(cls, tags: Iterable[Sequence[int]], duration: Optional[int] = None) -> "EventStream":
        tags = list(tags)
        ch = [int(c) for c, _ in tags]
        t = [int(x) for _, x in tags]
        return cls(ch, t, duration)

    @classmethod
    def from_unsorted(cls, channel, t, duration: Optional[int] = None, origins=None) -> "EventStream":
        """Sort arbitrary tags into a stream (stable on ties)."""
        channel = np.asarray(channel, dtype=np.int64)
        t = np.asarray(t, dtype=np.int64)
        order = np.lexsort((channel, t))
        return cls(channel[order], t[order], duration, None if origins is None else np.asarray(origins)[order])

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[TimeTag]:
        for c, x in zip(self.channel.tolist(), self.t.tolist()):
            yield TimeTag(c, x)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.duration == other.duration
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.channel, other.channel)
        )

    def __repr__(self) -> str:
        return f"EventStream(n={len(self)}, duration={self.duration})"

    @property
    def tags(self) -> list[TimeTag]:
        return list(self)

    def select(self, channel: int) -> "EventStream":
        m = self.channel == channel
        return EventStream(
            self.channel[m], self.t[m], self.duration,
            None if self.origins is None else self.origins[m], check=False,
        )


def merge_streams(streams: Sequence[EventStream]) -> EventStream:
    """Merge sorted streams into one, preserving the (t, channel, input order) ordering."""
    if not streams:
        return EventStream.empty()
    for i, s in enumerate(streams):
        bad = _first_unsorted(s.channel, s.t)
        if bad is not None:
            raise ValueError(f"input stream {i} is not sorted at index {bad}")
    channel = np.concatenate([s.channel for s in streams])
    t = np.concatenate([s.t for s in streams])
    with_origins = all(s.origins is not None for s in streams)
    origins = np.concatenate([s.origins for s in streams]) if with_origins else None
    # lexsort is stable, so equal (t, channel) keep input order
    order = np.lexsort((channel, t))
    return EventStream(
        channel[order], t[order], max(s.duration for s in streams),
        None if origins is None else origins[order], check=False,
    )


def shift(stream: EventStream, dt: int) -> EventStream:
    """Delay every tag by ``dt`` ps (negative values advance the stream)."""
    dt = int(dt)
    if len(stream) and int(stream.t[0]) + dt < 0:
        raise ValueError(f"shift by {dt} ps makes timestamp {int(stream.t[0]) + dt} negative")
    return EventStream(
        stream.channel, stream.t + dt, max(stream.duration + dt, 0), stream.origins, check=False,
    )


def write_tags(stream: EventStream, path) -> None:
    lines = [CSV_HEADER]
    lines.extend(f"{c},{x}" for c, x in zip(stream.channel.tolist(), stream.t.tolist()))
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def read_tags(path, duration: Optional[int] = None) -> EventStream:
    """Read a tag CSV written by :func:`write_tags`.

    The file format carries no acquisition duration; pass it explicitly or the
    last timestamp is used.
    """
    text = Path(path).read_bytes().decode("utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}:1: expected header {CSV_HEADER!r}")
    n = len(lines) - 1
    channel = np.empty(n, dtype=np.int64)
    t = np.empty(n, dtype=np.int64)
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        try:
            if len(parts) != 2:
                raise ValueError
            channel[i] = int(parts[0])
            t[i] = int(parts[1])
        except ValueError:
            raise ValueError(f"{path}:{i + 2}: malformed tag line {line!r}") from None
        if t[i] < 0:
            raise ValueError(f"{path}:{i + 2}: negative timestamp")
    bad = _first_unsorted(channel, t)
    if bad is not None:
        raise ValueError(f"{path}:{bad + 2}: timestamps not monotone")
    return EventStream(channel, t, duration, check=duration is not None)


@dataclass(frozen=True, eq=False)
class PhotonBatch:
    """Struct-of-arrays view of many :class:`PhotonEvent` records.

    Monte Carlo stages work on batches; ``PhotonEvent`` is the per-record view.
    """

    wavelength: np.ndarray
    t: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        wl = np.asarray(self.wavelength, dtype=np.float64).reshape(-1)
        t = np.asarray(self.t, dtype=np.int64).reshape(-1)
        org = np.asarray(self.origin, dtype=np.int8).reshape(-1)
        if not (wl.shape == t.shape == org.shape):
            raise ValueError("wavelength, t and origin must have equal length")
        object.__setattr__(self, "wavelength", wl)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "origin", org)

    @classmethod
    def empty(cls) -> "PhotonBatch":
        return cls(np.empty(0), np.empty(0, np.int64), np.empty(0, np.int8))

    @classmethod
    def uniform(cls, wavelength: float, t, origin: Origin) -> "PhotonBatch":
        t = np.asarray(t, dtype=np.int64)
        return cls(np.full(len(t), float(wavelength)), t, np.full(len(t), int(origin), np.int8))

    @classmethod
    def from_events(cls, events: Iterable[PhotonEvent]) -> "PhotonBatch":
        events = list(events)
        if not events:
            return cls.empty()
        wl, t, org = zip(*events)
        return cls(np.array(wl, float), np.array(t, np.int64), np.array([int(o) for o in org], np.int8))

    @classmethod
    def concat(cls, batches: Sequence["PhotonBatch"]) -> "PhotonBatch":
        batches = [b for b in batches if b is not None]
        if not batches:
            return cls.empty()
        return cls(
            np.concatenate([b.wavelength for b in batches]),
            np.concatenate([b.t for b in batches]),
            np.concatenate([b.origin for b in batches]),
        )

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[PhotonEvent]:
        for wl, t, o in zip(self.wavelength.tolist(), self.t.tolist(), self.origin.tolist()):
            yield PhotonEvent(wl, t, Origin(o))

    def take(self, mask_or_index) -> "PhotonBatch":
        return PhotonBatch(self.wavelength[mask_or_index], self.t[mask_or_index], self.origin[mask_or_index])

    def with_times(self, t) -> "PhotonBatch":
        return PhotonBatch(self.wavelength, t, self.origin)

    def sorted(self) -> "PhotonBatch":
        return self.take(np.argsort(self.t, kind="stable"))
