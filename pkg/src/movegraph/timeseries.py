"""Immutable multi-sensor recordings and their CSV representation.

Timestamps are integer milliseconds since the epoch. Every channel keeps its
own sample clock; nothing here resamples channels onto a common grid.

CSV layout (one file per recording)::

    timestamp_ms,channel,v0,v1,v2
    1722500000000,position,47.0,15.0,
    1722500000000,speed,0.0,,
    1722500000020,accel,0.01,-0.02,0.98,

``position`` rows carry lat/lon in v0/v1, vector kinds (``accel``, ``gyro``)
use v0..v2 and every other channel name is a scalar stored in v0.
"""
from __future__ import annotations

import csv
import enum
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple, Optional, Union

import numpy as np
import pandas as pd

from ._io import atomic_write
from .errors import RecordingFormatError

Timestamp = int

CSV_HEADER = ("timestamp_ms", "channel", "v0", "v1", "v2")
_COMPONENTS = {"x": 0, "y": 1, "z": 2, "lat": 0, "lon": 1}


class ChannelKind(str, enum.Enum):
    POSITION = "position"
    SPEED = "speed"
    ACCEL = "accel"
    GYRO = "gyro"
    GENERIC_SCALAR = "generic_scalar"

    @property
    def width(self) -> int:
        """Number of values per sample."""
        if self is ChannelKind.POSITION:
            return 2
        if self in (ChannelKind.ACCEL, ChannelKind.GYRO):
            return 3
        return 1

    @property
    def is_scalar(self) -> bool:
        return self.width == 1

    @classmethod
    def for_name(cls, name: str) -> "ChannelKind":
        """Kind implied by a CSV channel name; unknown names are scalars."""
        try:
            kind = cls(name)
        except ValueError:
            return cls.GENERIC_SCALAR
        return kind


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


class Sample(NamedTuple):
    t: Timestamp
    value: Union[float, tuple, GeoPoint]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Channel:
    """A single sensor stream.

    ``t`` is an int64 array of strictly increasing timestamps. ``values`` has
    shape ``(n,)`` for scalar kinds and ``(n, width)`` otherwise. Both arrays
    are copied and marked read-only on construction.
    """

    kind: ChannelKind
    t: np.ndarray
    values: np.ndarray
    nominal_rate_hz: float | None = None

    def __post_init__(self):
        kind = ChannelKind(self.kind)
        t = np.asarray(self.t)
        if t.ndim != 1:
            raise RecordingFormatError("timestamps must be one-dimensional")
        if t.size and not np.issubdtype(t.dtype, np.integer):
            if not np.all(np.equal(np.mod(t, 1), 0)):
                raise RecordingFormatError("timestamps must be integer milliseconds")
        t = t.astype(np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if kind.is_scalar:
            values = values.reshape(-1)
        elif values.size == 0:
            values = values.reshape(0, kind.width)
        if values.shape[0] != t.shape[0] or (not kind.is_scalar and values.shape[1:] != (kind.width,)):
            raise RecordingFormatError(
                f"{kind.value} channel expects {kind.width} value(s) per sample, "
                f"got shape {values.shape} for {t.size} timestamps"
            )
        if t.size and t[0] < 0:
            raise RecordingFormatError("timestamps must be non-negative")
        steps = np.diff(t)
        if np.any(steps <= 0):
            i = int(np.argmax(steps <= 0))
            what = "duplicate" if steps[i] == 0 else "non-monotonic"
            raise RecordingFormatError(f"{what} timestamp {int(t[i + 1])} after {int(t[i])}")
        if np.isnan(values).any():
            raise RecordingFormatError(f"{kind.value} channel contains NaN")
        if kind is ChannelKind.POSITION and values.size:
            if np.abs(values[:, 0]).max() > 90 or np.abs(values[:, 1]).max() > 180:
                raise RecordingFormatError("latitude/longitude out of range")
        if kind is ChannelKind.SPEED and values.size and values.min() < 0:
            raise RecordingFormatError("speed must be non-negative")

        rate = self.nominal_rate_hz
        if rate is None:
            rate = 1000.0 / float(np.median(steps)) if steps.size else 1.0
        if not rate > 0:
            raise RecordingFormatError("nominal rate must be positive")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "nominal_rate_hz", float(rate))

    def __len__(self) -> int:
        return int(self.t.size)

    def __eq__(self, other):
        if not isinstance(other, Channel):
            return NotImplemented
        return (
            self.kind is other.kind
            and self.nominal_rate_hz == other.nominal_rate_hz
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    @property
    def samples(self) -> tuple[Sample, ...]:
        if self.kind is ChannelKind.POSITION:
            vals = [GeoPoint(float(a), float(b)) for a, b in self.values]
        elif self.kind.is_scalar:
            vals = [float(v) for v in self.values]
        else:
            vals = [tuple(float(x) for x in row) for row in self.values]
        return tuple(Sample(int(t), v) for t, v in zip(self.t, vals))

    @property
    def start(self) -> Timestamp:
        return int(self.t[0])

    @property
    def end(self) -> Timestamp:
        return int(self.t[-1])

    def between(self, start: Timestamp, end: Timestamp) -> "Channel":
        return slice_channel(self, start, end)

    def component(self, index: int) -> "Channel":
        """Scalar view of one column of a vector channel."""
        if self.kind.is_scalar:
            raise RecordingFormatError("channel is already scalar")
        return Channel(ChannelKind.GENERIC_SCALAR, self.t, self.values[:, index], self.nominal_rate_hz)


@dataclass(frozen=True, eq=False)
class Recording:
    id: str
    channels: Mapping[str, Channel] = field(default_factory=dict)

    def __post_init__(self):
        if not self.channels:
            raise RecordingFormatError("a recording needs at least one channel")
        object.__setattr__(self, "channels", MappingProxyType(dict(self.channels)))

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return self.id == other.id and dict(self.channels) == dict(other.channels)

    __hash__ = None

    def __getitem__(self, name: str) -> Channel:
        return self.channels[name]

    def __contains__(self, name: str) -> bool:
        try:
            self.resolve(name)
        except KeyError:
            return False
        return True

    def resolve(self, name: str) -> Channel:
        """Look up a channel, accepting ``accel.z`` style component selectors."""
        if name in self.channels:
            return self.channels[name]
        base, _, comp = name.rpartition(".")
        if base in self.channels and comp in _COMPONENTS:
            ch = self.channels[base]
            if not ch.kind.is_scalar and _COMPONENTS[comp] < ch.kind.width:
                return ch.component(_COMPONENTS[comp])
        raise KeyError(name)

    @property
    def span(self) -> tuple[Timestamp, Timestamp]:
        starts = [c.start for c in self.channels.values() if len(c)]
        ends = [c.end for c in self.channels.values() if len(c)]
        if not starts:
            return (0, 0)
        return (min(starts), max(ends))

    def row_count(self) -> int:
        return sum(len(c) for c in self.channels.values())


def slice_channel(channel: Channel, start: Timestamp, end: Timestamp) -> Channel:
    """Samples with ``start <= t <= end``; the window may be empty."""
    if start > end:
        raise ValueError(f"slice start {start} is after end {end}")
    lo = int(np.searchsorted(channel.t, start, side="left"))
    hi = int(np.searchsorted(channel.t, end, side="right"))
    if lo == 0 and hi == len(channel):
        return channel
    return Channel(channel.kind, channel.t[lo:hi], channel.values[lo:hi], channel.nominal_rate_hz)


def resample_linear(channel: Channel, at: float) -> float:
    if not channel.kind.is_scalar:
        raise ValueError("linear resampling needs a scalar channel")
    if not len(channel) or at < channel.t[0] or at > channel.t[-1]:
        raise ValueError(f"timestamp {at} outside channel span")
    i = int(np.searchsorted(channel.t, at, side="left"))
    if channel.t[i] == at:
        return float(channel.values[i])
    t0, t1 = channel.t[i - 1], channel.t[i]
    v0, v1 = channel.values[i - 1], channel.values[i]
    return float(v0 + (v1 - v0) * (at - t0) / (t1 - t0))


def _parse_row(row: list[str], lineno: int) -> tuple[int, str, list[float]]:
    if len(row) < 3 or len(row) > 5:
        raise RecordingFormatError(f"line {lineno}: expected 3 to 5 fields, got {len(row)}")
    try:
        t = int(row[0])
    except ValueError:
        raise RecordingFormatError(f"line {lineno}: bad timestamp {row[0]!r}") from None
    name = row[1].strip()
    if not name:
        raise RecordingFormatError(f"line {lineno}: empty channel name")
    vals = []
    for cell in row[2:]:
        cell = cell.strip()
        if not cell:
            vals.append(math.nan)
            continue
        try:
            v = float(cell)
        except ValueError:
            raise RecordingFormatError(f"line {lineno}: bad value {cell!r}") from None
        if not math.isfinite(v):
            raise RecordingFormatError(f"line {lineno}: non-finite value {cell!r}")
        vals.append(v)
    vals += [math.nan] * (3 - len(vals))
    return t, name, vals


def load_recording(path: str | os.PathLike, format: str = "csv", recording_id: str | None = None) -> Recording:
    """Parse a recording file.

    Rows of one channel must appear in strictly increasing time order;
    channels may be interleaved arbitrarily. Errors name the offending line.
    """
    if format != "csv":
        raise ValueError(f"unsupported recording format {format!r}")
    path = Path(path)
    channels = _load_fast(path)
    if channels is None:
        channels = _load_checked(path)
    return Recording(recording_id or path.stem, channels)


def _load_fast(path: Path) -> Optional[dict[str, Channel]]:
    """Bulk parse with pandas for well-formed files.

    Returns ``None`` on anything unusual so the checked parser can report
    the offending line.
    """
    raw = path.read_bytes()
    lowered = raw.lower()
    if b"nan" in lowered or b"inf" in lowered:
        return None
    try:
        df = pd.read_csv(
            io.BytesIO(raw),
            dtype={"timestamp_ms": np.int64, "channel": str, "v0": float, "v1": float, "v2": float},
            keep_default_na=False,
            na_values=[""],
            skip_blank_lines=True,
            float_precision="round_trip",
        )
    except (ValueError, OverflowError):
        return None
    if tuple(df.columns) != CSV_HEADER or df.empty:
        return None
    names = df["channel"].to_numpy()
    t_all = df["timestamp_ms"].to_numpy()
    v_all = df[["v0", "v1", "v2"]].to_numpy()
    uniq, first, inverse = np.unique(names, return_index=True, return_inverse=True)
    channels = {}
    for k in np.argsort(first):
        name = uniq[k]
        if not isinstance(name, str) or not name or name != name.strip():
            return None
        rows = inverse == k
        kind = ChannelKind.for_name(name)
        width = kind.width
        t = t_all[rows]
        vals = v_all[rows]
        if not np.isfinite(vals[:, :width]).all() or not np.isnan(vals[:, width:]).all():
            return None
        if (t < 0).any() or (np.diff(t) <= 0).any():
            return None
        if kind is ChannelKind.POSITION and ((np.abs(vals[:, 0]) > 90).any() or (np.abs(vals[:, 1]) > 180).any()):
            return None
        if kind is ChannelKind.SPEED and (vals[:, 0] < 0).any():
            return None
        channels[name] = Channel(kind, t, vals[:, 0].copy() if width == 1 else vals[:, :width].copy())
    return channels


def _load_checked(path: Path) -> dict[str, Channel]:
    times: dict[str, list[int]] = {}
    values: dict[str, list] = {}
    lines: dict[str, int] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise RecordingFormatError(f"line 1: expected header {','.join(CSV_HEADER)}")
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            t, name, vals = _parse_row(row, lineno)
            kind = ChannelKind.for_name(name)
            width = kind.width
            if any(math.isnan(v) for v in vals[:width]):
                raise RecordingFormatError(f"line {lineno}: {name} needs {width} value(s)")
            if any(not math.isnan(v) for v in vals[width:]):
                raise RecordingFormatError(f"line {lineno}: unexpected extra value for {name}")
            ts = times.setdefault(name, [])
            if ts and t <= ts[-1]:
                what = "duplicate" if t == ts[-1] else "non-monotonic"
                raise RecordingFormatError(
                    f"line {lineno}: {what} timestamp {t} in channel {name} (previous {ts[-1]})"
                )
            if t < 0:
                raise RecordingFormatError(f"line {lineno}: negative timestamp")
            if kind is ChannelKind.POSITION and not (abs(vals[0]) <= 90 and abs(vals[1]) <= 180):
                raise RecordingFormatError(f"line {lineno}: position ({vals[0]}, {vals[1]}) out of range")
            if kind is ChannelKind.SPEED and vals[0] < 0:
                raise RecordingFormatError(f"line {lineno}: negative speed")
            ts.append(t)
            values.setdefault(name, []).append(vals[0] if width == 1 else vals[:width])
            lines[name] = lineno
    if not times:
        raise RecordingFormatError(f"{path}: no samples")
    return {
        name: Channel(ChannelKind.for_name(name), np.array(ts, dtype=np.int64), np.array(values[name]))
        for name, ts in times.items()
    }


def _fmt(v: float) -> str:
    return repr(float(v))


def iter_rows(recording: Recording) -> Iterable[tuple]:
    """CSV rows ordered by timestamp, then channel name."""
    per_channel = []
    for name in sorted(recording.channels):
        ch = recording.channels[name]
        vals = ch.values.reshape(len(ch), -1)
        per_channel.append((name, ch.t, vals))
    t_all = np.concatenate([t for _, t, _ in per_channel])
    owner = np.concatenate([np.full(t.size, i) for i, (_, t, _) in enumerate(per_channel)])
    offset = np.concatenate([np.arange(t.size) for _, t, _ in per_channel])
    order = np.lexsort((owner, t_all))
    for k in order:
        name, t, vals = per_channel[owner[k]]
        row = vals[offset[k]]
        cells = [_fmt(v) for v in row] + [""] * (3 - row.size)
        yield (str(int(t_all[k])), name, *cells)


def write_recording(recording: Recording, path: str | os.PathLike) -> None:
    """Write ``recording`` in the CSV schema; the file appears atomically."""
    with atomic_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(iter_rows(recording))
