"""Point-of-interest detection.

A trigger scans one channel and returns the timestamps at which its node
fires. Triggers know nothing about the grammar: spurious firings are expected
and are filtered later by the recognizer.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np
from scipy.signal import find_peaks

from .errors import TriggerError
from .geo import PlanarPoint, SegmentPair, project_local, project_local_array, segment_intersection, side_of_line
from .timeseries import Channel, ChannelKind, GeoPoint, Recording, Timestamp

logger = logging.getLogger(__name__)


class EdgeDirection(str, enum.Enum):
    RISING = "rising"
    FALLING = "falling"
    CHANGE = "change"


class Polarity(str, enum.Enum):
    MAXIMA = "maxima"
    MINIMA = "minima"


class GateDirection(str, enum.Enum):
    ANY = "any"
    LEFT_TO_RIGHT = "left_to_right"
    RIGHT_TO_LEFT = "right_to_left"


@dataclass(frozen=True)
class EdgeTriggerSpec:
    """Fires when ``value >= threshold`` changes between consecutive samples."""

    channel: str
    threshold: float
    direction: EdgeDirection = EdgeDirection.CHANGE
    kind = "edge"

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise TriggerError("edge threshold must be finite")
        object.__setattr__(self, "direction", EdgeDirection(self.direction))


@dataclass(frozen=True)
class PeakTriggerSpec:
    channel: str
    min_prominence: float = 0.0
    min_separation_ms: int = 0
    polarity: Polarity = Polarity.MAXIMA
    kind = "peak"

    def __post_init__(self):
        if not (self.min_prominence >= 0 and self.min_separation_ms >= 0):
            raise TriggerError("peak parameters must be non-negative")
        object.__setattr__(self, "polarity", Polarity(self.polarity))


@dataclass(frozen=True)
class GateTriggerSpec:
    """A virtual gate between two geographic endpoints.

    "Left" is the left-hand side when walking from the first endpoint to the
    second.
    """

    gate: tuple[GeoPoint, GeoPoint]
    direction: GateDirection = GateDirection.ANY
    channel: str = "position"
    kind = "gate"

    def __post_init__(self):
        a, b = self.gate
        if a == b:
            raise TriggerError("gate endpoints must be distinct")
        object.__setattr__(self, "gate", (a, b))
        object.__setattr__(self, "direction", GateDirection(self.direction))

    @property
    def midpoint(self) -> GeoPoint:
        a, b = self.gate
        return GeoPoint((a.lat + b.lat) / 2, (a.lon + b.lon) / 2)


TriggerSpec = Union[EdgeTriggerSpec, PeakTriggerSpec, GateTriggerSpec]


class PointOfInterest(NamedTuple):
    node: str
    t: Timestamp
    source: str


def _require_scalar(channel: Channel) -> None:
    if not channel.kind.is_scalar:
        raise TriggerError(f"trigger needs a scalar channel, got {channel.kind.value}")


def _interpolated_times(t: np.ndarray, x: np.ndarray, idx: np.ndarray, threshold: float) -> np.ndarray:
    # A state change between samples i and i+1 is placed in (t[i], t[i+1]].
    frac = (threshold - x[idx]) / (x[idx + 1] - x[idx])
    t0 = t[idx]
    dt = t[idx + 1] - t0
    out = t0 + np.rint(frac * dt).astype(np.int64)
    return np.clip(out, t0 + 1, t0 + dt)


def detect_edges(channel: Channel, spec: EdgeTriggerSpec) -> list[Timestamp]:
    _require_scalar(channel)
    if len(channel) < 2:
        raise TriggerError("edge detection needs at least two samples")
    x = channel.values
    state = x >= spec.threshold
    before, after = state[:-1], state[1:]
    if spec.direction is EdgeDirection.RISING:
        hit = ~before & after
    elif spec.direction is EdgeDirection.FALLING:
        hit = before & ~after
    else:
        hit = before != after
    idx = np.flatnonzero(hit)
    return _interpolated_times(channel.t, x, idx, spec.threshold).tolist()


def _enforce_separation(t: np.ndarray, heights: np.ndarray, min_sep: int) -> np.ndarray:
    """Keep the highest peak of every cluster closer than ``min_sep`` ms."""
    keep = np.ones(t.size, dtype=bool)
    for i in np.lexsort((t, -heights)):
        if not keep[i]:
            continue
        j = i - 1
        while j >= 0 and t[i] - t[j] < min_sep:
            keep[j] = False
            j -= 1
        j = i + 1
        while j < t.size and t[j] - t[i] < min_sep:
            keep[j] = False
            j += 1
    return keep


def detect_peaks(channel: Channel, spec: PeakTriggerSpec) -> list[Timestamp]:
    """Local extrema by neighbour comparison.

    Plateaus report their middle sample. Prominence follows the usual
    topographic definition (height above the higher of the two bases).
    """
    _require_scalar(channel)
    x = channel.values if spec.polarity is Polarity.MAXIMA else -channel.values
    if x.size < 3:
        return []
    idx, _ = find_peaks(x, prominence=spec.min_prominence if spec.min_prominence > 0 else None)
    if spec.min_separation_ms > 0 and idx.size > 1:
        idx = idx[_enforce_separation(channel.t[idx], x[idx], spec.min_separation_ms)]
    return channel.t[idx].tolist()


def detect_gate_crossings(channel: Channel, spec: GateTriggerSpec) -> list[Timestamp]:
    """Timestamps at which the trajectory crosses the gate.

    Fixes are projected around the gate midpoint, each consecutive pair is
    intersected with the gate, and the crossing time is interpolated along
    the step.
    """
    if channel.kind is not ChannelKind.POSITION:
        raise TriggerError(f"gate trigger needs a position channel, got {channel.kind.value}")
    if len(channel) < 2:
        raise TriggerError("gate detection needs at least two fixes")
    origin = spec.midpoint
    b1 = project_local(origin, spec.gate[0])
    b2 = project_local(origin, spec.gate[1])
    x, y = project_local_array(origin, channel.values[:, 0], channel.values[:, 1])
    side = side_of_line(b1, b2, x, y)
    moved = (x[1:] != x[:-1]) | (y[1:] != y[:-1])
    # Only steps whose endpoints are not strictly on one side can touch the gate.
    candidates = np.flatnonzero((side[:-1] * side[1:] <= 0) & moved)
    t = channel.t
    hits = []
    for i in candidates:
        sp = SegmentPair(PlanarPoint(x[i], y[i]), PlanarPoint(x[i + 1], y[i + 1]), b1, b2)
        hit = segment_intersection(sp)
        if hit is None:
            continue
        swing = side[i] - side[i + 1]
        if spec.direction is GateDirection.LEFT_TO_RIGHT and not swing > 0:
            continue
        if spec.direction is GateDirection.RIGHT_TO_LEFT and not swing < 0:
            continue
        hits.append(int(t[i]) + int(round(hit.u * int(t[i + 1] - t[i]))))
    # A fix lying exactly on the gate is hit by two steps at the same instant.
    return sorted(set(hits))


def evaluate(spec: TriggerSpec, channel: Channel) -> list[Timestamp]:
    if isinstance(spec, EdgeTriggerSpec):
        return detect_edges(channel, spec)
    if isinstance(spec, PeakTriggerSpec):
        return detect_peaks(channel, spec)
    if isinstance(spec, GateTriggerSpec):
        return detect_gate_crossings(channel, spec)
    raise TriggerError(f"unsupported trigger spec {spec!r}")


def run_triggers(recording: Recording, bindings: Iterable[tuple[str, TriggerSpec]]) -> list[PointOfInterest]:
    """Evaluate every binding and merge the firings into one POI stream.

    The stream is ordered by time; simultaneous firings are ordered by node id.
    """
    pois: list[PointOfInterest] = []
    for node, spec in bindings:
        try:
            channel = recording.resolve(spec.channel)
        except KeyError:
            raise TriggerError(f"unknown channel {spec.channel!r} (node {node})") from None
        times = evaluate(spec, channel)
        logger.debug("node %s fired %d times on %s", node, len(times), spec.channel)
        source = f"{node}:{spec.kind}"
        pois.extend(PointOfInterest(node, t, source) for t in times)
    pois.sort(key=lambda p: (p.t, p.node, p.source))
    return pois


def poi_counts(pois: Sequence[PointOfInterest]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for p in pois:
        counts[p.node] = counts.get(p.node, 0) + 1
    return dict(sorted(counts.items()))
