"""Per-segment performance indicators for a recognized solution."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._io import atomic_write
from .recognizer import TotalSolution
from .timeseries import Channel, Recording

SEGMENT_HEADER = (
    "lap", "edge_from", "edge_to", "duration_s", "mean_speed_mps",
    "max_accel_x_g", "max_accel_y_g", "max_accel_z_g",
)
RANGE_HEADER = ("dataset", "lap", "range_time_s", "shooting_time_s", "shooting_z_accel_g")


@dataclass(frozen=True)
class SegmentMetrics:
    edge: tuple[str, str]
    lap_index: int
    start_t: int
    end_t: int
    mean_speed_mps: Optional[float] = None
    mean_accel_g: Optional[tuple[float, float, float]] = None
    max_accel_g: Optional[tuple[float, float, float]] = None

    @property
    def duration_s(self) -> float:
        return (self.end_t - self.start_t) / 1000.0

    def row(self) -> list:
        mx = self.max_accel_g or (None, None, None)
        return [self.lap_index, self.edge[0], self.edge[1], self.duration_s, self.mean_speed_mps, *mx]


@dataclass(frozen=True)
class RangeReport:
    lap_index: int
    range_time_s: float
    shooting_time_s: float
    shooting_z_accel_g: Optional[float]

    def row(self, dataset: str) -> list:
        return [dataset, self.lap_index, self.range_time_s, self.shooting_time_s, self.shooting_z_accel_g]


def _window(channel: Channel, start: int, end: int) -> np.ndarray:
    lo = np.searchsorted(channel.t, start, side="left")
    hi = np.searchsorted(channel.t, end, side="right")
    return channel.values[lo:hi]


def _channel(recording: Recording, name: Optional[str]) -> Optional[Channel]:
    if name is None:
        return None
    try:
        return recording.resolve(name)
    except KeyError:
        return None


def _part_laps(solution: TotalSolution, lap_node: str) -> list[list[int]]:
    """Lap index of every step, per part. Passing the lap-boundary node starts the next lap."""
    lap = 1
    out = []
    for part in solution.parts:
        laps = []
        for step in part.steps:
            if step.node == lap_node:
                lap += 1
            laps.append(lap)
        out.append(laps)
    return out


def segment_metrics(
    solution: TotalSolution,
    recording: Recording,
    lap_node: str = "RL",
    speed_channel: Optional[str] = "speed",
    accel_channel: Optional[str] = "accel",
) -> list[SegmentMetrics]:
    """One entry per consecutive step pair inside each part.

    Aggregates use the samples with ``start_t <= t <= end_t``; a missing
    channel or an empty window leaves the aggregate as ``None``.
    """
    speed = _channel(recording, speed_channel)
    accel = _channel(recording, accel_channel)
    out = []
    for part, laps in zip(solution.parts, _part_laps(solution, lap_node)):
        for k, (a, b) in enumerate(zip(part.steps, part.steps[1:])):
            mean_speed = mean_acc = max_acc = None
            if speed is not None and speed.kind.is_scalar:
                w = _window(speed, a.t, b.t)
                if w.size:
                    mean_speed = float(np.mean(w))
            if accel is not None:
                w = _window(accel, a.t, b.t)
                if w.size:
                    w = w.reshape(len(w), -1)
                    mean_acc = tuple(float(v) for v in w.mean(axis=0))
                    max_acc = tuple(float(v) for v in w.max(axis=0))
            out.append(SegmentMetrics((a.node, b.node), laps[k], a.t, b.t, mean_speed, mean_acc, max_acc))
    return out


def range_report(
    solution: TotalSolution,
    recording: Recording,
    lap_node: str = "RL",
    accel_channel: Optional[str] = "accel",
    range_nodes: tuple[str, str] = ("RE", "RL"),
    shooting_nodes: tuple[str, str] = ("SS", "SF"),
) -> list[RangeReport]:
    """Range time, shooting time and mean vertical acceleration per shooting bout.

    A bout is an ``SS`` step directly followed by ``SF``, enclosed by the
    nearest ``RE`` before it and ``RL`` after it within the same part.
    Vertical acceleration is the mean of the third accel component.
    """
    accel = _channel(recording, accel_channel)
    enter, leave = range_nodes
    ss_node, sf_node = shooting_nodes
    reports = []
    for part, laps in zip(solution.parts, _part_laps(solution, lap_node)):
        steps = part.steps
        for i in range(len(steps) - 1):
            ss, sf = steps[i], steps[i + 1]
            if ss.node != ss_node or sf.node != sf_node:
                continue
            re = next((s for s in reversed(steps[:i]) if s.node == enter), None)
            rl = next((s for s in steps[i + 2:] if s.node == leave), None)
            if re is None or rl is None:
                continue
            z = None
            if accel is not None and accel.values.ndim == 2 and accel.values.shape[1] >= 3:
                w = _window(accel, ss.t, sf.t)
                if w.size:
                    z = float(np.mean(w[:, 2]))
            reports.append(RangeReport(laps[i], (rl.t - re.t) / 1000.0, (sf.t - ss.t) / 1000.0, z))
    return reports


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 6))
    return str(v)


def write_segments_csv(metrics: Sequence[SegmentMetrics], path: str | os.PathLike) -> None:
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SEGMENT_HEADER)
        for m in metrics:
            w.writerow([_cell(v) for v in m.row()])


def write_range_report_csv(reports: Sequence[RangeReport], path: str | os.PathLike, dataset: str) -> None:
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RANGE_HEADER)
        for r in reports:
            w.writerow([_cell(v) for v in r.row(dataset)])
