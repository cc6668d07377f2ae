"""Synthetic biathlon telemetry with known ground truth.

The athlete follows a rectangular loop at piecewise-constant speed. Layout
in local metres (x east, y north) around ``plan.origin``; ``s`` is
``plan.track_scale``::

              RL (x=40s)            RE (x=130s)
      (0,50s) +---<-----[shoot]-----<---+ (150s,50s)
              |                         |
    P (y=25s) v  penalty loop west       ^
              |                         |
    S ---> (0,0) +--->--UE(40)--->--UL(120s)---+ (150s,0)
    start spur                    |
                                  F spur (x=140s, final lap only)

Gate 4 (RL) closes each lap. Every lap after the first passes the penalty
gate P once on the way down the west side; each penalty round is a 150 m
detour that passes P again. The final lap leaves the loop after UL and
crosses the finish gate F.

Noise is zero-mean Gaussian. Position noise is temporally correlated (AR(1),
10 s correlation time) so the noisy track does not jitter back and forth
across a gate; speed, acceleration and angular-rate noise are white.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np
from scipy.signal import lfilter

from ._io import atomic_write
from .errors import PlanError
from .geo import EARTH_RADIUS_M, PlanarPoint, SegmentPair, segment_intersection, unproject_local
from .grammar import EdgeSpec, MovementGraph, NodeSpec
from .timeseries import Channel, ChannelKind, GeoPoint, Recording
from .triggers import EdgeTriggerSpec, GateTriggerSpec

SHOOTING_THRESHOLD_MPS = 1.0
GATE_HALF_WIDTH_M = 5.0
PENALTY_LOOP_WEST_M = 55.0
PENALTY_LOOP_HALF_M = 10.0
POSTURE_GUARD_S = 1.0
POSITION_CORRELATION_S = 10.0

BIATHLON_EDGES = (
    ("S", "UE"), ("UE", "UL"), ("UL", "RE"), ("UL", "F"), ("RE", "RL"), ("RE", "SS"),
    ("SS", "SF"), ("SF", "RL"), ("RL", "P"), ("P", "P"), ("P", "UE"),
)
BIATHLON_LABELS = {
    "S": "Start", "UE": "Enter uphill", "UL": "Leave uphill", "P": "Penalty round",
    "F": "Finish", "RE": "Enter shooting range", "SS": "Start shooting",
    "SF": "Finish shooting", "RL": "Leave shooting range",
}
GATE_NODES = ("S", "UE", "UL", "RE", "RL", "P", "F")


@dataclass(frozen=True)
class TrackPlan:
    lap_count: int = 6
    shooting_laps: tuple[int, ...] = (2, 4)
    penalties_per_bout: tuple[int, ...] = (2, 1)
    base_speed_mps: float = 5.0
    shooting_speed_mps: float = 0.3
    shooting_duration_s: float = 30.0
    imu_rate_hz: float = 50.0
    gnss_rate_hz: float = 10.0
    noise_seed: int = 0
    position_sigma_m: float = 0.5
    speed_sigma_mps: float = 0.05
    accel_sigma_g: float = 0.02
    gyro_sigma_dps: float = 1.0
    posture_accel_z_g: tuple[float, ...] = (0.33, -0.03)
    track_scale: float = 1.0
    lead_in_s: float = 180.0
    cool_down_s: float = 20.0
    origin: GeoPoint = GeoPoint(47.0, 15.0)
    start_epoch_ms: int = 1_722_500_000_000

    def __post_init__(self):
        object.__setattr__(self, "shooting_laps", tuple(int(x) for x in self.shooting_laps))
        object.__setattr__(self, "penalties_per_bout", tuple(int(x) for x in self.penalties_per_bout))
        object.__setattr__(self, "posture_accel_z_g", tuple(float(x) for x in self.posture_accel_z_g))
        if isinstance(self.origin, (list, tuple)):
            object.__setattr__(self, "origin", GeoPoint(*self.origin))
        if self.lap_count < 1:
            raise PlanError("lap_count must be at least 1")
        laps = self.shooting_laps
        if list(laps) != sorted(set(laps)) or any(not 1 <= k < self.lap_count for k in laps):
            raise PlanError("shooting_laps must be distinct laps before the final lap")
        if len(self.penalties_per_bout) != len(laps):
            raise PlanError("penalties_per_bout needs one entry per shooting lap")
        if any(not 0 <= p <= 5 for p in self.penalties_per_bout):
            raise PlanError("penalties per bout must lie in 0..5")
        if not 0 < self.shooting_speed_mps < SHOOTING_THRESHOLD_MPS:
            raise PlanError("shooting_speed_mps must be positive and below 1 m/s")
        if self.base_speed_mps <= 1.5 * SHOOTING_THRESHOLD_MPS:
            raise PlanError("base_speed_mps must be well above the 1 m/s shooting trigger")
        if self.imu_rate_hz <= 0 or self.gnss_rate_hz <= 0 or self.imu_rate_hz > 1000 or self.gnss_rate_hz > 1000:
            raise PlanError("sample rates must lie in (0, 1000] Hz")
        if self.track_scale < 1:
            raise PlanError("track_scale must be at least 1")
        if self.shooting_duration_s <= 0:
            raise PlanError("shooting_duration_s must be positive")
        if self.shooting_speed_mps * self.shooting_duration_s > 55 * self.track_scale - 10:
            raise PlanError("shooting bout does not fit between the shooting spot and gate RL")
        if laps and not self.posture_accel_z_g:
            raise PlanError("posture_accel_z_g must not be empty")
        if self.lead_in_s < 1 or self.cool_down_s < 1:
            raise PlanError("lead_in_s and cool_down_s must be at least 1 s")
        for name in ("position_sigma_m", "speed_sigma_mps", "accel_sigma_g", "gyro_sigma_dps"):
            if getattr(self, name) < 0:
                raise PlanError(f"{name} must be non-negative")

    def noiseless(self) -> "TrackPlan":
        return replace(self, position_sigma_m=0.0, speed_sigma_mps=0.0, accel_sigma_g=0.0, gyro_sigma_dps=0.0)

    # -- layout ---------------------------------------------------------------

    def planar_gates(self) -> dict[str, tuple[PlanarPoint, PlanarPoint]]:
        s, w = self.track_scale, GATE_HALF_WIDTH_M
        top = 50 * s

        def vertical(x, y):
            return PlanarPoint(x, y - w), PlanarPoint(x, y + w)

        def horizontal(x, y):
            return PlanarPoint(x - w, y), PlanarPoint(x + w, y)

        return {
            "S": vertical(-20.0, 0.0),
            "UE": vertical(40.0, 0.0),
            "UL": vertical(120 * s, 0.0),
            "RE": vertical(130 * s, top),
            "RL": vertical(40 * s, top),
            "P": horizontal(0.0, 25 * s),
            "F": horizontal(140 * s, -20.0),
        }

    @property
    def gates(self) -> dict[str, tuple[GeoPoint, GeoPoint]]:
        return {k: (unproject_local(self.origin, a), unproject_local(self.origin, b))
                for k, (a, b) in self.planar_gates().items()}

    @property
    def start_point(self) -> PlanarPoint:
        return PlanarPoint(-25.0, 0.0)


def plan_to_dict(plan: TrackPlan) -> dict:
    d = asdict(plan)
    d["origin"] = [plan.origin.lat, plan.origin.lon]
    for k in ("shooting_laps", "penalties_per_bout", "posture_accel_z_g"):
        d[k] = list(d[k])
    return d


def plan_from_dict(data: Any) -> TrackPlan:
    if not isinstance(data, dict):
        raise PlanError("plan must be a JSON object")
    known = {f.name for f in fields(TrackPlan)}
    unknown = set(data) - known
    if unknown:
        raise PlanError(f"unknown plan key(s) {sorted(unknown)}")
    kwargs = dict(data)
    try:
        if "origin" in kwargs:
            kwargs["origin"] = GeoPoint(*kwargs["origin"])
        return TrackPlan(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PlanError):
            raise
        raise PlanError(str(exc)) from None


def load_plan(path: str | os.PathLike) -> TrackPlan:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PlanError(f"{path}: invalid JSON ({exc})") from None
    return plan_from_dict(data)


def biathlon_grammar(plan: TrackPlan, start_window_ms: Optional[int] = 60_000) -> MovementGraph:
    """Grammar matching the synthetic track.

    ``start_window_ms`` bounds S -> UE so that start-gate crossings long
    before the race cannot open a solution; ``None`` leaves it unbounded.
    """
    nodes = tuple(NodeSpec(n, BIATHLON_LABELS[n], n == "S", n == "F") for n in BIATHLON_LABELS)
    edges = tuple(
        EdgeSpec(a, b, max_ms=start_window_ms if (a, b) == ("S", "UE") else None) for a, b in BIATHLON_EDGES
    )
    bindings: dict = {n: GateTriggerSpec(plan.gates[n]) for n in GATE_NODES}
    bindings["SS"] = EdgeTriggerSpec("speed", SHOOTING_THRESHOLD_MPS, "falling")
    bindings["SF"] = EdgeTriggerSpec("speed", SHOOTING_THRESHOLD_MPS, "rising")
    return MovementGraph(nodes, edges, bindings)


# -- kinematics ---------------------------------------------------------------


class _Route:
    """Piecewise-linear motion in local metres, times in seconds from record start."""

    def __init__(self, start: PlanarPoint):
        self.t0: list[float] = []
        self.dur: list[float] = []
        self.p0: list[PlanarPoint] = []
        self.p1: list[PlanarPoint] = []
        self.pos = start
        self.now = 0.0

    def pause(self, seconds: float) -> None:
        self._add(self.pos, seconds)

    def go(self, speed: float, *waypoints) -> None:
        for wp in waypoints:
            wp = PlanarPoint(*wp)
            dist = math.hypot(wp.x - self.pos.x, wp.y - self.pos.y)
            if dist > 0:
                self._add(wp, dist / speed)

    def _add(self, end: PlanarPoint, seconds: float) -> None:
        self.t0.append(self.now)
        self.dur.append(seconds)
        self.p0.append(self.pos)
        self.p1.append(end)
        self.pos = end
        self.now += seconds

    def speed_at_piece(self, i: int) -> float:
        a, b = self.p0[i], self.p1[i]
        return math.hypot(b.x - a.x, b.y - a.y) / self.dur[i]

    def arrays(self):
        t0 = np.array(self.t0)
        dur = np.array(self.dur)
        p0 = np.array(self.p0, dtype=float)
        p1 = np.array(self.p1, dtype=float)
        vel = (p1 - p0) / dur[:, None]
        return t0, dur, p0, vel

    def sample(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Position (x, y) and speed at times ``t``; right-continuous in speed."""
        t0, dur, p0, vel = self.arrays()
        i = np.clip(np.searchsorted(t0, t, side="right") - 1, 0, len(t0) - 1)
        dt = np.clip(t - t0[i], 0.0, dur[i])
        xy = p0[i] + vel[i] * dt[:, None]
        speed = np.hypot(vel[i, 0], vel[i, 1])
        speed = np.where(t < t0[-1] + dur[-1], speed, 0.0)
        return xy[:, 0], xy[:, 1], speed

    def gate_crossings(self, gates: dict[str, tuple[PlanarPoint, PlanarPoint]]) -> list[tuple[str, float]]:
        out = set()
        for i in range(len(self.t0)):
            a, b = self.p0[i], self.p1[i]
            if a == b:
                continue
            for name, (g1, g2) in gates.items():
                hit = segment_intersection(SegmentPair(a, b, g1, g2))
                if hit is not None:
                    out.add((name, self.t0[i] + hit.u * self.dur[i]))
        return sorted(out, key=lambda e: (e[1], e[0]))

    def speed_edges(self, threshold: float) -> list[tuple[str, float]]:
        out = []
        prev = 0.0
        for i in range(len(self.t0)):
            cur = self.speed_at_piece(i)
            if prev >= threshold > cur:
                out.append(("SS", self.t0[i]))
            elif prev < threshold <= cur:
                out.append(("SF", self.t0[i]))
            prev = cur
        if prev >= threshold:
            out.append(("SS", self.now))
        return out


@dataclass
class GroundTruth:
    """Planted events. Times are absolute epoch milliseconds (floats)."""

    pois: list[tuple[str, float]]
    path: list[str]
    path_times: list[float]
    bouts: list[dict] = field(default_factory=list)
    race_start_ms: float = 0.0
    race_end_ms: float = 0.0

    @property
    def segment_durations_s(self) -> list[tuple[str, str, float]]:
        return [
            (a, b, (tb - ta) / 1000.0)
            for a, b, ta, tb in zip(self.path, self.path[1:], self.path_times, self.path_times[1:])
        ]

    def p_traversals(self) -> int:
        return sum(1 for a, b in zip(self.path, self.path[1:]) if (a, b) == ("P", "P"))

    def to_dict(self) -> dict:
        return {
            "pois": [{"node": n, "t_ms": t} for n, t in self.pois],
            "optimal_path": [{"node": n, "t_ms": t} for n, t in zip(self.path, self.path_times)],
            "segments": [{"from": a, "to": b, "duration_s": d} for a, b, d in self.segment_durations_s],
            "shooting_bouts": self.bouts,
            "race_start_ms": self.race_start_ms,
            "race_end_ms": self.race_end_ms,
        }


def _build_route(plan: TrackPlan) -> tuple[_Route, list[dict]]:
    s, v = plan.track_scale, plan.base_speed_mps
    top, p_y = 50 * s, 25 * s
    route = _Route(plan.start_point)
    route.pause(plan.lead_in_s)
    route.go(v, (0.0, 0.0))
    bouts = []
    shooting = dict(zip(plan.shooting_laps, plan.penalties_per_bout))
    for lap in range(1, plan.lap_count + 1):
        if lap == plan.lap_count:
            route.go(v, (140 * s, 0.0), (140 * s, -40.0))
            break
        route.go(v, (150 * s, 0.0), (150 * s, top), (95 * s, top))
        if lap in shooting:
            ss = route.now
            route.go(plan.shooting_speed_mps, (95 * s - plan.shooting_speed_mps * plan.shooting_duration_s, top))
            bouts.append({
                "lap": lap,
                "ss_t": ss,
                "sf_t": route.now,
                "penalties": shooting[lap],
                "posture_accel_z_g": plan.posture_accel_z_g[len(bouts) % len(plan.posture_accel_z_g)],
            })
        route.go(v, (0.0, top), (0.0, p_y - PENALTY_LOOP_HALF_M))
        for _ in range(shooting.get(lap, 0)):
            route.go(
                v,
                (-PENALTY_LOOP_WEST_M, p_y - PENALTY_LOOP_HALF_M),
                (-PENALTY_LOOP_WEST_M, p_y + PENALTY_LOOP_HALF_M),
                (0.0, p_y + PENALTY_LOOP_HALF_M),
                (0.0, p_y - PENALTY_LOOP_HALF_M),
            )
        route.go(v, (0.0, 0.0))
    route.pause(plan.cool_down_s)
    return route, bouts


def _sample_times(duration_s: int, rate_hz: float) -> np.ndarray:
    n = int(round(duration_s * rate_hz))
    return np.rint(np.arange(n) * (1000.0 / rate_hz)).astype(np.int64)


def _to_geo(plan: TrackPlan, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    lat = plan.origin.lat + np.degrees(y / EARTH_RADIUS_M)
    lon = plan.origin.lon + np.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(plan.origin.lat))))
    return np.column_stack([lat, lon])


def _correlated_noise(rng: np.random.Generator, n: int, sigma: float, dt_s: float) -> np.ndarray:
    if sigma == 0 or n == 0:
        return np.zeros(n)
    rho = math.exp(-dt_s / POSITION_CORRELATION_S)
    xi = rng.standard_normal(n)
    e0 = sigma * xi[0]
    rest = lfilter([sigma * math.sqrt(1 - rho * rho)], [1.0, -rho], xi[1:], zi=[rho * e0])[0]
    return np.concatenate([[e0], rest])


def _imu(plan: TrackPlan, route: _Route, bouts: list[dict], t_ms: np.ndarray, rng_a, rng_g):
    ts = t_ms / 1000.0
    _, _, speed = route.sample(ts)
    moving = speed >= SHOOTING_THRESHOLD_MPS
    accel = np.zeros((ts.size, 3))
    accel[:, 0] = 0.3 * np.sin(2 * np.pi * 1.0 * ts)
    accel[:, 1] = 0.1 * np.sin(2 * np.pi * 0.5 * ts)
    accel[:, 2] = 0.2 * np.sin(2 * np.pi * 1.2 * ts)
    accel[~moving] = 0.0
    for bout in bouts:
        w = (ts >= bout["ss_t"] - POSTURE_GUARD_S) & (ts <= bout["sf_t"] + POSTURE_GUARD_S)
        accel[w] = (0.0, 0.0, bout["posture_accel_z_g"])
    gyro = np.zeros((ts.size, 3))
    gyro[:, 0] = 40.0 * np.sin(2 * np.pi * 1.0 * ts)
    gyro[:, 1] = 15.0 * np.sin(2 * np.pi * 0.5 * ts + 1.0)
    gyro[:, 2] = 25.0 * np.sin(2 * np.pi * 1.2 * ts + 2.0)
    gyro[~moving] = 0.0
    if plan.accel_sigma_g:
        accel += rng_a.normal(0.0, plan.accel_sigma_g, accel.shape)
    if plan.gyro_sigma_dps:
        gyro += rng_g.normal(0.0, plan.gyro_sigma_dps, gyro.shape)
    return accel, gyro


def generate(plan: TrackPlan = TrackPlan(), recording_id: str = "synthetic") -> tuple[Recording, GroundTruth]:
    """Render ``plan`` into a recording plus the planted ground truth."""
    route, bouts = _build_route(plan)
    duration_s = int(math.ceil(route.now))
    rng_pos, rng_speed, rng_acc, rng_gyro = (
        np.random.default_rng(s) for s in np.random.SeedSequence(plan.noise_seed).spawn(4)
    )
    base = plan.start_epoch_ms

    t_gnss = _sample_times(duration_s, plan.gnss_rate_hz)
    x, y, speed = route.sample(t_gnss / 1000.0)
    dt = 1.0 / plan.gnss_rate_hz
    x = x + _correlated_noise(rng_pos, x.size, plan.position_sigma_m, dt)
    y = y + _correlated_noise(rng_pos, y.size, plan.position_sigma_m, dt)
    if plan.speed_sigma_mps:
        speed = np.maximum(speed + rng_speed.normal(0.0, plan.speed_sigma_mps, speed.size), 0.0)

    t_imu = _sample_times(duration_s, plan.imu_rate_hz)
    accel, gyro = _imu(plan, route, bouts, t_imu, rng_acc, rng_gyro)

    channels = {
        "position": Channel(ChannelKind.POSITION, base + t_gnss, _to_geo(plan, x, y), plan.gnss_rate_hz),
        "speed": Channel(ChannelKind.SPEED, base + t_gnss, speed, plan.gnss_rate_hz),
        "accel": Channel(ChannelKind.ACCEL, base + t_imu, accel, plan.imu_rate_hz),
        "gyro": Channel(ChannelKind.GYRO, base + t_imu, gyro, plan.imu_rate_hz),
    }
    recording = Recording(recording_id, channels)

    events = route.gate_crossings(plan.planar_gates()) + route.speed_edges(SHOOTING_THRESHOLD_MPS)
    events.sort(key=lambda e: (e[1], e[0]))
    pois = [(n, base + t * 1000.0) for n, t in events]
    t_start = next(t for n, t in pois if n == "S")
    t_finish = next(t for n, t in pois if n == "F")
    race = [(n, t) for n, t in pois if t_start <= t <= t_finish]

    gt_bouts = []
    for b in bouts:
        ss, sf = base + b["ss_t"] * 1000.0, base + b["sf_t"] * 1000.0
        re = max(t for n, t in race if n == "RE" and t < ss)
        rl = min(t for n, t in race if n == "RL" and t > sf)
        gt_bouts.append({
            "lap": b["lap"], "ss_t_ms": ss, "sf_t_ms": sf, "re_t_ms": re, "rl_t_ms": rl,
            "penalties": b["penalties"], "posture_accel_z_g": b["posture_accel_z_g"],
            "shooting_time_s": (sf - ss) / 1000.0, "range_time_s": (rl - re) / 1000.0,
        })
    truth = GroundTruth(
        pois=pois,
        path=[n for n, _ in race],
        path_times=[t for _, t in race],
        bouts=gt_bouts,
        race_start_ms=t_start,
        race_end_ms=t_finish,
    )
    return recording, truth


def inject_noise_events(
    recording: Recording,
    plan: TrackPlan,
    crossings: int,
    warmup_speed_mps: float = 3.0,
    rest_s: float = 75.0,
) -> Recording:
    """Add a warm-up before the race that crosses the start gate ``crossings`` times.

    The athlete runs small loops from the start point, each passing gate S
    once eastbound and returning around the gate's end, then rests for
    ``rest_s`` before the race. Raises :class:`PlanError` if that does not
    fit into the lead-in.
    """
    if crossings < 0:
        raise PlanError("crossings must be non-negative")
    if crossings == 0:
        return recording
    sp = plan.start_point
    loop = [(-10.0, sp.y), (-10.0, 12.0), (sp.x, 12.0), (sp.x, sp.y)]
    route = _Route(sp)
    route.pause(1.0)
    for _ in range(crossings):
        route.go(warmup_speed_mps, *loop)
    warm_end = route.now
    if warm_end + rest_s > plan.lead_in_s:
        raise PlanError(
            f"warm-up of {crossings} crossings needs {warm_end + rest_s:.0f} s but the race starts "
            f"after {plan.lead_in_s:.0f} s"
        )
    route.pause(plan.lead_in_s - warm_end)

    base = plan.start_epoch_ms
    channels = dict(recording.channels)
    pos, spd = channels["position"], channels["speed"]
    rel = (pos.t - base) / 1000.0
    w = rel < warm_end
    x, y, speed = route.sample(rel[w])
    # Reuse the recorded noise around the stationary start point.
    noise = _planar_offsets(plan, pos.values[w]) - np.array([sp.x, sp.y])
    values = pos.values.copy()
    values[w] = _to_geo(plan, x + noise[:, 0], y + noise[:, 1])
    channels["position"] = Channel(ChannelKind.POSITION, pos.t, values, pos.nominal_rate_hz)
    sw = ((spd.t - base) / 1000.0) < warm_end
    speeds = spd.values.copy()
    _, _, warm_speed = route.sample((spd.t[sw] - base) / 1000.0)
    speeds[sw] = warm_speed + spd.values[sw]
    channels["speed"] = Channel(ChannelKind.SPEED, spd.t, speeds, spd.nominal_rate_hz)
    return Recording(recording.id, channels)


def _planar_offsets(plan: TrackPlan, latlon: np.ndarray) -> np.ndarray:
    y = EARTH_RADIUS_M * np.radians(latlon[:, 0] - plan.origin.lat)
    x = EARTH_RADIUS_M * np.radians(latlon[:, 1] - plan.origin.lon) * math.cos(math.radians(plan.origin.lat))
    return np.column_stack([x, y])


def write_ground_truth(truth: GroundTruth, plan: TrackPlan, path: str | os.PathLike) -> None:
    payload = {"plan": plan_to_dict(plan), **truth.to_dict()}
    with atomic_write(path) as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
