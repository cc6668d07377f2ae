"""Geodetic helpers for virtual gates: great-circle distance, a local planar
projection and closed-segment intersection."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import GeometryError
from .timeseries import GeoPoint

# IUGG mean Earth radius.
EARTH_RADIUS_M = 6371008.8
MAX_PROJECTION_DISTANCE_M = 50_000.0


class PlanarPoint(NamedTuple):
    """Metres east (x) and north (y) of a projection origin."""

    x: float
    y: float


@dataclass(frozen=True)
class SegmentPair:
    """A trajectory step ``a1 -> a2`` and a gate ``b1 -> b2``."""

    a1: PlanarPoint
    a2: PlanarPoint
    b1: PlanarPoint
    b2: PlanarPoint

    def __post_init__(self):
        if self.a1 == self.a2 or self.b1 == self.b2:
            raise GeometryError("segments must have nonzero length")


class Intersection(NamedTuple):
    point: PlanarPoint
    u: float  # fraction along a1 -> a2


def haversine_distance(p: GeoPoint, q: GeoPoint) -> float:
    phi1, phi2 = math.radians(p.lat), math.radians(q.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(q.lon - p.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def project_local(origin: GeoPoint, p: GeoPoint) -> PlanarPoint:
    """Equirectangular projection around ``origin``.

    Only meaningful close to the origin; points further than 50 km are
    rejected.
    """
    if haversine_distance(origin, p) >= MAX_PROJECTION_DISTANCE_M:
        raise GeometryError(f"{p} is too far from projection origin {origin}")
    x = EARTH_RADIUS_M * math.radians(p.lon - origin.lon) * math.cos(math.radians(origin.lat))
    y = EARTH_RADIUS_M * math.radians(p.lat - origin.lat)
    return PlanarPoint(x, y)


def project_local_array(origin: GeoPoint, lat: np.ndarray, lon: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`project_local` without the distance check."""
    x = EARTH_RADIUS_M * np.radians(np.asarray(lon) - origin.lon) * math.cos(math.radians(origin.lat))
    y = EARTH_RADIUS_M * np.radians(np.asarray(lat) - origin.lat)
    return x, y


def unproject_local(origin: GeoPoint, pt: PlanarPoint) -> GeoPoint:
    """Inverse of :func:`project_local`."""
    lat = origin.lat + math.degrees(pt.y / EARTH_RADIUS_M)
    lon = origin.lon + math.degrees(pt.x / (EARTH_RADIUS_M * math.cos(math.radians(origin.lat))))
    return GeoPoint(lat, lon)


def _cross(ax: float, ay: float, bx: float, by: float) -> float:
    return ax * by - ay * bx


def segment_intersection(sp: SegmentPair) -> Optional[Intersection]:
    """Where the closed segments of ``sp`` meet, if they do.

    Touching endpoints count. For collinear overlap the point with the
    smallest ``u`` along the trajectory step is returned.
    """
    rx, ry = sp.a2.x - sp.a1.x, sp.a2.y - sp.a1.y
    sx, sy = sp.b2.x - sp.b1.x, sp.b2.y - sp.b1.y
    qx, qy = sp.b1.x - sp.a1.x, sp.b1.y - sp.a1.y
    denom = _cross(rx, ry, sx, sy)
    if denom != 0.0:
        u = _cross(qx, qy, sx, sy) / denom
        v = _cross(qx, qy, rx, ry) / denom
        if 0.0 <= u <= 1.0 and 0.0 <= v <= 1.0:
            return Intersection(PlanarPoint(sp.a1.x + u * rx, sp.a1.y + u * ry), u)
        return None
    if _cross(qx, qy, rx, ry) != 0.0:
        return None  # parallel, not collinear
    rr = rx * rx + ry * ry
    t0 = (qx * rx + qy * ry) / rr
    t1 = ((sp.b2.x - sp.a1.x) * rx + (sp.b2.y - sp.a1.y) * ry) / rr
    lo, hi = max(0.0, min(t0, t1)), min(1.0, max(t0, t1))
    if lo > hi:
        return None
    return Intersection(PlanarPoint(sp.a1.x + lo * rx, sp.a1.y + lo * ry), lo)


def side_of_line(b1: PlanarPoint, b2: PlanarPoint, x, y):
    """Signed area test: positive left of ``b1 -> b2``, negative right.

    Works on scalars and numpy arrays alike.
    """
    return (b2.x - b1.x) * (y - b1.y) - (b2.y - b1.y) * (x - b1.x)
