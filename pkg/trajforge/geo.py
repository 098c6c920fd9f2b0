"""
Geodesic and planar primitives shared by preprocessing, key-point masking
and metrics.

Distances on the sphere use the haversine formula with a spherical Earth
(R = 6,371,000 m). Planar work (RDP) happens in a local equirectangular
plane in meters: longitude differences are scaled by cos(mean latitude).
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from trajforge.errors import InvalidGeoPoint, ZeroOrNegativeInterval
from trajforge.utils import EARTH_RADIUS_M, LAT_RANGE, LNG_RANGE, MPS_TO_KMH

PlanarPoint = Tuple[float, float]


@dataclass(frozen=True, slots=True)
class GeoPoint:
    """A WGS84 position in degrees."""

    lng: float
    lat: float

    def __post_init__(self):
        if not is_valid_coordinate(self.lng, self.lat):
            raise InvalidGeoPoint(f"coordinate out of range: lng={self.lng}, lat={self.lat}",
                                  lng=self.lng, lat=self.lat)


def is_valid_coordinate(lng: float, lat: float) -> bool:
    """True when lng/lat are finite and inside the WGS84 ranges."""
    return (math.isfinite(lng) and math.isfinite(lat)
            and LNG_RANGE[0] <= lng <= LNG_RANGE[1]
            and LAT_RANGE[0] <= lat <= LAT_RANGE[1])


def haversine_m(a, b) -> float:
    """
    Great-circle distance in meters.

    Args:
        a: Object with ``lng`` and ``lat`` attributes (GeoPoint or TrajPoint)
        b: Object with ``lng`` and ``lat`` attributes

    Returns:
        float: Distance in meters, 0 iff the points coincide
    """
    lng1, lat1, lng2, lat2 = map(math.radians, (a.lng, a.lat, b.lng, b.lat))
    dlng = lng2 - lng1
    dlat = lat2 - lat1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlng / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(min(1.0, h)))


def haversine_array(lng1, lat1, lng2, lat2) -> np.ndarray:
    """Vectorized haversine over broadcastable arrays of degrees."""
    lng1, lat1, lng2, lat2 = (np.radians(np.asarray(v, dtype=np.float64))
                              for v in (lng1, lat1, lng2, lat2))
    h = (np.sin((lat2 - lat1) / 2) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lng2 - lng1) / 2) ** 2)
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.minimum(1.0, h)))


def step_distances_m(lng: np.ndarray, lat: np.ndarray) -> np.ndarray:
    """Distances between consecutive points (length n - 1)."""
    return haversine_array(lng[:-1], lat[:-1], lng[1:], lat[1:])


def path_length_m(lng: np.ndarray, lat: np.ndarray) -> float:
    """Total polyline length in meters."""
    if len(lng) < 2:
        return 0.0
    return float(step_distances_m(lng, lat).sum())


def point_segment_distance(p: PlanarPoint, a: PlanarPoint, b: PlanarPoint) -> float:
    """
    Perpendicular distance from p to the infinite line through a and b.

    Args:
        p: Query point (x, y)
        a: First point on the line
        b: Second point on the line; when equal to a the point-to-point
            distance is returned

    Returns:
        float: Nonnegative distance
    """
    return float(line_distances(np.asarray([p], dtype=np.float64), a, b)[0])


def line_distances(points: np.ndarray, a: PlanarPoint, b: PlanarPoint) -> np.ndarray:
    """Vectorized point_segment_distance for a (k, 2) array of points."""
    points = np.asarray(points, dtype=np.float64)
    ax, ay = float(a[0]), float(a[1])
    dx, dy = float(b[0]) - ax, float(b[1]) - ay
    norm = math.hypot(dx, dy)
    rx = points[:, 0] - ax
    ry = points[:, 1] - ay
    if norm == 0.0:
        return np.hypot(rx, ry)
    return np.abs(dx * ry - dy * rx) / norm


def to_local_plane(lng: np.ndarray, lat: np.ndarray) -> np.ndarray:
    """
    Project degrees onto a local equirectangular plane in meters.

    The origin is the first point; longitude is scaled by cos(mean latitude).

    Args:
        lng: Longitudes in degrees
        lat: Latitudes in degrees

    Returns:
        np.ndarray: (n, 2) array of (x, y) meters
    """
    lng = np.asarray(lng, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    k = math.radians(1.0) * EARTH_RADIUS_M
    scale = math.cos(math.radians(float(lat.mean()))) if len(lat) else 1.0
    x = (lng - lng[0]) * k * scale
    y = (lat - lat[0]) * k
    return np.column_stack([x, y])


def meters_to_degrees(dx_m, dy_m, ref_lat: float) -> Tuple[np.ndarray, np.ndarray]:
    """Convert planar meter offsets around ref_lat into degree offsets."""
    k = math.radians(1.0) * EARTH_RADIUS_M
    dlng = np.asarray(dx_m, dtype=np.float64) / (k * math.cos(math.radians(ref_lat)))
    dlat = np.asarray(dy_m, dtype=np.float64) / k
    return dlng, dlat


def speed_kmh(a, b) -> float:
    """
    Point-to-point speed.

    Args:
        a: Earlier TrajPoint
        b: Later TrajPoint

    Returns:
        float: Speed in km/h

    Raises:
        ZeroOrNegativeInterval: when b.t <= a.t
    """
    dt = b.t - a.t
    if dt <= 0:
        raise ZeroOrNegativeInterval(f"non-positive interval {dt} s", dt=dt)
    return haversine_m(a, b) / dt * MPS_TO_KMH


def step_speeds_kmh(lng: np.ndarray, lat: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Vectorized consecutive speeds; t must be strictly increasing."""
    dt = np.diff(np.asarray(t, dtype=np.float64))
    if np.any(dt <= 0):
        raise ZeroOrNegativeInterval("timestamps not strictly increasing")
    return step_distances_m(lng, lat) / dt * MPS_TO_KMH
