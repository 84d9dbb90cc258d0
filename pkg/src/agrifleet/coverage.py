"""Raster coverage measurement.

Samples the region of interest (eroded by the camera half-footprint, minus
no-fly zones) on a regular grid and measures how much of it lies within the
footprint radius of a flown or planned path. Deliberately independent of the
sweep construction so it can audit the planner.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .geo import LocalPoint, Polygon


def _points_in_polygon(xs: np.ndarray, ys: np.ndarray, poly: Polygon) -> np.ndarray:
    inside = np.zeros(xs.shape, dtype=bool)
    verts = poly.vertices
    n = len(verts)
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        straddles = (a.y > ys) != (b.y > ys)
        if not straddles.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = a.x + (ys - a.y) * (b.x - a.x) / (b.y - a.y)
        inside ^= straddles & (xs < x_cross)
    return inside


def _distance_to_segment(
    xs: np.ndarray, ys: np.ndarray, a: LocalPoint, b: LocalPoint
) -> np.ndarray:
    dx, dy = b.x - a.x, b.y - a.y
    seg2 = dx * dx + dy * dy
    if seg2 <= 0.0:
        return np.hypot(xs - a.x, ys - a.y)
    t = np.clip(((xs - a.x) * dx + (ys - a.y) * dy) / seg2, 0.0, 1.0)
    return np.hypot(xs - (a.x + t * dx), ys - (a.y + t * dy))


def _boundary_distance(xs: np.ndarray, ys: np.ndarray, poly: Polygon) -> np.ndarray:
    verts = poly.vertices
    n = len(verts)
    best = np.full(xs.shape, np.inf)
    for i in range(n):
        np.minimum(best, _distance_to_segment(xs, ys, verts[i], verts[(i + 1) % n]), out=best)
    return best


def eroded_samples(
    roi: Polygon,
    nofly: Sequence[Polygon],
    margin_m: float,
    pitch_m: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Grid samples of (ROI minus no-fly zones) eroded by ``margin_m``."""
    minx, miny, maxx, maxy = roi.bounds()
    gx = np.arange(minx, maxx + pitch_m / 2, pitch_m)
    gy = np.arange(miny, maxy + pitch_m / 2, pitch_m)
    xs, ys = np.meshgrid(gx, gy)
    xs, ys = xs.ravel(), ys.ravel()

    keep = _points_in_polygon(xs, ys, roi)
    keep &= _boundary_distance(xs, ys, roi) >= margin_m - 1e-9
    for zone in nofly:
        inside_zone = _points_in_polygon(xs, ys, zone)
        near_zone = _boundary_distance(xs, ys, zone) < margin_m - 1e-9
        keep &= ~(inside_zone | near_zone)
    return xs[keep], ys[keep]


def min_distance_to_legs(
    xs: np.ndarray, ys: np.ndarray, legs: Sequence[tuple[LocalPoint, LocalPoint]]
) -> np.ndarray:
    best = np.full(xs.shape, np.inf)
    for a, b in legs:
        np.minimum(best, _distance_to_segment(xs, ys, a, b), out=best)
    return best


def path_legs(waypoints: Sequence[LocalPoint]) -> list[tuple[LocalPoint, LocalPoint]]:
    return [(waypoints[i - 1], waypoints[i]) for i in range(1, len(waypoints))]


def coverage_fraction(
    roi: Polygon,
    nofly: Sequence[Polygon],
    legs: Sequence[tuple[LocalPoint, LocalPoint]],
    radius_m: float,
    pitch_m: float,
) -> tuple[float, int]:
    """(fraction of eroded-ROI samples within ``radius_m`` of the path,
    number of missed samples). An empty eroded region counts as covered."""
    xs, ys = eroded_samples(roi, nofly, radius_m, pitch_m)
    if xs.size == 0:
        return 1.0, 0
    if not legs:
        return 0.0, int(xs.size)
    distances = min_distance_to_legs(xs, ys, legs)
    covered = distances <= radius_m + 1e-9
    misses = int(np.count_nonzero(~covered))
    return float(np.count_nonzero(covered)) / float(xs.size), misses
