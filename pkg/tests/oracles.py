"""Independent reference implementations used only to check the package.

Everything here is deliberately written from different published sources
(or by brute force) than the code under test, and stays naive on purpose.
"""

from __future__ import annotations

import itertools
import math
from datetime import datetime, timezone

import numpy as np


# ---------------------------------------------------------------------------
# Julian date by the Fliegel & Van Flandern integer formula.

def julian_day_fliegel(t: datetime) -> float:
    # The published formula divides truncating toward zero, not flooring.
    def tdiv(a, b):
        return a // b if a >= 0 else -((-a) // b)

    t = t.astimezone(timezone.utc)
    y, m, d = t.year, t.month, t.day
    jdn = (
        tdiv(1461 * (y + 4800 + tdiv(m - 14, 12)), 4)
        + tdiv(367 * (m - 2 - 12 * tdiv(m - 14, 12)), 12)
        - tdiv(3 * tdiv(y + 4900 + tdiv(m - 14, 12), 100), 4)
        + d
        - 32075
    )
    frac = (t.hour - 12) / 24.0 + t.minute / 1440.0 + (t.second + t.microsecond / 1e6) / 86400.0
    return jdn + frac


# ---------------------------------------------------------------------------
# Solar position by the Michalsky (1988) Astronomical Almanac algorithm,
# valid 1950-2050, stated accuracy ~0.01 degrees.  Azimuth returned
# clockwise from NORTH; elevation is refraction-corrected.

def michalsky_position(t: datetime, lon: float, lat: float) -> tuple[float, float]:
    t = t.astimezone(timezone.utc)
    delta = julian_day_fliegel(t) - 2451545.0
    hour_ut = t.hour + t.minute / 60.0 + (t.second + t.microsecond / 1e6) / 3600.0

    mnlong = (280.460 + 0.9856474 * delta) % 360.0
    mnanom = math.radians((357.528 + 0.9856003 * delta) % 360.0)
    eclong = math.radians(
        (mnlong + 1.915 * math.sin(mnanom) + 0.020 * math.sin(2 * mnanom)) % 360.0
    )
    oblqec = math.radians(23.439 - 0.0000004 * delta)

    num = math.cos(oblqec) * math.sin(eclong)
    den = math.cos(eclong)
    ra = math.atan(num / den)
    if den < 0:
        ra += math.pi
    elif num < 0:
        ra += 2 * math.pi
    dec = math.asin(math.sin(oblqec) * math.sin(eclong))

    gmst = (6.697375 + 0.0657098242 * delta + hour_ut) % 24.0
    lmst = math.radians(((gmst + lon / 15.0) % 24.0) * 15.0)
    ha = lmst - ra
    if ha < -math.pi:
        ha += 2 * math.pi
    if ha > math.pi:
        ha -= 2 * math.pi

    lat_r = math.radians(lat)
    el = math.asin(
        math.sin(dec) * math.sin(lat_r) + math.cos(dec) * math.cos(lat_r) * math.cos(ha)
    )
    az = math.asin(-math.cos(dec) * math.sin(ha) / math.cos(el))
    # Quadrant fix per Michalsky: elevation relative to the critical value.
    if math.sin(dec) - math.sin(el) * math.sin(lat_r) >= 0.0:
        if math.sin(az) < 0.0:
            az += 2 * math.pi
    else:
        az = math.pi - az

    el_deg = math.degrees(el)
    if el_deg > -0.56:
        refr = 3.51561 * (
            0.1594 + 0.0196 * el_deg + 0.00002 * el_deg**2
        ) / (1.0 + 0.505 * el_deg + 0.0845 * el_deg**2)
    else:
        refr = 0.56
    if el_deg + refr > 90.0:
        refr = 90.0 - el_deg
    return el_deg + refr, math.degrees(az) % 360.0


def michalsky_zenith_azimuth_south(t: datetime, lon: float, lat: float) -> tuple[float, float]:
    """Oracle angles in the package convention (azimuth clockwise from south)."""
    el, az_north = michalsky_position(t, lon, lat)
    return 90.0 - el, (az_north - 180.0) % 360.0


# ---------------------------------------------------------------------------
# Great-circle distance by the spherical law of cosines.

def law_of_cosines_km(lon1, lat1, lon2, lat2, radius_km=6371.0) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return radius_km * math.acos(max(-1.0, min(1.0, c)))


# ---------------------------------------------------------------------------
# Brute-force greedy regression tree (naive split enumeration).

def _sse(y):
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return 0.0
    return float(np.sum((y - y.mean()) ** 2))


def _best_split_naive(X, y, min_n):
    n, p = X.shape
    best = None  # (sse_total, feat, thr)
    for j in range(p):
        vals = np.unique(X[:, j])
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = 0.5 * (lo + hi)
            if thr <= lo:
                thr = hi
            left = X[:, j] < thr
            if left.sum() < min_n or (~left).sum() < min_n:
                continue
            total = _sse(y[left]) + _sse(y[~left])
            if best is None or total < best[0] - 1e-12:
                best = (total, j, thr)
    return best


def greedy_tree_sse(X, y, max_depth, min_n) -> float:
    """Training SSE of a greedy CART grown by exhaustive split search."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)

    def grow(rows, depth):
        ysub = y[rows]
        if depth >= max_depth or rows.size < 2 * min_n or _sse(ysub) <= 0.0:
            return _sse(ysub)
        best = _best_split_naive(X[rows], ysub, min_n)
        if best is None or best[0] >= _sse(ysub) - 1e-12:
            return _sse(ysub)
        _, j, thr = best
        left = X[rows, j] < thr
        return grow(rows[left], depth + 1) + grow(rows[~left], depth + 1)

    return grow(np.arange(len(y)), 0)


# ---------------------------------------------------------------------------
# Brute-force Shapley values for a single tree under the path-conditional
# expectation, enumerating all feature subsets.

def tree_conditional_expectation(tree, x, known: frozenset) -> float:
    """Expected tree output when only features in ``known`` match ``x``."""

    def walk(i):
        f = tree.feature[i]
        if f < 0:
            return tree.value[i]
        if f in known:
            nxt = tree.left[i] if x[f] < tree.threshold[i] else tree.right[i]
            return walk(nxt)
        wl = tree.cover[tree.left[i]]
        wr = tree.cover[tree.right[i]]
        return (wl * walk(tree.left[i]) + wr * walk(tree.right[i])) / (wl + wr)

    return walk(0)


def brute_force_shap(tree, x, n_features: int) -> np.ndarray:
    phi = np.zeros(n_features)
    feats = list(range(n_features))
    fact = math.factorial
    m = n_features
    for i in feats:
        rest = [f for f in feats if f != i]
        for r in range(len(rest) + 1):
            for subset in itertools.combinations(rest, r):
                s = frozenset(subset)
                w = fact(len(s)) * fact(m - len(s) - 1) / fact(m)
                gain = tree_conditional_expectation(
                    tree, x, s | {i}
                ) - tree_conditional_expectation(tree, x, s)
                phi[i] += w * gain
    return phi
