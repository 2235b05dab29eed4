"""Solar position: zenith and azimuth angles for a time and place.

Implements the NOAA general solar position calculations (Meeus-style
truncated ephemeris), good to well under 0.1 degrees for modern dates,
far inside the 0.5-degree target needed for forecasting features.

Conventions at the API boundary:

- zenith: degrees from the local vertical, 0 = overhead, 90 = horizon,
  refraction-corrected near the horizon;
- azimuth: degrees in [0, 360), measured clockwise from due south
  (due south = 0, due west = 90, due north = 180, due east = 270).

Timestamps must carry an explicit UTC offset; daylight-saving questions
are resolved by whoever produced the timestamp, never in here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone

from .errors import OutOfRangeError, ValidationError

# Julian day of the Unix epoch and of J2000.0 (2000-01-01 12:00 UTC).
_UNIX_EPOCH_JD = 2440587.5
J2000_JD = 2451545.0

_YEAR_MIN = 1900
_YEAR_MAX = 2100


@dataclass(frozen=True)
class GeoCoordinate:
    """A point on the sphere: longitude degrees east, latitude degrees north."""

    longitude: float
    latitude: float

    def __post_init__(self):
        if not (-90.0 <= self.latitude <= 90.0):
            raise ValidationError(f"latitude {self.latitude} outside [-90, 90]")
        if not (-180.0 < self.longitude <= 180.0):
            raise ValidationError(f"longitude {self.longitude} outside (-180, 180]")


@dataclass(frozen=True)
class SolarPosition:
    """Solar angles in degrees; azimuth is clockwise from due south."""

    zenith: float
    azimuth: float

    def __post_init__(self):
        if not (0.0 <= self.zenith <= 180.0):
            raise ValidationError(f"zenith {self.zenith} outside [0, 180]")
        if not (0.0 <= self.azimuth < 360.0):
            raise ValidationError(f"azimuth {self.azimuth} outside [0, 360)")

    @property
    def above_horizon(self) -> bool:
        return self.zenith <= 90.0


def _require_aware(t: datetime) -> datetime:
    if not isinstance(t, datetime):
        raise ValidationError(f"expected a datetime, got {type(t).__name__}")
    if t.tzinfo is None or t.utcoffset() is None:
        raise ValidationError("timestamp must carry an explicit UTC offset")
    return t


def julian_time(t: datetime) -> float:
    """Continuous Julian day number of an offset-aware timestamp."""
    t = _require_aware(t)
    return _UNIX_EPOCH_JD + t.timestamp() / 86400.0


def reference_coordinate(grid) -> GeoCoordinate:
    """Arithmetic mean of the longitudes and latitudes of a coordinate list."""
    coords = list(grid)
    if not coords:
        raise ValidationError("cannot average an empty coordinate list")
    lon = sum(c.longitude for c in coords) / len(coords)
    lat = sum(c.latitude for c in coords) / len(coords)
    return GeoCoordinate(longitude=lon, latitude=lat)


def _refraction_degrees(elevation: float) -> float:
    # NOAA atmospheric refraction at standard pressure/temperature; zero
    # above 85 degrees and below the -0.575 degree cutoff.
    if elevation > 85.0:
        return 0.0
    if elevation > 5.0:
        te = math.tan(math.radians(elevation))
        r = 58.1 / te - 0.07 / te**3 + 0.000086 / te**5
    elif elevation > -0.575:
        r = 1735.0 + elevation * (
            -518.2 + elevation * (103.4 + elevation * (-12.79 + elevation * 0.711))
        )
    else:
        return 0.0
    return r / 3600.0


def solar_position(t: datetime, loc: GeoCoordinate) -> SolarPosition:
    """Zenith/azimuth of the sun at instant ``t`` seen from ``loc``.

    ``t`` must be offset-aware and fall within years 1900-2100, the range
    over which the truncated ephemeris stays within tolerance.
    """
    t = _require_aware(t)
    if not isinstance(loc, GeoCoordinate):
        loc = GeoCoordinate(*loc)
    jd = julian_time(t)
    utc_year = t.astimezone(timezone.utc).year
    if not (_YEAR_MIN <= utc_year <= _YEAR_MAX):
        raise OutOfRangeError(
            f"timestamp year {utc_year} outside validity range "
            f"[{_YEAR_MIN}, {_YEAR_MAX}]"
        )

    jc = (jd - J2000_JD) / 36525.0

    # Geometric mean longitude and anomaly of the sun (degrees).
    l0 = (280.46646 + jc * (36000.76983 + jc * 0.0003032)) % 360.0
    m = 357.52911 + jc * (35999.05029 - 0.0001537 * jc)
    ecc = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc)

    m_rad = math.radians(m)
    eq_center = (
        math.sin(m_rad) * (1.914602 - jc * (0.004817 + 0.000014 * jc))
        + math.sin(2 * m_rad) * (0.019993 - 0.000101 * jc)
        + math.sin(3 * m_rad) * 0.000289
    )
    true_long = l0 + eq_center
    omega = 125.04 - 1934.136 * jc
    app_long = true_long - 0.00569 - 0.00478 * math.sin(math.radians(omega))

    # Obliquity of the ecliptic, corrected for nutation.
    seconds = 21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))
    eps0 = 23.0 + (26.0 + seconds / 60.0) / 60.0
    eps = eps0 + 0.00256 * math.cos(math.radians(omega))
    eps_rad = math.radians(eps)

    decl = math.asin(math.sin(eps_rad) * math.sin(math.radians(app_long)))

    # Equation of time, minutes.
    y = math.tan(eps_rad / 2.0) ** 2
    l0_rad = math.radians(l0)
    eqtime = 4.0 * math.degrees(
        y * math.sin(2 * l0_rad)
        - 2.0 * ecc * math.sin(m_rad)
        + 4.0 * ecc * y * math.sin(m_rad) * math.cos(2 * l0_rad)
        - 0.5 * y * y * math.sin(4 * l0_rad)
        - 1.25 * ecc * ecc * math.sin(2 * m_rad)
    )

    # True solar time via the UTC minutes of day.
    day_frac = (jd - 0.5) % 1.0
    utc_minutes = day_frac * 1440.0
    tst = (utc_minutes + eqtime + 4.0 * loc.longitude) % 1440.0
    ha_rad = math.radians(tst / 4.0 - 180.0)

    lat_rad = math.radians(loc.latitude)
    cos_zen = math.sin(lat_rad) * math.sin(decl) + math.cos(lat_rad) * math.cos(
        decl
    ) * math.cos(ha_rad)
    cos_zen = max(-1.0, min(1.0, cos_zen))
    zenith = math.degrees(math.acos(cos_zen))

    elevation = 90.0 - zenith
    zenith -= _refraction_degrees(elevation)
    zenith = max(0.0, min(180.0, zenith))

    # atan2 form gives azimuth from due south directly (west positive).
    az_south = math.degrees(
        math.atan2(
            math.sin(ha_rad),
            math.cos(ha_rad) * math.sin(lat_rad) - math.tan(decl) * math.cos(lat_rad),
        )
    )
    return SolarPosition(zenith=zenith, azimuth=az_south % 360.0)
