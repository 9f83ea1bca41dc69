"""Solar geometry and the direct/diffuse split of measured global irradiance.

Times are handled as POSIX seconds (UTC) internally; public functions also accept
timezone-aware :class:`datetime.datetime` objects. All angles are in degrees.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Mapping, NamedTuple, Union

import numpy as np

SOLAR_CONSTANT = 1370.0
SECONDS_PER_DAY = 86400.0

TimeLike = Union[datetime, float, int]


def to_posix(t: TimeLike) -> float:
    """Convert a datetime (naive values are taken as UTC) or POSIX number to seconds."""
    if isinstance(t, datetime):
        if t.tzinfo is None:
            t = t.replace(tzinfo=timezone.utc)
        return t.timestamp()
    return float(t)


def from_posix(t: float) -> datetime:
    return datetime.fromtimestamp(t, tz=timezone.utc)


def parse_time(text: str) -> float:
    """Parse an ISO 8601 timestamp to POSIX seconds. A trailing ``Z`` is accepted."""
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return to_posix(datetime.fromisoformat(text))


def format_time(t: float) -> str:
    return from_posix(t).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class GeoLocation:
    latitude: float
    longitude: float
    timezone_offset: float = 0.0

    def __post_init__(self) -> None:
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")

    def local_date(self, t: TimeLike) -> date:
        return (from_posix(to_posix(t)) + timedelta(hours=self.timezone_offset)).date()

    def day_bounds(self, t: TimeLike) -> tuple[float, float]:
        """POSIX bounds ``[start, end)`` of the local calendar day containing ``t``."""
        d = self.local_date(t)
        start = datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp()
        start -= self.timezone_offset * 3600.0
        return start, start + SECONDS_PER_DAY


class WeatherSample(NamedTuple):
    timestamp: float
    global_irradiance: float


class SolarPosition(NamedTuple):
    """Sun position; azimuth clockwise from true north."""

    azimuth: float
    elevation: float
    zenith: float

    @property
    def direction(self) -> np.ndarray:
        """Unit vector towards the sun in the east-north-up frame."""
        return direction_from_angles(self.azimuth, self.elevation)


class IrradianceSplit(NamedTuple):
    diffuse_fraction: float
    direct: float
    diffuse: float
    clearness: float
    daily_clearness: float
    persistence: float
    global_irradiance: float
    apparent_solar_time: float
    elevation: float


def direction_from_angles(azimuth, elevation) -> np.ndarray:
    """ENU unit vector(s) for azimuth (clockwise from north) and elevation."""
    az = np.radians(azimuth)
    el = np.radians(elevation)
    return np.stack(
        [np.cos(el) * np.sin(az), np.cos(el) * np.cos(az), np.sin(el)], axis=-1
    )


def angles_from_direction(direction) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`direction_from_angles`; returns (azimuth, elevation)."""
    d = np.asarray(direction, dtype=float)
    az = np.degrees(np.arctan2(d[..., 0], d[..., 1])) % 360.0
    el = np.degrees(np.arcsin(np.clip(d[..., 2], -1.0, 1.0)))
    return az, el


def day_of_year(t: TimeLike, location: GeoLocation | None = None) -> int:
    if location is None:
        return from_posix(to_posix(t)).timetuple().tm_yday
    return location.local_date(t).timetuple().tm_yday


def _solar_angles(times: np.ndarray, latitude: float, longitude: float):
    """NOAA / Meeus low-precision solar ephemeris (about 0.01 deg for 1950-2050).

    Returns azimuth and geometric elevation arrays, no refraction.
    """
    jd = times / SECONDS_PER_DAY + 2440587.5
    T = (jd - 2451545.0) / 36525.0

    L0 = np.radians((280.46646 + T * (36000.76983 + 0.0003032 * T)) % 360.0)
    M = np.radians(357.52911 + T * (35999.05029 - 0.0001537 * T))
    ecc = 0.016708634 - T * (0.000042037 + 0.0000001267 * T)
    centre = (
        np.sin(M) * (1.914602 - T * (0.004817 + 0.000014 * T))
        + np.sin(2 * M) * (0.019993 - 0.000101 * T)
        + np.sin(3 * M) * 0.000289
    )
    omega = np.radians(125.04 - 1934.136 * T)
    apparent_long = np.radians(
        np.degrees(L0) + centre - 0.00569 - 0.00478 * np.sin(omega)
    )
    mean_obliq = 23.0 + (26.0 + (21.448 - T * (46.815 + T * (0.00059 - T * 0.001813))) / 60.0) / 60.0
    obliq = np.radians(mean_obliq + 0.00256 * np.cos(omega))
    decl = np.arcsin(np.sin(obliq) * np.sin(apparent_long))

    y = np.tan(obliq / 2.0) ** 2
    eot = 4.0 * np.degrees(
        y * np.sin(2 * L0)
        - 2 * ecc * np.sin(M)
        + 4 * ecc * y * np.sin(M) * np.cos(2 * L0)
        - 0.5 * y * y * np.sin(4 * L0)
        - 1.25 * ecc * ecc * np.sin(2 * M)
    )
    minutes = (times % SECONDS_PER_DAY) / 60.0
    true_solar = (minutes + eot + 4.0 * longitude) % 1440.0
    hour_angle = np.radians(true_solar / 4.0 - 180.0)

    lat = np.radians(latitude)
    cos_zen = np.sin(lat) * np.sin(decl) + np.cos(lat) * np.cos(decl) * np.cos(hour_angle)
    elevation = np.degrees(np.arcsin(np.clip(cos_zen, -1.0, 1.0)))
    azimuth = (
        np.degrees(
            np.arctan2(
                np.sin(hour_angle),
                np.cos(hour_angle) * np.sin(lat) - np.tan(decl) * np.cos(lat),
            )
        )
        + 180.0
    ) % 360.0
    return azimuth, elevation


def solar_position(location: GeoLocation, time: TimeLike) -> SolarPosition:
    az, el = _solar_angles(np.array([to_posix(time)]), location.latitude, location.longitude)
    el = float(el[0])
    return SolarPosition(float(az[0]), el, 90.0 - el)


def equation_of_time(day: int) -> float:
    """Apparent minus mean solar time in minutes for day-of-year ``day``."""
    b = math.radians(360.0 * (day - 81) / 365.0)
    return 9.87 * math.sin(2 * b) - 7.67 * math.sin(b + math.radians(78.7))


def apparent_solar_time(time: TimeLike, location: GeoLocation) -> float:
    """Apparent solar time in decimal hours, in ``[0, 24)``."""
    t = to_posix(time)
    mean_solar = (t % SECONDS_PER_DAY) / 3600.0 + location.longitude / 15.0
    n = day_of_year(t, location)
    return (mean_solar + equation_of_time(n) / 60.0) % 24.0


def extraterrestrial_irradiance(day_of_year: int) -> float:
    if not 1 <= day_of_year <= 366:
        raise ValueError(f"day of year {day_of_year} outside [1, 366]")
    return SOLAR_CONSTANT * (1.0 + 0.033412 * math.cos(2.0 * math.pi * (day_of_year - 3) / 365.0))


def diffuse_fraction(clearness, ast, elevation, daily_clearness, persistence):
    """Logistic diffuse-fraction model of global irradiance.

    ``ast`` is in decimal hours and ``elevation`` in degrees. Vectorises over
    numpy inputs.
    """
    exponent = (
        -5.38
        + 6.63 * np.asarray(clearness)
        + 0.006 * np.asarray(ast)
        - 0.007 * np.asarray(elevation)
        + 1.75 * np.asarray(daily_clearness)
        + 1.31 * np.asarray(persistence)
    )
    out = 1.0 / (1.0 + np.exp(exponent))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class WeatherSeries:
    """Time-ordered global irradiance samples at one location.

    ``times`` holds POSIX seconds (UTC); ``global_wm2`` the matching W/m2 values.
    """

    location: GeoLocation
    times: np.ndarray
    global_wm2: np.ndarray
    _day_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.global_wm2, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise ValueError("times and global_wm2 must be 1-D arrays of equal length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("weather timestamps must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("global irradiance must be finite and non-negative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "global_wm2", values)

    @classmethod
    def from_samples(cls, location: GeoLocation, samples) -> "WeatherSeries":
        samples = list(samples)
        return cls(
            location,
            np.array([to_posix(s[0]) for s in samples], dtype=float),
            np.array([s[1] for s in samples], dtype=float),
        )

    @property
    def samples(self) -> list[WeatherSample]:
        return [WeatherSample(float(t), float(v)) for t, v in zip(self.times, self.global_wm2)]

    def __len__(self) -> int:
        return len(self.times)

    def irradiance_at(self, time: TimeLike) -> float:
        t = to_posix(time)
        if len(self.times) == 0 or t < self.times[0] or t > self.times[-1]:
            raise ValueError(f"time {format_time(t)} outside the weather record")
        return float(np.interp(t, self.times, self.global_wm2))

    def shifted(self, seconds: float) -> "WeatherSeries":
        return WeatherSeries(self.location, self.times + seconds, self.global_wm2.copy())

    def merged(self, other: "WeatherSeries") -> "WeatherSeries":
        """Union of two series; samples of ``self`` win on identical timestamps."""
        times = np.concatenate([self.times, other.times])
        values = np.concatenate([self.global_wm2, other.global_wm2])
        order = np.argsort(times, kind="stable")
        times, values = times[order], values[order]
        keep = np.concatenate([[True], np.diff(times) > 0])
        return WeatherSeries(self.location, times[keep], values[keep])

    def _day(self, t: float):
        start, end = self.location.day_bounds(t)
        cached = self._day_cache.get(start)
        if cached is None:
            lo, hi = np.searchsorted(self.times, [start, end], side="left")
            cached = (lo, hi)
            self._day_cache[start] = cached
        return cached


def decompose(
    series: WeatherSeries,
    time: TimeLike,
    horizontal_h0: bool = False,
) -> IrradianceSplit:
    """Split interpolated global irradiance at ``time`` into direct and diffuse parts.

    With ``horizontal_h0`` the extraterrestrial irradiance is projected onto the
    horizontal plane (multiplied by the sine of solar elevation) before forming the
    clearness indices.
    """
    t = to_posix(time)
    loc = series.location
    lo, hi = series._day(t)
    if hi <= lo:
        raise ValueError(f"no weather samples on the local day of {format_time(t)}")
    i_global = series.irradiance_at(t)
    sun = solar_position(loc, t)
    ast = apparent_solar_time(t, loc)
    h0 = extraterrestrial_irradiance(day_of_year(t, loc))

    if sun.elevation <= 0.0:
        return IrradianceSplit(1.0, 0.0, i_global, 0.0, 0.0, 0.0, i_global, ast, sun.elevation)

    day_times = series.times[lo:hi]
    day_values = series.global_wm2[lo:hi]
    _, day_elev = _solar_angles(day_times, loc.latitude, loc.longitude)
    if horizontal_h0:
        day_h0 = h0 * np.maximum(np.sin(np.radians(day_elev)), 0.0)
        kt = i_global / (h0 * math.sin(math.radians(sun.elevation)))
        sample_kt = np.divide(day_values, day_h0, out=np.zeros_like(day_values), where=day_h0 > 0)
    else:
        day_h0 = np.full_like(day_values, h0)
        kt = i_global / h0
        sample_kt = day_values / h0
    total_h0 = day_h0.sum()
    daily_kt = float(day_values.sum() / total_h0) if total_h0 > 0 else 0.0

    # neighbours must be daylight samples of the same day
    daylight = day_elev > 0.0
    k = np.searchsorted(day_times, t, side="left")
    exact = k < len(day_times) and day_times[k] == t
    before = k - 1
    after = k + 1 if exact else k
    neighbours = [
        sample_kt[j] for j in (before, after) if 0 <= j < len(day_times) and daylight[j]
    ]
    persistence = float(np.mean(neighbours)) if neighbours else float(kt)

    d_frac = diffuse_fraction(kt, ast, sun.elevation, daily_kt, persistence)
    # the larger share is within a factor two of the total, so subtracting it is
    # exact and direct + diffuse reproduces the total bit for bit
    if d_frac >= 0.5:
        diffuse = d_frac * i_global
        direct = i_global - diffuse
    else:
        direct = (1.0 - d_frac) * i_global
        diffuse = i_global - direct
    return IrradianceSplit(
        d_frac, direct, diffuse, float(kt), daily_kt, persistence, i_global, ast, sun.elevation
    )


def synthesize_from_daily(
    daily_exposure: Mapping[date, float],
    overlap: WeatherSeries,
    step: float = 1800.0,
) -> WeatherSeries:
    """Build station-like series for days that only have a daily exposure record.

    The mean diurnal profile of days present in both sources is rescaled so that its
    integral matches each target day's exposure (MJ/m2). Only days absent from
    ``overlap`` are generated.
    """
    loc = overlap.location
    station_days: dict[date, list[int]] = {}
    for i, t in enumerate(overlap.times):
        station_days.setdefault(loc.local_date(t), []).append(i)
    common = sorted(d for d in station_days if d in daily_exposure)
    if not common:
        raise ValueError("no day has both station data and a daily exposure record")

    slots = int(round(SECONDS_PER_DAY / step))
    profile_sum = np.zeros(slots)
    profile_n = np.zeros(slots)
    for d in common:
        idx = np.array(station_days[d])
        start, _ = loc.day_bounds(overlap.times[idx[0]])
        slot = np.floor((overlap.times[idx] - start) / step).astype(int)
        np.add.at(profile_sum, slot, overlap.global_wm2[idx])
        np.add.at(profile_n, slot, 1.0)
    profile = np.divide(profile_sum, profile_n, out=np.zeros(slots), where=profile_n > 0)
    profile_mj = profile.sum() * step / 1e6
    if profile_mj <= 0:
        raise ValueError("overlap days carry no irradiance")

    times, values = [], []
    for d in sorted(daily_exposure):
        if d in station_days:
            continue
        start = datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp()
        start -= loc.timezone_offset * 3600.0
        times.append(start + step * np.arange(slots))
        values.append(profile * (daily_exposure[d] / profile_mj))
    if not times:
        return WeatherSeries(loc, np.array([]), np.array([]))
    return WeatherSeries(loc, np.concatenate(times), np.concatenate(values))


def load_weather(path: str | Path, location: GeoLocation) -> WeatherSeries:
    """Read a ``timestamp_iso8601,global_wm2`` CSV file."""
    times, values = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp_iso8601", "global_wm2"]:
            raise ValueError(f"{path}: expected header 'timestamp_iso8601,global_wm2'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                times.append(parse_time(row[0]))
                values.append(float(row[1]))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed weather row ({exc})") from None
    return WeatherSeries(location, np.array(times), np.array(values))


def save_weather(series: WeatherSeries, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp_iso8601", "global_wm2"])
        for t, v in zip(series.times, series.global_wm2):
            w.writerow([format_time(t), repr(float(v))])


def load_daily_exposure(path: str | Path) -> dict[date, float]:
    """Read a ``date_iso8601,exposure_mj_m2`` CSV file."""
    out: dict[date, float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["date_iso8601", "exposure_mj_m2"]:
            raise ValueError(f"{path}: expected header 'date_iso8601,exposure_mj_m2'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out[date.fromisoformat(row[0].strip())] = float(row[1])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed exposure row ({exc})") from None
    return out
