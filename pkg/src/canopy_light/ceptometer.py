"""Virtual ceptometer readings, PAR conversion and open-air calibration."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .radiance import EnergyField
from .skydome import SkyDome
from .weather import TimeLike, format_time, parse_time, to_posix

PAR_PER_WATT = 1.72
DEFAULT_RADIUS = 0.4
ROW_SPACING = 1.0
COLUMN_SPACING = 0.8
LOG_TOLERANCE = 60.0


class CalibrationError(ValueError):
    pass


class CeptometerReading(NamedTuple):
    """Mean PAR of the instrument's sensors at a measurement-grid position.

    ``row`` runs along the orchard row and ``col`` across it, both in metres.
    """

    timestamp: float
    row: float
    col: float
    par: float


@dataclass(frozen=True)
class OpenAirLog:
    """Unshaded reference ceptometer, normally logged once a minute."""

    times: np.ndarray
    par: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        par = np.asarray(self.par, dtype=float)
        if times.shape != par.shape:
            raise ValueError("times and par must have equal length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("open-air log timestamps must be increasing")
        if np.any(par < 0):
            raise ValueError("PAR must be non-negative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "par", par)

    def at(self, time: TimeLike, tolerance: float = LOG_TOLERANCE) -> float:
        """Reading nearest to ``time``; it must lie within ``tolerance`` seconds."""
        t = to_posix(time)
        if len(self.times) == 0:
            raise CalibrationError("open-air log is empty")
        i = int(np.searchsorted(self.times, t))
        cands = [j for j in (i - 1, i) if 0 <= j < len(self.times)]
        j = min(cands, key=lambda j: abs(self.times[j] - t))
        if abs(self.times[j] - t) > tolerance:
            raise CalibrationError(f"no open-air reading within {tolerance:g} s of {format_time(t)}")
        return float(self.par[j])


def par_from_irradiance(irr):
    """Full-spectrum irradiance (W/m2) to PAR (umol/s/m2)."""
    if np.any(np.asarray(irr) < 0):
        raise ValueError("irradiance must be non-negative")
    return PAR_PER_WATT * irr


def open_air_irradiance(dome: SkyDome) -> float:
    """Irradiance on an unshaded horizontal sensor under an instantaneous dome."""
    if dome.mode != "instantaneous":
        raise ValueError("open-air calibration needs an instantaneous dome")
    if len(dome) == 0:
        return 0.0
    cos_zen = np.clip(dome.directions[:, 2], 0.0, None)
    return float(np.sum(dome.values * cos_zen))


def calibrated_par(
    model_irr,
    log: OpenAirLog | None,
    time: TimeLike | None,
    dome: SkyDome | None,
):
    """Scale modelled irradiance to PAR with the open-air ratio O_PAR / O_irr.

    Without a log this falls back to the constant conversion factor.
    """
    if log is None:
        return par_from_irradiance(model_irr)
    o_par = log.at(time)
    o_irr = open_air_irradiance(dome)
    if o_irr == 0.0:
        if o_par > 0.0:
            raise CalibrationError("modelled open-air irradiance is zero but PAR was measured")
        return 0.0 * np.asarray(model_irr)
    # ratio first so an unshaded sensor reproduces O_PAR exactly
    return o_par * (np.asarray(model_irr, dtype=float) / o_irr)


def sample_virtual(
    field: EnergyField,
    location,
    radius: float = DEFAULT_RADIUS,
) -> float:
    """Mean horizontal irradiance over ground cells whose centre lies within
    ``radius`` of ``location`` (x, y)."""
    x, y = float(location[0]), float(location[1])
    g = field.ground
    if not g.contains(x, y):
        raise ValueError(f"location ({x:.3f}, {y:.3f}) is outside the ground grid")
    cx = g.x0 + (np.arange(g.nx) + 0.5) * g.cell
    cy = g.y0 + (np.arange(g.ny) + 0.5) * g.cell
    ix = np.flatnonzero(np.abs(cx - x) <= radius)
    iy = np.flatnonzero(np.abs(cy - y) <= radius)
    if len(ix) == 0 or len(iy) == 0:
        raise ValueError(f"no ground cells within {radius} m of ({x:.3f}, {y:.3f})")
    dx = cx[ix][None, :] - x
    dy = cy[iy][:, None] - y
    mask = dx * dx + dy * dy <= radius * radius
    if not mask.any():
        raise ValueError(f"no ground cells within {radius} m of ({x:.3f}, {y:.3f})")
    total = 0.0
    for n in field.reduction_order:
        cos_zen = max(field.directions[n, 2], 0.0)
        if cos_zen == 0.0:
            continue
        window = field.arrivals[n][np.ix_(iy, ix)]
        total += cos_zen * float(window[mask].mean())
    return total


def sample_many(field: EnergyField, locations, radius: float = DEFAULT_RADIUS) -> np.ndarray:
    return np.array([sample_virtual(field, loc, radius) for loc in locations])


def grid_to_world(row, col, origin=(0.0, 0.0), row_azimuth: float = 90.0) -> np.ndarray:
    """Measurement-grid coordinates to world (x, y).

    ``row_azimuth`` is the compass bearing of the orchard row (90 = row runs east);
    ``col`` increases 90 degrees clockwise of it.
    """
    a = np.radians(row_azimuth)
    along = np.array([np.sin(a), np.cos(a)])
    across = np.array([np.cos(a), -np.sin(a)])
    row = np.asarray(row, dtype=float)[..., None]
    col = np.asarray(col, dtype=float)[..., None]
    return np.asarray(origin, dtype=float) + row * along + col * across


def load_readings(path: str | Path) -> list[CeptometerReading]:
    """Read a ``timestamp_iso8601,row_m,col_m,par_umol`` CSV."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["timestamp_iso8601", "row_m", "col_m", "par_umol"]:
            raise ValueError(f"{path}: expected header 'timestamp_iso8601,row_m,col_m,par_umol'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                reading = CeptometerReading(parse_time(row[0]), float(row[1]), float(row[2]), float(row[3]))
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: malformed ceptometer row") from None
            if reading.par < 0:
                raise ValueError(f"{path}:{lineno}: negative PAR")
            out.append(reading)
    return out


def save_readings(readings, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp_iso8601", "row_m", "col_m", "par_umol"])
        for r in readings:
            w.writerow([format_time(r.timestamp), repr(float(r.row)), repr(float(r.col)), repr(float(r.par))])


def load_open_air(path: str | Path) -> OpenAirLog:
    """Read a ``timestamp_iso8601,par_umol`` CSV."""
    times, par = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["timestamp_iso8601", "par_umol"]:
            raise ValueError(f"{path}: expected header 'timestamp_iso8601,par_umol'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                times.append(parse_time(row[0]))
                par.append(float(row[1]))
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: malformed open-air row") from None
    return OpenAirLog(np.array(times), np.array(par))


def save_open_air(log: OpenAirLog, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp_iso8601", "par_umol"])
        for t, p in zip(log.times, log.par):
            w.writerow([format_time(t), repr(float(p))])
