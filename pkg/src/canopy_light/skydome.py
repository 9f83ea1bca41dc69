"""Discretised hemispherical sky.

Sky nodes sit on the vertices of a subdivided icosahedron (vertex up). Diffuse
irradiance is spread over them with the CIE general sky luminance pattern, and
direct irradiance goes either into a dedicated node at the solar position or into
the nearest existing node.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .weather import (
    IrradianceSplit,
    SolarPosition,
    TimeLike,
    WeatherSeries,
    angles_from_direction,
    decompose,
    direction_from_angles,
    solar_position,
    to_posix,
)

DIFFUSE = 0
SUN = 1
KIND_NAMES = {DIFFUSE: "diffuse", SUN: "sun"}

# zenith clamp inside the gradation term, which has a pole at the horizon
MAX_GRADATION_ZENITH = 89.5


class CieParameters(NamedTuple):
    a: float
    b: float
    c: float
    d: float
    e: float
    sky_type: int


CIE_TABLE = (
    (0.25, CieParameters(-1.0, -0.32, 10.0, -3.0, 0.45, 12)),
    (0.50, CieParameters(-1.0, -0.55, 10.0, -3.0, 0.45, 11)),
    (0.75, CieParameters(0.0, -1.0, 5.0, -2.5, 0.30, 7)),
    (1.00, CieParameters(4.0, -0.7, 2.0, -1.5, 0.15, 1)),
)


def cie_parameters(d_frac: float) -> CieParameters:
    """Sky type for a diffuse fraction; bins are closed on the upper bound."""
    if not 0.0 <= d_frac <= 1.0:
        raise ValueError(f"diffuse fraction {d_frac} outside [0, 1]")
    for upper, params in CIE_TABLE:
        if d_frac <= upper:
            return params
    raise AssertionError("unreachable")


def cie_by_type(sky_type: int) -> CieParameters:
    for _, params in CIE_TABLE:
        if params.sky_type == sky_type:
            return params
    raise ValueError(f"unsupported CIE sky type {sky_type}")


def _icosahedron() -> tuple[np.ndarray, list[tuple[int, int, int]]]:
    z = 1.0 / np.sqrt(5.0)
    r = 2.0 / np.sqrt(5.0)
    verts = [(0.0, 0.0, 1.0)]
    for k in range(5):
        a = np.radians(72.0 * k)
        verts.append((r * np.sin(a), r * np.cos(a), z))
    for k in range(5):
        a = np.radians(36.0 + 72.0 * k)
        verts.append((r * np.sin(a), r * np.cos(a), -z))
    verts.append((0.0, 0.0, -1.0))
    faces = []
    for k in range(5):
        u0, u1 = 1 + k, 1 + (k + 1) % 5
        l0, l1 = 6 + k, 6 + (k + 1) % 5
        faces.append((0, u0, u1))
        faces.append((u0, l0, u1))
        faces.append((u1, l0, l1))
        faces.append((11, l1, l0))
    return np.array(verts), faces


@lru_cache(maxsize=None)
def geodesic_hemisphere(frequency: int) -> np.ndarray:
    """Unit vectors of a frequency-``frequency`` geodesic sphere with z >= 0.

    Ordered from the zenith down, then by azimuth, so the output is deterministic.
    """
    if frequency < 1:
        raise ValueError("frequency must be >= 1")
    verts, faces = _icosahedron()
    pts = []
    for ia, ib, ic in faces:
        a, b, c = verts[ia], verts[ib], verts[ic]
        for i in range(frequency + 1):
            for j in range(frequency + 1 - i):
                pts.append(a + (b - a) * (i / frequency) + (c - a) * (j / frequency))
    pts = np.array(pts)
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    pts[np.abs(pts) < 1e-12] = 0.0
    _, first = np.unique(np.round(pts, 9), axis=0, return_index=True)
    pts = pts[np.sort(first)]
    pts = pts[pts[:, 2] >= 0.0]
    az, el = angles_from_direction(pts)
    order = np.lexsort((np.round(az, 9), -np.round(el, 9)))
    out = pts[order]
    out.setflags(write=False)
    return out


def hemisphere_count(frequency: int) -> int:
    return len(geodesic_hemisphere(frequency))


def build_hemisphere(target_resolution: int) -> np.ndarray:
    """Smallest geodesic hemisphere with at least ``target_resolution`` nodes."""
    if target_resolution < 1:
        raise ValueError("sky resolution must be >= 1")
    frequency = 1
    while hemisphere_count(frequency) < target_resolution:
        frequency += 1
    return geodesic_hemisphere(frequency)


def relative_luminance(node_zenith, sun_zenith, azimuth_delta, params: CieParameters):
    """CIE relative sky luminance, product of scattering indicatrix and gradation.

    Angles in degrees; vectorises over numpy inputs.
    """
    z = np.radians(np.asarray(node_zenith, dtype=float))
    zs = np.radians(np.asarray(sun_zenith, dtype=float))
    az = np.radians(np.asarray(azimuth_delta, dtype=float))
    cos_chi = np.cos(zs) * np.cos(z) + np.sin(zs) * np.sin(z) * np.cos(az)
    chi = np.arccos(np.clip(cos_chi, -1.0, 1.0))
    indicatrix = (
        1.0
        + params.c * (np.exp(params.d * chi) - np.exp(params.d * np.pi / 2.0))
        + params.e * np.cos(chi) ** 2
    )
    z_clamped = np.minimum(z, np.radians(MAX_GRADATION_ZENITH))
    gradation = 1.0 + params.a * np.exp(params.b / np.cos(z_clamped))
    return indicatrix * gradation


def distribute_diffuse(
    diffuse_total: float,
    directions: np.ndarray,
    sun: SolarPosition,
    params: CieParameters,
) -> np.ndarray:
    """Share ``diffuse_total`` over nodes in proportion to relative luminance."""
    directions = np.atleast_2d(directions)
    if len(directions) == 0:
        raise ValueError("at least one sky node is required")
    if diffuse_total < 0:
        raise ValueError("diffuse irradiance must be non-negative")
    az, el = angles_from_direction(directions)
    # the sun may be below the horizon at twilight; the luminance model needs Zs <= 90
    sun_zenith = min(max(sun.zenith, 0.0), 90.0)
    lrel = relative_luminance(90.0 - el, sun_zenith, az - sun.azimuth, params)
    total = lrel.sum()
    if not total > 0:
        return np.full(len(directions), diffuse_total / len(directions))
    return diffuse_total * (lrel / total)


@dataclass(frozen=True)
class SkyDome:
    """Discrete sky: unit directions (ENU), per-node values and node kinds.

    ``values`` are W/m2 for instantaneous domes and J/m2 for composite ones.
    """

    directions: np.ndarray
    values: np.ndarray
    kinds: np.ndarray
    resolution: int
    mode: str = "instantaneous"
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        d = np.atleast_2d(np.asarray(self.directions, dtype=float)).reshape(-1, 3)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        k = np.asarray(self.kinds, dtype=np.int8).reshape(-1)
        if not len(d) == len(v) == len(k):
            raise ValueError("directions, values and kinds must have equal length")
        if self.mode not in ("instantaneous", "composite"):
            raise ValueError(f"unknown dome mode {self.mode!r}")
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "kinds", k)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def azimuth(self) -> np.ndarray:
        return angles_from_direction(self.directions)[0]

    @property
    def elevation(self) -> np.ndarray:
        return angles_from_direction(self.directions)[1]

    @property
    def zenith(self) -> np.ndarray:
        return 90.0 - self.elevation

    @property
    def total(self) -> float:
        return float(self.values.sum())

    @property
    def diffuse_total(self) -> float:
        return float(self.values[self.kinds == DIFFUSE].sum())

    def scaled(self, factor: float) -> "SkyDome":
        return SkyDome(
            self.directions, self.values * factor, self.kinds, self.resolution, self.mode,
            dict(self.provenance),
        )

    def to_rows(self) -> list[tuple[float, float, float, str]]:
        az, el = angles_from_direction(self.directions)
        return [
            (float(a), float(e), float(v), KIND_NAMES[int(k)])
            for a, e, v, k in zip(az, el, self.values, self.kinds)
        ]


def nearest_node(directions: np.ndarray, target: np.ndarray) -> int:
    """Index of the node closest in angle to ``target``; ties go to the lowest index."""
    return int(np.argmax(directions @ np.asarray(target, dtype=float)))


def instantaneous_sky(
    split: IrradianceSplit,
    sun: SolarPosition,
    resolution: int,
    dedicated_sun: bool = True,
    include_diffuse: bool = True,
    directions: np.ndarray | None = None,
) -> SkyDome:
    """Sky for a single instant.

    Args:
        split: Direct/diffuse decomposition at the instant.
        sun: Solar position at the instant.
        resolution: Requested number of diffuse nodes.
        dedicated_sun: Put direct light in its own node at the exact solar
            direction instead of snapping it to the nearest diffuse node.
        include_diffuse: When False, all light (direct plus diffuse) goes into the
            sun node and the dome carries no diffuse nodes.
        directions: Precomputed node directions; overrides ``resolution``.
    """
    if directions is None:
        directions = build_hemisphere(resolution)
    sun_dir = sun.direction
    provenance = {"sun_azimuth": sun.azimuth, "sun_elevation": sun.elevation}

    if not include_diffuse:
        total = split.direct + split.diffuse
        if sun.elevation <= 0 or total == 0:
            return SkyDome(np.zeros((0, 3)), [], [], 0, provenance=provenance)
        return SkyDome(sun_dir[None, :], [total], [SUN], 0, provenance=provenance)

    params = cie_parameters(split.diffuse_fraction)
    values = distribute_diffuse(split.diffuse, directions, sun, params)
    kinds = np.full(len(directions), DIFFUSE, dtype=np.int8)
    provenance["sky_type"] = params.sky_type
    direct = split.direct if sun.elevation > 0 else 0.0

    if dedicated_sun:
        if direct > 0:
            directions = np.vstack([directions, sun_dir])
            values = np.append(values, direct)
            kinds = np.append(kinds, np.int8(SUN))
    elif direct > 0:
        values = values.copy()
        values[nearest_node(directions, sun_dir)] += direct
    return SkyDome(directions, values, kinds, len(kinds[kinds == DIFFUSE]), provenance=provenance)


def sky_at(
    series: WeatherSeries,
    time: TimeLike,
    resolution: int,
    dedicated_sun: bool = True,
    include_diffuse: bool = True,
    horizontal_h0: bool = False,
) -> SkyDome:
    """Decompose the weather record at ``time`` and build the instantaneous dome."""
    t = to_posix(time)
    split = decompose(series, t, horizontal_h0=horizontal_h0)
    sun = solar_position(series.location, t)
    dome = instantaneous_sky(split, sun, resolution, dedicated_sun, include_diffuse)
    dome.provenance.update(time=t, diffuse_fraction=split.diffuse_fraction)
    return dome


def composite_sky(
    series: WeatherSeries,
    start: TimeLike,
    end: TimeLike,
    step: float = 1800.0,
    resolution: int = 19,
    horizontal_h0: bool = False,
) -> SkyDome:
    """Energy-weighted (J/m2) sum of snapped instantaneous skies over ``[start, end)``.

    Each step contributes the sky at its start instant multiplied by ``step``
    seconds.
    """
    t0, t1 = to_posix(start), to_posix(end)
    if step <= 0:
        raise ValueError("step must be positive")
    if t1 <= t0:
        raise ValueError("empty composite timespan")
    directions = build_hemisphere(resolution)
    energy = np.zeros(len(directions))
    n_steps = int(np.ceil((t1 - t0) / step - 1e-9))
    for k in range(n_steps):
        t = t0 + k * step
        split = decompose(series, t, horizontal_h0=horizontal_h0)
        if split.global_irradiance == 0:
            continue
        sun = solar_position(series.location, t)
        dome = instantaneous_sky(split, sun, resolution, dedicated_sun=False, directions=directions)
        energy += dome.values * step
    return SkyDome(
        directions,
        energy,
        np.zeros(len(directions), dtype=np.int8),
        len(directions),
        mode="composite",
        provenance={"start": t0, "end": t1, "step": step},
    )


def save_dome(dome: SkyDome, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["azimuth_deg", "elevation_deg", "value", "kind"])
        for az, el, v, kind in dome.to_rows():
            w.writerow([repr(az), repr(el), repr(v), kind])


def load_dome(path, mode: str = "instantaneous") -> SkyDome:
    az, el, vals, kinds = [], [], [], []
    names = {v: k for k, v in KIND_NAMES.items()}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["azimuth_deg", "elevation_deg", "value", "kind"]:
            raise ValueError(f"{path}: expected header 'azimuth_deg,elevation_deg,value,kind'")
        for lineno, row in enumerate(reader, start=2):
            try:
                az.append(float(row[0]))
                el.append(float(row[1]))
                vals.append(float(row[2]))
                kinds.append(names[row[3]])
            except (ValueError, IndexError, KeyError):
                raise ValueError(f"{path}:{lineno}: malformed dome row") from None
    dirs = direction_from_angles(np.array(az), np.array(el)).reshape(-1, 3)
    kinds_arr = np.array(kinds, dtype=np.int8)
    return SkyDome(dirs, vals, kinds_arr, int((kinds_arr == DIFFUSE).sum()), mode=mode)
