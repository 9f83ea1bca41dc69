"""Synthetic trees, weather and ceptometer campaigns for self-consistency tests.

Measurements are produced by running the model itself at known "true"
parameters and perturbing the result, so tuning and ablation runs have a known
answer.
"""

from __future__ import annotations

from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import ceptometer as cep
from .cloud import BRANCH, FOLIAGE, LabeledCloud
from .skydome import sky_at
from .tuner import Dataset, ParameterPoint, pair_readings, simulate
from .weather import GeoLocation, WeatherSeries, _solar_angles

BUNDABERG = GeoLocation(-24.85, 152.35, 10.0)


def _ball_lattice(radius: float, spacing: float, shell: float | None = None) -> np.ndarray:
    g = np.arange(-radius, radius + spacing / 2, spacing)
    x, y, z = np.meshgrid(g, g, g, indexing="ij")
    p = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    r = np.linalg.norm(p, axis=1)
    keep = r <= radius
    if shell is not None:
        keep &= r >= radius - shell
    return p[keep]


def opaque_ball(
    radius: float = 0.5,
    centre=(0.0, 0.0, 1.0),
    spacing: float | None = None,
    shell: float | None = None,
    ground_z: float = 0.0,
) -> LabeledCloud:
    """Ball of branch points on a cubic lattice.

    The default spacing, radius / 40, is half the voxel side at s_vox = radius / 20,
    so every voxel inside the ball holds points.
    """
    spacing = spacing or radius / 40.0
    pts = _ball_lattice(radius, spacing, shell) + np.asarray(centre, dtype=float)
    return LabeledCloud(pts, np.full(len(pts), BRANCH), ground_z)


def foliage_shell(
    radius: float = 1.0,
    thickness: float = 0.3,
    centre=(0.0, 0.0, 1.5),
    n_points: int = 5000,
    seed: int = 0,
    ground_z: float = 0.0,
) -> LabeledCloud:
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n_points, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    r = radius - thickness * rng.random(n_points)
    pts = v * r[:, None] + np.asarray(centre, dtype=float)
    return LabeledCloud(pts, np.full(n_points, FOLIAGE), ground_z)


def _ellipsoid(rng, centre, radii, n):
    out = []
    while sum(len(o) for o in out) < n:
        p = rng.uniform(-1.0, 1.0, size=(2 * n, 3))
        p = p[np.sum(p * p, axis=1) <= 1.0]
        out.append(p)
    p = np.concatenate(out)[:n]
    return p * np.asarray(radii) + np.asarray(centre)


def _cylinder(rng, base, top, radius, n):
    base, top = np.asarray(base, float), np.asarray(top, float)
    t = rng.random(n)
    axis = top - base
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 * np.linalg.norm(axis) else np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    w = np.cross(axis / np.linalg.norm(axis), u)
    ang = rng.random(n) * 2 * np.pi
    rr = radius * np.sqrt(rng.random(n))
    return base + t[:, None] * axis + (rr * np.cos(ang))[:, None] * u + (rr * np.sin(ang))[:, None] * w


def asymmetric_canopy(
    n_foliage: int = 12000,
    n_branch: int = 1500,
    seed: int = 1,
    ground_z: float = 0.0,
) -> LabeledCloud:
    """L-shaped crown on a short trunk, with two limbs; clearly not rotation
    symmetric so alignment errors show up in the shadow."""
    rng = np.random.default_rng(seed)
    foliage = np.concatenate(
        [
            _ellipsoid(rng, (0.9, 0.0, 2.3), (1.5, 0.7, 0.7), n_foliage // 2),
            _ellipsoid(rng, (-0.1, 1.1, 2.0), (0.6, 1.3, 0.6), n_foliage - n_foliage // 2),
        ]
    )
    nb = n_branch // 3
    branch = np.concatenate(
        [
            _cylinder(rng, (0.0, 0.0, 0.0), (0.0, 0.0, 1.6), 0.12, nb),
            _cylinder(rng, (0.0, 0.0, 1.4), (1.6, 0.0, 2.2), 0.06, nb),
            _cylinder(rng, (0.0, 0.0, 1.3), (0.0, 1.8, 1.9), 0.06, n_branch - 2 * nb),
        ]
    )
    pts = np.concatenate([foliage, branch])
    labels = np.concatenate([np.full(len(foliage), FOLIAGE), np.full(len(branch), BRANCH)])
    return LabeledCloud(pts, labels, ground_z)


def synthetic_tree(
    n_points: int = 100_000,
    seed: int = 3,
    height: float = 4.0,
    ground_z: float = 0.0,
) -> LabeledCloud:
    """Rounded crown of foliage around a branching trunk, ``n_points`` in total."""
    rng = np.random.default_rng(seed)
    n_branch = n_points // 10
    n_foliage = n_points - n_branch
    crown_z = 0.6 * height
    foliage = _ellipsoid(rng, (0.0, 0.0, crown_z), (1.8, 1.6, 0.4 * height), n_foliage)
    limbs = [((0.0, 0.0, 0.0), (0.0, 0.0, crown_z + 0.5), 0.15)]
    for k in range(5):
        a = 2 * np.pi * k / 5
        limbs.append(((0.0, 0.0, 0.8), (1.4 * np.cos(a), 1.4 * np.sin(a), crown_z + 0.3), 0.05))
    per = n_branch // len(limbs)
    branch = np.concatenate(
        [_cylinder(rng, b, t, r, per if i else n_branch - per * (len(limbs) - 1)) for i, (b, t, r) in enumerate(limbs)]
    )
    pts = np.concatenate([foliage, branch])
    labels = np.concatenate([np.full(len(foliage), FOLIAGE), np.full(len(branch), BRANCH)])
    return LabeledCloud(pts, labels, ground_z)


def clear_sky_weather(
    location: GeoLocation = BUNDABERG,
    start: datetime = datetime(2016, 10, 1, tzinfo=timezone.utc),
    days: int = 3,
    peak: float = 1050.0,
    step: float = 1800.0,
    cloudiness: float = 0.0,
    seed: int = 0,
) -> WeatherSeries:
    """Smooth clear-sky global irradiance, optionally dimmed by random cloud.

    ``cloudiness`` in [0, 1] scales a random per-sample attenuation.
    """
    t0 = start.timestamp() - location.timezone_offset * 3600.0
    times = t0 + step * np.arange(int(days * 86400 / step))
    _, el = _solar_angles(times, location.latitude, location.longitude)
    ghi = peak * np.clip(np.sin(np.radians(el)), 0.0, None) ** 1.15
    if cloudiness > 0:
        rng = np.random.default_rng(seed)
        ghi = ghi * (1.0 - cloudiness * rng.random(len(times)))
    return WeatherSeries(location, times, ghi)


def measurement_grid(rows, cols) -> list[tuple[float, float]]:
    return [(round(float(r), 9), round(float(c), 9)) for r in rows for c in cols]


def synthetic_dataset(
    name: str,
    cloud: LabeledCloud,
    weather: WeatherSeries,
    times,
    grid,
    truth: ParameterPoint = ParameterPoint(),
    grid_origin=(0.0, 0.0),
    row_azimuth: float = 90.0,
    noise: float = 0.0,
    dappling: float = 0.0,
    planted_offset=(0.0, 0.0),
    seed: int = 0,
    with_open_air: bool = True,
) -> Dataset:
    """Ceptometer campaign whose readings come from the model at ``truth``.

    ``grid`` is a list of (row, col) positions in metres. The stored positions are
    the true ones minus ``planted_offset``, so an offset search should find the
    planted value. ``noise`` adds independent relative Gaussian error;
    ``dappling`` adds a spatially rough multiplicative light/shade pattern.
    """
    times = [float(t) for t in times]
    readings = [cep.CeptometerReading(t, r, c, 0.0) for t in times for r, c in grid]
    open_air = None
    if with_open_air:
        log_t, log_p = [], []
        for t in times:
            dome = sky_at(weather, t, truth.sky_resolution, truth.dedicated_sun)
            o = cep.PAR_PER_WATT * cep.open_air_irradiance(dome)
            log_t.extend([t - 60.0, t, t + 60.0])
            log_p.extend([o, o, o])
        open_air = cep.OpenAirLog(np.array(log_t), np.array(log_p))

    true_origin = (grid_origin[0] + planted_offset[0], grid_origin[1] + planted_offset[1])
    probe = Dataset(name, cloud, weather, readings, open_air, true_origin, row_azimuth)
    sims = simulate(probe, replace(truth, offset=(0.0, 0.0)))
    modelled = np.array([p.modelled for p in pair_readings(probe, sims)])

    rng = np.random.default_rng(seed)
    measured = modelled.copy()
    if dappling > 0:
        measured *= np.exp(dappling * rng.standard_normal(len(measured)) - 0.5 * dappling**2)
    if noise > 0:
        measured *= 1.0 + noise * rng.standard_normal(len(measured))
    measured = np.clip(measured, 0.0, None)
    readings = [r._replace(par=float(m)) for r, m in zip(readings, measured)]
    return Dataset(name, cloud, weather, readings, open_air, tuple(grid_origin), row_azimuth)


def write_demo_workspace(directory, noise: float = 0.03, planted_offset=(0.0, 0.0), seed: int = 0) -> Path:
    """Write an asymmetric-canopy campaign plus ``run.cfg`` into ``directory``.

    Returns the config path; every CLI command runs against it unchanged.
    """
    from .cloud import save_cloud
    from .weather import format_time, save_weather

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    cloud = asymmetric_canopy()
    # long enough for the 30-day wrong_date ablation
    weather = clear_sky_weather(days=40)
    # 09:00 and 13:00 local time on the second day
    times = [weather.times[0] + 86400.0 + h * 3600.0 for h in (9.0, 13.0)]
    grid = measurement_grid(np.arange(-3.0, 3.01, 1.0), np.arange(-3.2, 3.21, 0.8))
    ds = synthetic_dataset(
        "demo", cloud, weather, times, grid, noise=noise, planted_offset=planted_offset, seed=seed
    )
    save_cloud(cloud, d / "cloud.csv")
    save_cloud(foliage_shell(seed=seed + 7), d / "alt_cloud.csv")
    save_weather(weather, d / "weather.csv")
    cep.save_readings(ds.readings, d / "ceptometer.csv")
    cep.save_open_air(ds.open_air, d / "open_air.csv")
    loc = weather.location
    (d / "run.cfg").write_text(
        f"""# synthetic campaign under an L-shaped canopy
latitude = {loc.latitude}
longitude = {loc.longitude}
timezone = {loc.timezone_offset}
name = demo
cloud = cloud.csv
alt_cloud = alt_cloud.csv
weather = weather.csv
ceptometer = ceptometer.csv
open_air = open_air.csv
time = {format_time(times[0])}
beta_f = 0.8
s_vox = 0.1
w_vox = 1
sky_resolution = 19
"""
    )
    return d / "run.cfg"
