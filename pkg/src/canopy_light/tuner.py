"""Model evaluation against ceptometer data, staged grid search and ablations."""

from __future__ import annotations

import itertools
import time as _time
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import ceptometer as cep
from .cloud import LabeledCloud, assign_coefficients, rotate_about_trunk
from .metrics import FitReport, PairedSample, fit, window_average
from .radiance import EnergyField, GroundGrid, accumulate
from .skydome import SkyDome, sky_at
from .weather import WeatherSeries

EXPERIMENTS = (
    "baseline",
    "wrong_cloud",
    "wrong_time",
    "wrong_date",
    "rotation",
    "no_sun_node",
    "no_diffuse",
)


@dataclass(frozen=True)
class ParameterPoint:
    beta_f: float = 0.8
    s_vox: float = 0.1
    w_vox: int = 1
    sky_resolution: int = 19
    offset: tuple[float, float] = (0.0, 0.0)
    dedicated_sun: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.beta_f <= 1.0:
            raise ValueError("beta_f must lie in (0, 1]")
        if self.s_vox <= 0:
            raise ValueError("s_vox must be positive")
        if self.w_vox < 0:
            raise ValueError("w_vox must be non-negative")
        if self.sky_resolution < 1:
            raise ValueError("sky_resolution must be >= 1")

    def as_row(self) -> dict:
        return {
            "beta_f": self.beta_f,
            "s_vox": self.s_vox,
            "w_vox": self.w_vox,
            "sky_resolution": self.sky_resolution,
            "offset_x": self.offset[0],
            "offset_y": self.offset[1],
            "dedicated_sun": int(self.dedicated_sun),
        }


PARAM_COLUMNS = tuple(ParameterPoint().as_row())


@dataclass
class Dataset:
    """One tree: cloud, weather record and the ceptometer readings under it.

    Readings are placed in the world with ``grid_origin`` and ``row_azimuth``
    (see :func:`canopy_light.ceptometer.grid_to_world`).
    """

    name: str
    cloud: LabeledCloud
    weather: WeatherSeries
    readings: list[cep.CeptometerReading]
    open_air: cep.OpenAirLog | None = None
    grid_origin: tuple[float, float] = (0.0, 0.0)
    row_azimuth: float = 90.0
    radius: float = cep.DEFAULT_RADIUS
    exclude_north: bool = False

    def active_readings(self) -> list[cep.CeptometerReading]:
        if not self.exclude_north:
            return list(self.readings)
        # readings north of the trunk see unmodelled neighbours
        cy = self.cloud.centroid_xy[1]
        pos = self.positions(self.readings)
        return [r for r, p in zip(self.readings, pos) if p[1] <= cy]

    def positions(self, readings=None) -> np.ndarray:
        readings = self.active_readings() if readings is None else readings
        if not readings:
            return np.zeros((0, 2))
        rows = np.array([r.row for r in readings])
        cols = np.array([r.col for r in readings])
        return cep.grid_to_world(rows, cols, self.grid_origin, self.row_azimuth)

    def times(self) -> list[float]:
        return sorted({r.timestamp for r in self.active_readings()})


@dataclass(frozen=True)
class Simulation:
    time: float
    dome: SkyDome
    field: EnergyField


@dataclass(frozen=True)
class Variant:
    """Substitutions applied to the standard pipeline for ablation runs."""

    cloud: LabeledCloud | None = None
    time_shift: float = 0.0
    include_diffuse: bool = True


@dataclass(frozen=True)
class ExperimentResult:
    label: str
    params: ParameterPoint
    fit: FitReport
    cpu_seconds: float
    stage: str = ""


def simulate(
    dataset: Dataset,
    params: ParameterPoint,
    variant: Variant = Variant(),
    pad: float = 0.0,
    workers: int | None = None,
) -> list[Simulation]:
    """Trace the canopy once per distinct reading time.

    The ground grid covers every reading position widened by the sampling radius
    plus ``pad`` (for offset sweeps).
    """
    cloud = variant.cloud if variant.cloud is not None else dataset.cloud
    coeffs = assign_coefficients(cloud, params.beta_f)
    pos = dataset.positions() + np.asarray(params.offset)
    margin = dataset.radius + pad + params.s_vox
    ground = GroundGrid.from_bounds(
        pos.min(axis=0) - margin, pos.max(axis=0) + margin, params.s_vox, dataset.cloud.ground_z
    )
    sims = []
    for t in dataset.times():
        dome = sky_at(
            dataset.weather,
            t + variant.time_shift,
            params.sky_resolution,
            dedicated_sun=params.dedicated_sun,
            include_diffuse=variant.include_diffuse,
        )
        fld = accumulate(cloud, coeffs, dome, params.s_vox, params.w_vox, ground, workers=workers)
        sims.append(Simulation(t, dome, fld))
    return sims


def pair_readings(
    dataset: Dataset,
    sims: Sequence[Simulation],
    offset=(0.0, 0.0),
) -> list[PairedSample]:
    """Sample the simulated ground fields at the (offset) reading positions."""
    by_time = {s.time: s for s in sims}
    readings = dataset.active_readings()
    positions = dataset.positions(readings) + np.asarray(offset, dtype=float)
    out = []
    for r, p in zip(readings, positions):
        sim = by_time[r.timestamp]
        irr = cep.sample_virtual(sim.field, p, dataset.radius)
        par = float(cep.calibrated_par(irr, dataset.open_air, r.timestamp, sim.dome))
        out.append(PairedSample(r.par, par, float(p[0]), float(p[1]), dataset.name))
    return out


def model_pairs(
    datasets: Iterable[Dataset],
    params: ParameterPoint,
    variant: Variant = Variant(),
    workers: int | None = None,
) -> list[PairedSample]:
    pairs: list[PairedSample] = []
    for ds in datasets:
        sims = simulate(ds, params, variant, workers=workers)
        pairs.extend(pair_readings(ds, sims, params.offset))
    return pairs


def evaluate(
    datasets: Sequence[Dataset],
    params: ParameterPoint,
    variant: Variant = Variant(),
    label: str = "",
    workers: int | None = None,
    window: float | None = None,
) -> ExperimentResult:
    """Fit modelled against measured PAR; ``window`` averages pairs over a square
    neighbourhood first."""
    cpu0 = _time.process_time()
    pairs = model_pairs(datasets, params, variant, workers)
    if window:
        pairs = window_average(pairs, window)
    report = fit(pairs)
    return ExperimentResult(label, params, report, _time.process_time() - cpu0)


def _ranked(results: list[ExperimentResult]) -> list[ExperimentResult]:
    # stable: equal R2 keeps evaluation order
    return sorted(results, key=lambda r: -r.fit.r_squared)


@dataclass(frozen=True)
class StagePlan:
    betas: tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
    s_voxes: tuple[float, ...] = tuple(round(float(s), 4) for s in np.geomspace(0.01, 0.5, 7))
    w_voxes: tuple[int, ...] = (0, 1, 2, 5, 10)
    sky_resolutions: tuple[int, ...] = (19, 121, 315)
    dedicated: tuple[bool, ...] = (True, False)


@dataclass
class GridSearchResult:
    best: ParameterPoint
    stages: dict[str, list[ExperimentResult]] = field(default_factory=dict)

    @property
    def results(self) -> list[ExperimentResult]:
        """All evaluations ranked by R2, best first."""
        return _ranked([r for rs in self.stages.values() for r in rs])


def grid_search(
    datasets: Sequence[Dataset],
    plan: StagePlan = StagePlan(),
    base: ParameterPoint = ParameterPoint(),
    workers: int | None = None,
    window: float | None = None,
) -> GridSearchResult:
    """Staged search maximising R2.

    Stage 1 sweeps foliage transmission against voxel size, stage 2 the minimum
    voxel weight at the stage-1 winner, stage 3 the sky resolution with and
    without a dedicated sun node.
    """
    if not datasets:
        raise ValueError("grid search needs at least one dataset")
    out = GridSearchResult(best=base)

    def run(stage: str, points: list[ParameterPoint]) -> ParameterPoint:
        results = []
        for p in points:
            r = evaluate(datasets, p, workers=workers, window=window)
            results.append(replace(r, stage=stage))
        out.stages[stage] = results
        return _ranked(results)[0].params

    best = run(
        "beta_svox",
        [replace(base, beta_f=b, s_vox=s) for b, s in itertools.product(plan.betas, plan.s_voxes)],
    )
    best = run("w_vox", [replace(best, w_vox=w) for w in plan.w_voxes])
    best = run(
        "sky",
        [
            replace(best, sky_resolution=s, dedicated_sun=d)
            for s, d in itertools.product(plan.sky_resolutions, plan.dedicated)
        ],
    )
    out.best = best
    return out


@dataclass(frozen=True)
class OffsetHeatmap:
    """RMSE (and R2) over a grid of virtual ceptometer offsets; arrays are indexed
    ``[iy, ix]``."""

    dx: np.ndarray
    dy: np.ndarray
    rmse: np.ndarray
    r_squared: np.ndarray

    @property
    def best(self) -> tuple[float, float]:
        iy, ix = np.unravel_index(int(np.argmin(self.rmse)), self.rmse.shape)
        return float(self.dx[ix]), float(self.dy[iy])


def offset_axis(extent: float, step: float) -> np.ndarray:
    if step <= 0:
        raise ValueError("offset step must be positive")
    n = 2.0 * extent / step
    if abs(n - round(n)) > 1e-9:
        raise ValueError(f"step {step} must divide the offset range {2 * extent}")
    return np.round(np.linspace(-extent, extent, int(round(n)) + 1), 12)


def offset_search(
    dataset: Dataset,
    params: ParameterPoint = ParameterPoint(),
    extent: float = 1.0,
    step: float = 0.1,
    workers: int | None = None,
) -> OffsetHeatmap:
    """Sweep ceptometer offsets over ``[-extent, extent]^2``; the light field is
    traced once and resampled at every offset."""
    axis = offset_axis(extent, step)
    sims = simulate(dataset, replace(params, offset=(0.0, 0.0)), pad=extent * np.sqrt(2), workers=workers)
    rmse = np.empty((len(axis), len(axis)))
    r2 = np.empty_like(rmse)
    for iy, dy in enumerate(axis):
        for ix, dx in enumerate(axis):
            report = fit(pair_readings(dataset, sims, (dx, dy)))
            rmse[iy, ix] = report.rmse
            r2[iy, ix] = report.r_squared
    return OffsetHeatmap(axis, axis.copy(), rmse, r2)


def parse_experiment(name: str) -> tuple[str, float | None]:
    """``rotation:30`` or ``rotation(30)`` to ('rotation', 30.0)."""
    text = name.strip().replace("(", ":").rstrip(")")
    kind, _, arg = text.partition(":")
    if kind not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}; expected one of {', '.join(EXPERIMENTS)}")
    return kind, float(arg) if arg else None


def ablate(
    dataset: Dataset,
    experiment: str,
    params: ParameterPoint = ParameterPoint(),
    alt_cloud: LabeledCloud | None = None,
    time_shift_hours: float = 2.0,
    date_shift_days: float = 30.0,
    rotation: float = 90.0,
    workers: int | None = None,
    window: float | None = None,
) -> ExperimentResult:
    """Run the pipeline with exactly one component substituted."""
    kind, arg = parse_experiment(experiment)
    variant = Variant()
    p = params
    if kind == "wrong_cloud":
        if alt_cloud is None:
            raise ValueError("wrong_cloud needs an alternate point cloud")
        variant = Variant(cloud=alt_cloud)
    elif kind == "wrong_time":
        variant = Variant(time_shift=3600.0 * (time_shift_hours if arg is None else arg))
    elif kind == "wrong_date":
        variant = Variant(time_shift=86400.0 * (date_shift_days if arg is None else arg))
    elif kind == "rotation":
        angle = rotation if arg is None else arg
        variant = Variant(cloud=rotate_about_trunk(dataset.cloud, angle))
        kind = f"rotation({angle:g})"
    elif kind == "no_sun_node":
        p = replace(params, dedicated_sun=False)
    elif kind == "no_diffuse":
        variant = Variant(include_diffuse=False)
    if variant.time_shift:
        lo, hi = dataset.weather.times[[0, -1]] if len(dataset.weather) else (np.inf, -np.inf)
        shifted = [t + variant.time_shift for t in dataset.times()]
        if min(shifted) < lo or max(shifted) > hi:
            raise ValueError(f"{kind} shift moves reading times outside the weather record")
    return evaluate([dataset], p, variant, label=kind, workers=workers, window=window)


def report_rows(results: Iterable[ExperimentResult]) -> list[dict]:
    rows = []
    for r in results:
        row = {"label": r.label, "stage": r.stage}
        row.update(r.params.as_row())
        row.update(
            m=r.fit.slope, r2=r.fit.r_squared, rmse=r.fit.rmse, n=r.fit.n, cpu_seconds=r.cpu_seconds
        )
        rows.append(row)
    return rows
