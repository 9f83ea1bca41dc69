"""``canopy-light`` command-line front end."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import plotting
from .ceptometer import load_open_air, load_readings
from .cloud import EmptyCloudError, assign_coefficients, load_cloud, save_cloud
from .config import KEYS, ConfigError, RunConfig
from .metrics import fit, window_average
from .radiance import GroundGrid, accumulate, unobstructed_field
from .skydome import DIFFUSE, SkyDome, composite_sky, save_dome, sky_at
from .tuner import (
    EXPERIMENTS,
    PARAM_COLUMNS,
    Dataset,
    StagePlan,
    ablate,
    grid_search,
    model_pairs,
    offset_search,
    report_rows,
)
from .weather import WeatherSeries, load_daily_exposure, load_weather, synthesize_from_daily

PROG = "canopy-light"
DEFAULT_GROUND_EXTENT = (-5.0, -5.0, 5.0, 5.0)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # single-line errors instead of usage dumps
        raise UsageError(message)


def write_rows(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (row[c] for c in columns)])


def load_series(cfg: RunConfig) -> WeatherSeries:
    location = cfg.location()
    series = load_weather(cfg.path("weather"), location)
    daily = cfg.path("daily_exposure", required=False)
    if daily is not None:
        extra = synthesize_from_daily(load_daily_exposure(daily), series)
        if len(extra):
            series = series.merged(extra)
    return series


def build_dome(cfg: RunConfig, series: WeatherSeries | None = None) -> SkyDome:
    series = series if series is not None else load_series(cfg)
    p = cfg.params()
    if cfg.mode() == "composite":
        return composite_sky(
            series, cfg.require("start"), cfg.require("end"), cfg.get("step", 1800.0), p.sky_resolution
        )
    return sky_at(series, cfg.instant(), p.sky_resolution, dedicated_sun=p.dedicated_sun)


def load_datasets(cfg: RunConfig) -> list[Dataset]:
    out = []
    for c in cfg.children() or [cfg]:
        readings = load_readings(c.path("ceptometer"))
        if not readings:
            raise ConfigError(f"no ceptometer readings in {c.get('ceptometer')}")
        log = c.path("open_air", required=False)
        out.append(
            Dataset(
                name=c.get("name") or Path(c.get("ceptometer")).stem,
                cloud=load_cloud(c.path("cloud")),
                weather=load_series(c),
                readings=readings,
                open_air=load_open_air(log) if log else None,
                grid_origin=(c.get("grid_origin_x", 0.0), c.get("grid_origin_y", 0.0)),
                row_azimuth=c.get("row_azimuth", 90.0),
                radius=c.get("radius", 0.4),
                exclude_north=c.get("exclude_north", False),
            )
        )
    return out


def cmd_sky(cfg: RunConfig, out: Path) -> None:
    dome = build_dome(cfg)
    save_dome(dome, out / "dome.csv")
    plotting.write_ppm(plotting.sky_raster(dome, cfg.get("image_size", 181), kind=DIFFUSE), out / "sky.ppm")
    plotting.sky_figure(dome, out / "sky.png")
    print(f"nodes={len(dome)} total={dome.total!r} diffuse={dome.diffuse_total!r}")


def cmd_trace(cfg: RunConfig, out: Path) -> None:
    p = cfg.params()
    dome = build_dome(cfg)
    cell = cfg.get("ground_cell", p.s_vox)
    dt = 1.0 if cfg.mode() == "composite" else cfg.get("dt", 1.0)
    extent = cfg.get("ground_extent")
    if extent is not None and len(extent) != 4:
        raise ConfigError("ground_extent needs four numbers: x0,y0,x1,y1")
    try:
        cloud = load_cloud(cfg.path("cloud"))
    except EmptyCloudError as exc:
        z = cfg.get("ground_z", exc.ground_z if exc.ground_z is not None else 0.0)
        ext = extent or DEFAULT_GROUND_EXTENT
        ground = GroundGrid.from_bounds(ext[:2], ext[2:], cell, z)
        field = unobstructed_field(dome, ground)
        with open(out / "energy_cloud.csv", "w") as fh:
            fh.write(f"# ground_z={float(z)!r}\nx,y,z,label,energy\n")
    else:
        if extent is not None:
            ground = GroundGrid.from_bounds(extent[:2], extent[2:], cell, cloud.ground_z)
        else:
            ground = GroundGrid.covering(cloud, cell, cfg.get("ground_margin", 1.0))
        coeffs = assign_coefficients(cloud, p.beta_f)
        field = accumulate(cloud, coeffs, dome, p.s_vox, p.w_vox, ground, dt=dt, workers=cfg.get("workers"))
        save_cloud(cloud, out / "energy_cloud.csv", energy=field.energy)

    horizontal = field.horizontal()
    centres = ground.centres()
    rows = (
        {"x": float(centres[r, c, 0]), "y": float(centres[r, c, 1]), "value": float(horizontal[r, c])}
        for r in range(ground.ny)
        for c in range(ground.nx)
    )
    write_rows(out / "ground.csv", ("x", "y", "value"), rows)
    plotting.write_ppm(plotting.shadow_raster(horizontal), out / "shadow.ppm")
    plotting.shadow_figure(horizontal, ground, out / "shadow.png")
    print(f"nodes={len(dome)} points={len(field.energy)} ground_cells={ground.nx * ground.ny}")


def cmd_validate(cfg: RunConfig, out: Path) -> None:
    datasets = load_datasets(cfg)
    pairs = model_pairs(datasets, cfg.params(), workers=cfg.get("workers"))
    if cfg.get("window"):
        pairs = window_average(pairs, cfg.get("window"))
    report = fit(pairs)
    (out / "fit.txt").write_text(report.to_record() + "\n")
    write_rows(
        out / "scatter.csv",
        ("dataset", "x", "y", "measured", "modelled"),
        (vars(p) for p in pairs),
    )
    plotting.scatter_figure([p.measured for p in pairs], [p.modelled for p in pairs], report, out / "scatter.png")
    print(report.to_record())


def cmd_tune(cfg: RunConfig, out: Path) -> None:
    datasets = load_datasets(cfg)
    workers, window = cfg.get("workers"), cfg.get("window")
    plan_keys = ("betas", "s_voxes", "w_voxes", "sky_resolutions")
    plan = StagePlan(**{k: cfg.get(k) for k in plan_keys if cfg.get(k)})
    result = grid_search(datasets, plan, base=cfg.params(), workers=workers, window=window)
    columns = ("stage",) + PARAM_COLUMNS + ("m", "r2", "rmse", "n", "cpu_seconds")
    write_rows(out / "tune.csv", columns, report_rows(result.results))
    best = result.best.as_row()
    (out / "best.cfg").write_text("".join(f"{k} = {v}\n" for k, v in best.items()))

    extent = cfg.get("offset_extent", 1.0)
    if extent > 0:
        step = cfg.get("offset_step", 0.1)
        for ds in datasets:
            hm = offset_search(ds, result.best, extent, step, workers)
            rows = (
                {"dx": float(dx), "dy": float(dy), "rmse": float(hm.rmse[iy, ix]), "r2": float(hm.r_squared[iy, ix])}
                for iy, dy in enumerate(hm.dy)
                for ix, dx in enumerate(hm.dx)
            )
            write_rows(out / f"offset_{ds.name}.csv", ("dx", "dy", "rmse", "r2"), rows)
            # north (largest dy) on the top row
            plotting.write_ppm(hm.rmse[::-1], out / f"offset_{ds.name}.ppm")
            plotting.offset_figure(hm, out / f"offset_{ds.name}.png")
            print(f"offset {ds.name}: dx={hm.best[0]!r} dy={hm.best[1]!r}")
    print(" ".join(f"{k}={v}" for k, v in best.items()))


def cmd_ablate(cfg: RunConfig, out: Path) -> None:
    dataset = load_datasets(cfg)[0]
    experiments = cfg.get("experiments", EXPERIMENTS)
    alt_path = cfg.path("alt_cloud", required=False)
    if alt_path is None and any(e.startswith("wrong_cloud") for e in experiments):
        raise ConfigError("wrong_cloud needs alt_cloud (or drop it from experiments)")
    alt = load_cloud(alt_path) if alt_path else None
    results = [
        ablate(
            dataset,
            e,
            cfg.params(),
            alt_cloud=alt,
            time_shift_hours=cfg.get("time_shift_hours", 2.0),
            date_shift_days=cfg.get("date_shift_days", 30.0),
            rotation=cfg.get("rotation", 90.0),
            workers=cfg.get("workers"),
            window=cfg.get("window"),
        )
        for e in experiments
    ]
    base = next((r.fit for r in results if r.label == "baseline"), None)
    rows = []
    for row, r in zip(report_rows(results), results):
        row["delta_r2"] = r.fit.r_squared - base.r_squared if base else float("nan")
        row["delta_rmse"] = r.fit.rmse - base.rmse if base else float("nan")
        rows.append(row)
    columns = ("label", "m", "r2", "rmse", "n", "delta_r2", "delta_rmse", "cpu_seconds")
    write_rows(out / "ablation.csv", columns, rows)
    for row in rows:
        print(f"{row['label']}: m={row['m']:.4f} r2={row['r2']:.4f} rmse={row['rmse']:.3f} n={row['n']}")


COMMANDS = {
    "sky": (cmd_sky, "build a sky dome and render its heatmap"),
    "trace": (cmd_trace, "trace a cloud and write per-point energy and the ground field"),
    "validate": (cmd_validate, "compare modelled and measured ceptometer PAR"),
    "tune": (cmd_tune, "staged parameter search plus ceptometer offset sweep"),
    "ablate": (cmd_ablate, "rerun with one component substituted at a time"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description="LiDAR canopy light interception model")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", metavar="PATH", help="flat key = value config file")
        p.add_argument("--out-dir", default=".", metavar="DIR", help="output directory (default: .)")
        for key, (_, key_help) in KEYS.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, metavar="VALUE", help=key_help)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = {k: getattr(args, k) for k in KEYS if getattr(args, k) is not None}
        cfg = RunConfig.load(args.config, overrides)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command][0](cfg, out)
    except UsageError as exc:
        print(f"{PROG}: error: usage: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"{PROG}: error: config: {_one_line(exc)}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        print(f"{PROG}: error: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
