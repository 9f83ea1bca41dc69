"""Flat ``key = value`` run configuration shared by every command."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .tuner import ParameterPoint
from .weather import GeoLocation, TimeLike, parse_time


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _names(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


# key -> (parser, help); every key is also a command-line flag
KEYS: dict[str, tuple] = {
    "latitude": (float, "site latitude, degrees north"),
    "longitude": (float, "site longitude, degrees east"),
    "timezone": (float, "local standard time offset from UTC, hours"),
    "cloud": (Path, "labelled point cloud (x,y,z,label CSV or .npz)"),
    "alt_cloud": (Path, "alternate cloud for the wrong_cloud ablation"),
    "weather": (Path, "weather station CSV (timestamp_iso8601,global_wm2)"),
    "daily_exposure": (Path, "daily exposure CSV used to fill days without station data"),
    "ceptometer": (Path, "ceptometer readings CSV (timestamp_iso8601,row_m,col_m,par_umol)"),
    "open_air": (Path, "open-air reference log CSV (timestamp_iso8601,par_umol)"),
    "datasets": (_names, "further per-tree config files for validate/tune"),
    "name": (str, "dataset name used in reports"),
    "beta_f": (float, "foliage transmission coefficient"),
    "s_vox": (float, "voxel side, m"),
    "w_vox": (int, "minimum points per voxel"),
    "sky_resolution": (int, "requested number of diffuse sky nodes"),
    "offset_x": (float, "ceptometer grid offset east, m"),
    "offset_y": (float, "ceptometer grid offset north, m"),
    "dedicated_sun": (_bool, "give the sun its own node instead of snapping it"),
    "mode": (str, "instantaneous or composite"),
    "time": (parse_time, "instant for sky/trace (ISO 8601)"),
    "start": (parse_time, "composite start (ISO 8601)"),
    "end": (parse_time, "composite end (ISO 8601)"),
    "step": (float, "composite time step, s"),
    "dt": (float, "seconds of exposure for per-point energy in instantaneous mode"),
    "ground_cell": (float, "ground grid cell, m (default s_vox)"),
    "ground_margin": (float, "ground grid margin around the cloud, m"),
    "ground_extent": (_floats, "x0,y0,x1,y1 ground bounds used when the cloud is empty"),
    "ground_z": (float, "floor height used when the cloud is empty"),
    "grid_origin_x": (float, "world x of ceptometer grid position (0, 0)"),
    "grid_origin_y": (float, "world y of ceptometer grid position (0, 0)"),
    "row_azimuth": (float, "compass bearing of the orchard row, degrees"),
    "radius": (float, "virtual ceptometer sampling radius, m"),
    "exclude_north": (_bool, "drop readings north of the trunk"),
    "window": (float, "sliding-window side for averaging pairs, m (0 = off)"),
    "workers": (int, "tracing threads (default: all cores)"),
    "betas": (_floats, "tune: foliage transmission values"),
    "s_voxes": (_floats, "tune: voxel sizes"),
    "w_voxes": (_ints, "tune: minimum voxel weights"),
    "sky_resolutions": (_ints, "tune: sky resolutions"),
    "offset_extent": (float, "tune: half-width of the offset sweep, m (0 = skip)"),
    "offset_step": (float, "tune: offset sweep step, m"),
    "experiments": (_names, "ablate: experiments to run"),
    "time_shift_hours": (float, "ablate: wrong_time shift"),
    "date_shift_days": (float, "ablate: wrong_date shift"),
    "rotation": (float, "ablate: rotation angle, degrees"),
    "image_size": (int, "sky heatmap side, pixels"),
}

PATH_KEYS = frozenset(k for k, (p, _) in KEYS.items() if p is Path)


def read_pairs(path: str | Path) -> dict[str, str]:
    """Raw ``key = value`` pairs; ``#`` starts a comment."""
    out: dict[str, str] = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if key not in KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration; ``values`` holds every key that was set."""

    values: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    @classmethod
    def parse(cls, pairs: dict[str, str], base_dir: Path = Path("."), inherit: "RunConfig | None" = None):
        values = dict(inherit.values) if inherit else {}
        for key, text in pairs.items():
            if key not in KEYS:
                raise ConfigError(f"unknown key {key!r}")
            parser = KEYS[key][0]
            try:
                value = parser(text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
            if key in PATH_KEYS and not value.is_absolute():
                value = base_dir / value
            values[key] = value
        return cls(values, base_dir)

    @classmethod
    def load(cls, path: str | Path | None, overrides: dict[str, str] | None = None) -> "RunConfig":
        base = Path(path).parent if path else Path(".")
        cfg = cls.parse(read_pairs(path) if path else {}, base)
        # paths given as flags are relative to the working directory
        flags = cls.parse(overrides or {}, Path("."), inherit=cfg)
        return cls(flags.values, base)

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def require(self, key: str):
        if key not in self.values:
            raise ConfigError(f"missing required key {key!r} (set it in the config or pass --{key.replace('_', '-')})")
        return self.values[key]

    def path(self, key: str, required: bool = True) -> Path | None:
        if key not in self.values:
            if required:
                self.require(key)
            return None
        p = self.values[key]
        if not p.exists():
            raise ConfigError(f"{key} file not found: {p}")
        return p

    def location(self) -> GeoLocation:
        try:
            return GeoLocation(
                float(self.require("latitude")),
                float(self.require("longitude")),
                float(self.get("timezone", 0.0)),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    def params(self) -> ParameterPoint:
        d = ParameterPoint()
        try:
            return ParameterPoint(
                beta_f=self.get("beta_f", d.beta_f),
                s_vox=self.get("s_vox", d.s_vox),
                w_vox=self.get("w_vox", d.w_vox),
                sky_resolution=self.get("sky_resolution", d.sky_resolution),
                offset=(self.get("offset_x", 0.0), self.get("offset_y", 0.0)),
                dedicated_sun=self.get("dedicated_sun", d.dedicated_sun),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def mode(self) -> str:
        mode = self.get("mode", "instantaneous")
        if mode not in ("instantaneous", "composite"):
            raise ConfigError(f"mode must be 'instantaneous' or 'composite', got {mode!r}")
        return mode

    def instant(self) -> TimeLike:
        return self.require("time")

    def with_values(self, **values) -> "RunConfig":
        merged = dict(self.values)
        merged.update(values)
        return replace(self, values=merged)

    def children(self) -> list["RunConfig"]:
        """Configs listed under ``datasets``, each inheriting this one's keys."""
        out = []
        for name in self.get("datasets", ()):
            path = Path(name)
            if not path.is_absolute():
                path = self.base_dir / path
            inherited = {k: v for k, v in self.values.items() if k not in ("datasets", "name")}
            out.append(RunConfig.parse(read_pairs(path), path.parent, RunConfig(inherited, self.base_dir)))
        return out
