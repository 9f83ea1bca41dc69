"""Labelled point clouds, optical coefficients and ray-aligned voxelisation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

BRANCH = 0
FOLIAGE = 1
LABEL_NAMES = {BRANCH: "branch", FOLIAGE: "foliage"}
LABEL_CODES = {v: k for k, v in LABEL_NAMES.items()}

GROUND_PERCENTILE = 1.0


class EmptyCloudError(ValueError):
    """Cloud file holds no points; ``ground_z`` is kept when the file gives it."""

    def __init__(self, message: str, ground_z: float | None = None) -> None:
        super().__init__(message)
        self.ground_z = ground_z


class EmptyGridError(ValueError):
    """Raised when every voxel falls below the minimum weight."""


@dataclass(frozen=True)
class LabeledCloud:
    """Points in a georeferenced east-north-up frame, each tagged branch or foliage.

    Attributes:
        xyz: (n, 3) float array of coordinates in metres.
        labels: (n,) int8 array of ``BRANCH`` / ``FOLIAGE`` codes.
        ground_z: Height of the canopy floor. Defaults to the 1st percentile of z.
    """

    xyz: np.ndarray
    labels: np.ndarray
    ground_z: float | None = None

    def __post_init__(self) -> None:
        xyz = np.asarray(self.xyz, dtype=float).reshape(-1, 3)
        labels = np.asarray(self.labels, dtype=np.int8).reshape(-1)
        if len(xyz) == 0:
            raise ValueError("a point cloud needs at least one point")
        if len(labels) != len(xyz):
            raise ValueError("one label per point is required")
        if not np.all(np.isfinite(xyz)):
            raise ValueError("point coordinates must be finite")
        if not np.all((labels == BRANCH) | (labels == FOLIAGE)):
            raise ValueError("labels must be BRANCH or FOLIAGE codes")
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "labels", labels)
        if self.ground_z is None:
            object.__setattr__(
                self, "ground_z", float(np.percentile(xyz[:, 2], GROUND_PERCENTILE))
            )
        else:
            object.__setattr__(self, "ground_z", float(self.ground_z))

    def __len__(self) -> int:
        return len(self.xyz)

    @property
    def centroid_xy(self) -> np.ndarray:
        return self.xyz[:, :2].mean(axis=0)

    def with_xyz(self, xyz: np.ndarray) -> "LabeledCloud":
        return LabeledCloud(xyz, self.labels, self.ground_z)


def _parse_label(text: str, where: str) -> int:
    try:
        return LABEL_CODES[text.strip()]
    except KeyError:
        raise ValueError(f"{where}: unknown label {text.strip()!r}") from None


def load_cloud(path: str | Path) -> LabeledCloud:
    """Read a cloud from ``x,y,z,label[,energy]`` CSV or from ``.npz``.

    A leading ``# ground_z=<value>`` comment line sets the floor height. Any
    ``energy`` column is ignored.
    """
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as data:
            return LabeledCloud(data["xyz"], data["labels"], float(data["ground_z"]))

    xyz, labels = [], []
    ground_z = None
    with open(path, newline="") as fh:
        lines = iter(enumerate(fh, start=1))
        header = None
        for lineno, line in lines:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                if key.strip() == "ground_z":
                    ground_z = float(value)
                continue
            header = [h.strip() for h in line.strip().split(",")]
            break
        if header is None or header[:4] != ["x", "y", "z", "label"]:
            raise ValueError(f"{path}: expected header 'x,y,z,label'")
        for lineno, line in lines:
            if not line.strip():
                continue
            row = line.rstrip("\r\n").split(",")
            where = f"{path}:{lineno}"
            if len(row) < 4:
                raise ValueError(f"{where}: expected at least 4 columns, got {len(row)}")
            try:
                xyz.append((float(row[0]), float(row[1]), float(row[2])))
            except ValueError:
                raise ValueError(f"{where}: malformed coordinates") from None
            labels.append(_parse_label(row[3], where))
    if not xyz:
        raise EmptyCloudError(f"{path}: no points", ground_z)
    return LabeledCloud(np.array(xyz), np.array(labels, dtype=np.int8), ground_z)


def save_cloud(cloud: LabeledCloud, path: str | Path, energy: np.ndarray | None = None) -> None:
    """Write a cloud; floats are written with ``repr`` so a reload is bit-exact."""
    path = Path(path)
    if path.suffix == ".npz":
        extra = {} if energy is None else {"energy": np.asarray(energy)}
        np.savez(path, xyz=cloud.xyz, labels=cloud.labels, ground_z=cloud.ground_z, **extra)
        return
    with open(path, "w", newline="") as fh:
        fh.write(f"# ground_z={cloud.ground_z!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "z", "label"] + ([] if energy is None else ["energy"]))
        names = [LABEL_NAMES[int(l)] for l in cloud.labels]
        if energy is None:
            for (x, y, z), name in zip(cloud.xyz.tolist(), names):
                w.writerow([repr(x), repr(y), repr(z), name])
        else:
            for (x, y, z), name, e in zip(cloud.xyz.tolist(), names, np.asarray(energy).tolist()):
                w.writerow([repr(x), repr(y), repr(z), name, repr(e)])


class OpticalCoefficients(NamedTuple):
    alpha: np.ndarray
    beta: np.ndarray


def assign_coefficients(cloud: LabeledCloud, beta_f: float) -> OpticalCoefficients:
    """Branches are opaque and inactive (0, 0); foliage gets (1 - beta_f, beta_f)."""
    if not 0.0 < beta_f <= 1.0:
        raise ValueError(f"foliage transmission {beta_f} outside (0, 1]")
    foliage = cloud.labels == FOLIAGE
    beta = np.where(foliage, beta_f, 0.0)
    alpha = np.where(foliage, 1.0 - beta_f, 0.0)
    return OpticalCoefficients(alpha, beta)


def rotation_to_zenith(direction) -> np.ndarray:
    """Rotation matrix taking unit vector ``direction`` onto +z.

    Light arriving from ``direction`` then travels along -z in the rotated frame.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    z = np.array([0.0, 0.0, 1.0])
    c = float(d @ z)
    if c > 1.0 - 1e-15:
        return np.eye(3)
    if c < -1.0 + 1e-15:
        return np.diag([1.0, -1.0, -1.0])
    v = np.cross(d, z)
    s = np.linalg.norm(v)
    k = v / s
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + s * kx + (1.0 - c) * (kx @ kx)


@dataclass(frozen=True)
class VoxelGrid:
    """Occupied voxels of a cloud in a frame whose +z axis points at the light source.

    Voxels are stored column by column (sorted by column index) and top-down within
    each column, i.e. in the order light reaches them.

    Attributes:
        voxel_size: Edge length in metres.
        min_weight: Minimum number of points a retained voxel holds.
        direction: Unit vector (ENU) towards the light source.
        rotation: Matrix mapping world coordinates into the grid frame.
        origin: Grid-frame coordinates of the voxel (0, 0, 0) corner.
        ijk: (m, 3) integer voxel indices.
        alpha, beta: Mean point coefficients per voxel.
        weight: Point count per voxel.
        column_start: Offsets into the voxel arrays, one entry per column plus end.
        point_voxel: Voxel index of each point, -1 when its voxel was dropped.
    """

    voxel_size: float
    min_weight: int
    direction: np.ndarray
    rotation: np.ndarray
    origin: np.ndarray
    ijk: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    weight: np.ndarray
    column_start: np.ndarray
    point_voxel: np.ndarray

    def __len__(self) -> int:
        return len(self.weight)

    @property
    def n_columns(self) -> int:
        return len(self.column_start) - 1

    @property
    def column_ij(self) -> np.ndarray:
        return self.ijk[self.column_start[:-1], :2]

    def voxel_centres(self) -> np.ndarray:
        """Voxel centres in the grid frame."""
        return self.origin + (self.ijk + 0.5) * self.voxel_size

    def to_grid_frame(self, xyz: np.ndarray) -> np.ndarray:
        return np.asarray(xyz, dtype=float) @ self.rotation.T


def _segment_means(values: np.ndarray, inverse: np.ndarray, counts: np.ndarray) -> np.ndarray:
    # summing in (voxel, value) order makes the result independent of input order
    order = np.lexsort((values, inverse))
    sums = np.bincount(inverse[order], weights=values[order], minlength=len(counts))
    return sums / counts


def voxelize(
    cloud: LabeledCloud,
    coefficients: OpticalCoefficients,
    s_vox: float,
    w_vox: int,
    ray_direction=(0.0, 0.0, 1.0),
) -> VoxelGrid:
    """Bin the cloud into cubes aligned with ``ray_direction``.

    ``ray_direction`` is the unit vector pointing towards the sky node. Voxels
    holding fewer than ``w_vox`` points are dropped.
    """
    if s_vox <= 0:
        raise ValueError("voxel size must be positive")
    if w_vox < 0:
        raise ValueError("minimum voxel weight must be non-negative")
    direction = np.asarray(ray_direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    rot = rotation_to_zenith(direction)
    local = cloud.xyz @ rot.T
    origin = local.min(axis=0)
    ijk = np.floor((local - origin) / s_vox).astype(np.int64)
    ijk = np.maximum(ijk, 0)
    dims = ijk.max(axis=0) + 1
    # column-major key, descending k so a sort yields top-down columns
    key = (ijk[:, 0] * dims[1] + ijk[:, 1]) * dims[2] + (dims[2] - 1 - ijk[:, 2])
    uniq, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)

    keep = counts >= max(w_vox, 1)
    if not keep.any():
        raise EmptyGridError(f"no voxel holds at least {w_vox} points")
    alpha = _segment_means(coefficients.alpha, inverse, counts)[keep]
    beta = _segment_means(coefficients.beta, inverse, counts)[keep]

    new_index = np.full(len(uniq), -1, dtype=np.int64)
    new_index[keep] = np.arange(int(keep.sum()))
    point_voxel = new_index[inverse]

    kept = uniq[keep]
    k = dims[2] - 1 - kept % dims[2]
    col = kept // dims[2]
    vox_ijk = np.stack([col // dims[1], col % dims[1], k], axis=1)
    starts = np.flatnonzero(np.concatenate([[True], col[1:] != col[:-1]]))
    column_start = np.append(starts, len(kept)).astype(np.int64)

    return VoxelGrid(
        voxel_size=float(s_vox),
        min_weight=int(w_vox),
        direction=direction,
        rotation=rot,
        origin=origin,
        ijk=vox_ijk,
        alpha=alpha,
        beta=beta,
        weight=counts[keep],
        column_start=column_start,
        point_voxel=point_voxel,
    )


def rotate_about_trunk(cloud: LabeledCloud, degrees: float) -> LabeledCloud:
    """Rotate counter-clockwise (seen from above) about the vertical through the
    horizontal centroid."""
    if degrees % 360.0 == 0.0:
        return cloud.with_xyz(cloud.xyz.copy())
    c = cloud.centroid_xy
    a = np.radians(degrees)
    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    xyz = cloud.xyz.copy()
    xyz[:, :2] = (xyz[:, :2] - c) @ rot.T + c
    return cloud.with_xyz(xyz)


def offset(cloud: LabeledCloud, dx: float, dy: float) -> LabeledCloud:
    xyz = cloud.xyz.copy()
    xyz[:, 0] += dx
    xyz[:, 1] += dy
    return cloud.with_xyz(xyz)
