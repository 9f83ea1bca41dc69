"""Ray tracing of sky-node light through ray-aligned voxel columns.

For each sky node the cloud is re-voxelised with the grid's vertical axis pointing
at the node. Light entering the top of a column is attenuated voxel by voxel by
the voxel transmission coefficients; each voxel absorbs its absorption
coefficient times the light reaching it, and what leaves the bottom of the
column lands on the ground plane.
"""

from __future__ import annotations

import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .cloud import EmptyGridError, LabeledCloud, OpticalCoefficients, VoxelGrid, voxelize
from .skydome import SkyDome

DIRECTION_TOL = 1e-9


@numba.njit(cache=True, nogil=True)
def _trace_columns(column_start, alpha, beta, i0):
    n = alpha.shape[0]
    incident = np.empty(n)
    absorbed = np.empty(n)
    transmitted = np.empty(n)
    n_cols = column_start.shape[0] - 1
    residual = np.empty(n_cols)
    for c in range(n_cols):
        light = i0
        for v in range(column_start[c], column_start[c + 1]):
            incident[v] = light
            absorbed[v] = alpha[v] * light
            light = light * beta[v]
            transmitted[v] = light
        residual[c] = light
    return incident, absorbed, transmitted, residual


@dataclass(frozen=True)
class GroundGrid:
    """Horizontal square cells at height ``z``; cell (row, col) is centred on
    ``(x0 + (col + 0.5) * cell, y0 + (row + 0.5) * cell)``."""

    x0: float
    y0: float
    cell: float
    nx: int
    ny: int
    z: float

    @classmethod
    def covering(cls, cloud: LabeledCloud, cell: float, margin: float = 1.0) -> "GroundGrid":
        lo = cloud.xyz[:, :2].min(axis=0) - margin
        hi = cloud.xyz[:, :2].max(axis=0) + margin
        return cls.from_bounds(lo, hi, cell, cloud.ground_z)

    @classmethod
    def from_bounds(cls, lo, hi, cell: float, z: float) -> "GroundGrid":
        if cell <= 0:
            raise ValueError("ground cell size must be positive")
        x0 = np.floor(lo[0] / cell) * cell
        y0 = np.floor(lo[1] / cell) * cell
        # slack absorbs round-off such as (0.3 + 0.3) / 0.1 = 6.000000000000001
        nx = max(int(np.ceil((hi[0] - x0) / cell - 1e-9)), 1)
        ny = max(int(np.ceil((hi[1] - y0) / cell - 1e-9)), 1)
        return cls(float(x0), float(y0), float(cell), nx, ny, float(z))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def centres(self) -> np.ndarray:
        """(ny, nx, 3) array of cell centres."""
        xs = self.x0 + (np.arange(self.nx) + 0.5) * self.cell
        ys = self.y0 + (np.arange(self.ny) + 0.5) * self.cell
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy, np.full_like(gx, self.z)], axis=-1)

    def contains(self, x: float, y: float) -> bool:
        return (
            self.x0 <= x <= self.x0 + self.nx * self.cell
            and self.y0 <= y <= self.y0 + self.ny * self.cell
        )


@dataclass(frozen=True)
class ColumnTraversal:
    """Result of tracing one sky node through a voxel grid.

    Per-voxel arrays follow the grid's voxel order; ``residual`` holds the light
    leaving the bottom of each column and ``ground`` (when a ground grid was given)
    the light reaching each ground cell.
    """

    node_value: float
    direction: np.ndarray
    incident: np.ndarray
    absorbed: np.ndarray
    transmitted: np.ndarray
    residual: np.ndarray
    ground: np.ndarray | None = None


def _ground_arrivals(
    grid: VoxelGrid, transmitted: np.ndarray, i0: float, ground: GroundGrid
) -> np.ndarray:
    q = grid.to_grid_frame(ground.centres().reshape(-1, 3)) - grid.origin
    s = grid.voxel_size
    qi = np.floor(q[:, 0] / s).astype(np.int64)
    qj = np.floor(q[:, 1] / s).astype(np.int64)
    out = np.full(len(q), float(i0))
    if len(grid) == 0:
        return out.reshape(ground.shape)

    col_ij = grid.column_ij
    j_lo = min(int(qj.min()), int(col_ij[:, 1].min()))
    width = max(int(qj.max()), int(col_ij[:, 1].max())) - j_lo + 1
    col_key = col_ij[:, 0] * width + (col_ij[:, 1] - j_lo)
    q_key = qi * width + (qj - j_lo)
    pos = np.searchsorted(col_key, q_key)
    pos_c = np.minimum(pos, len(col_key) - 1)
    hit = col_key[pos_c] == q_key
    if not hit.any():
        return out.reshape(ground.shape)

    # voxels strictly above the ground point along the ray: centre height > query height
    idx = np.flatnonzero(hit)
    cols = pos_c[idx]
    start = grid.column_start[cols]
    depth = int(grid.ijk[:, 2].max()) + 1
    kmin = np.clip(np.floor(q[idx, 2] / s - 0.5).astype(np.int64) + 1, 0, depth)
    # ascending key over the stored (column, descending k) voxel order
    column_of = np.repeat(np.arange(grid.n_columns), np.diff(grid.column_start))
    voxel_key = column_of * depth + (depth - 1 - grid.ijk[:, 2])
    bound = cols * depth + (depth - 1 - kmin)
    n_up = np.searchsorted(voxel_key, bound, side="right") - start
    has = n_up > 0
    vals = out[idx]
    vals[has] = transmitted[start[has] + n_up[has] - 1]
    out[idx] = vals
    return out.reshape(ground.shape)


def trace_node(
    grid: VoxelGrid,
    node_value: float,
    node_direction,
    ground: GroundGrid | None = None,
) -> ColumnTraversal:
    """Attenuate ``node_value`` down every column of ``grid``."""
    direction = np.asarray(node_direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    if not np.allclose(direction, grid.direction, atol=DIRECTION_TOL, rtol=0.0):
        raise ValueError("voxel grid is not oriented towards this sky node")
    incident, absorbed, transmitted, residual = _trace_columns(
        grid.column_start, grid.alpha, grid.beta, float(node_value)
    )
    arrivals = None
    if ground is not None:
        arrivals = _ground_arrivals(grid, transmitted, node_value, ground)
    return ColumnTraversal(
        float(node_value), direction, incident, absorbed, transmitted, residual, arrivals
    )


def voxel_energy(i_abs, s_vox: float, dt: float):
    """Energy (J) absorbed by a voxel of side ``s_vox`` over ``dt`` seconds."""
    return i_abs * s_vox * s_vox * dt


@dataclass(frozen=True)
class EnergyField:
    """Per-point absorbed light plus the light reaching the ground.

    Attributes:
        absorbed: Per-point sum over sky nodes of the absorbed flux density of the
            point's voxel (W/m2, or J/m2 for composite domes). Every point in a
            voxel receives the voxel's full value.
        energy: Per-point share of voxel energy (J); voxel energy is split evenly
            between its points.
        ground: Grid the arrivals refer to.
        arrivals: (n_nodes, ny, nx) light reaching each ground cell, measured
            perpendicular to the ray, in dome node order.
        directions: (n_nodes, 3) ray source directions matching ``arrivals``.
        reduction_order: Node order used for every sum.
    """

    absorbed: np.ndarray
    energy: np.ndarray
    ground: GroundGrid
    arrivals: np.ndarray
    directions: np.ndarray
    reduction_order: np.ndarray

    def horizontal(self) -> np.ndarray:
        """Light on a horizontal surface per ground cell: sum of cos(zenith) * arrival."""
        out = np.zeros(self.ground.shape)
        for n in self.reduction_order:
            out += self.directions[n, 2] * self.arrivals[n]
        return out


def canonical_order(dome: SkyDome) -> np.ndarray:
    """Node order independent of how the dome lists its nodes."""
    d = dome.directions
    return np.lexsort((dome.kinds, dome.values, d[:, 2], d[:, 1], d[:, 0]))


def default_workers() -> int:
    return os.cpu_count() or 1


def accumulate(
    cloud: LabeledCloud,
    coefficients: OpticalCoefficients,
    dome: SkyDome,
    s_vox: float,
    w_vox: int,
    ground: GroundGrid | None = None,
    dt: float = 1.0,
    workers: int | None = None,
) -> EnergyField:
    """Trace every sky node and sum the contributions into the original points.

    Nodes are traced in parallel by ``workers`` threads; partial results are
    merged in a fixed node order so the output does not depend on the worker
    count. For instantaneous domes ``energy`` is per ``dt`` seconds; composite
    dome values already integrate time, so leave ``dt`` at 1.
    """
    if ground is None:
        ground = GroundGrid.covering(cloud, s_vox)
    n_points = len(cloud)
    order = canonical_order(dome)
    absorbed = np.zeros(n_points)
    energy = np.zeros(n_points)
    arrivals = np.zeros((len(dome),) + ground.shape)

    def work(n: int):
        value = float(dome.values[n])
        direction = dome.directions[n]
        if value == 0.0:
            return n, None, None, np.zeros(ground.shape)
        try:
            grid = voxelize(cloud, coefficients, s_vox, w_vox, direction)
        except EmptyGridError:
            return n, None, None, np.full(ground.shape, value)
        tr = trace_node(grid, value, direction, ground)
        pv = grid.point_voxel
        inside = pv >= 0
        pt_abs = np.zeros(n_points)
        pt_abs[inside] = tr.absorbed[pv[inside]]
        pt_energy = np.zeros(n_points)
        share = voxel_energy(tr.absorbed, s_vox, dt) / grid.weight
        pt_energy[inside] = share[pv[inside]]
        return n, pt_abs, pt_energy, tr.ground

    def merge(result) -> None:
        n, pt_abs, pt_energy, ground_n = result
        if pt_abs is not None:
            absorbed[:] += pt_abs
            energy[:] += pt_energy
        arrivals[n] = ground_n

    workers = workers or default_workers()
    if workers <= 1:
        for n in order:
            merge(work(int(n)))
    else:
        # bounded look-ahead keeps memory flat while merging strictly in order
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pending: deque = deque()
            nodes = iter(order)
            for n in nodes:
                pending.append(pool.submit(work, int(n)))
                if len(pending) >= 2 * workers:
                    merge(pending.popleft().result())
            while pending:
                merge(pending.popleft().result())

    return EnergyField(absorbed, energy, ground, arrivals, dome.directions.copy(), order)


def unobstructed_field(dome: SkyDome, ground: GroundGrid) -> EnergyField:
    """Field of an empty scene: every ground cell receives every node's full value."""
    arrivals = np.broadcast_to(dome.values[:, None, None], (len(dome),) + ground.shape).copy()
    return EnergyField(
        np.zeros(0), np.zeros(0), ground, arrivals, dome.directions.copy(), canonical_order(dome)
    )
