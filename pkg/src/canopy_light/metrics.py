"""Modelled-versus-measured regression statistics."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class PairedSample:
    measured: float
    modelled: float
    x: float = 0.0
    y: float = 0.0
    dataset: str = ""


@dataclass(frozen=True)
class FitReport:
    """Least-squares line of modelled on measured values.

    ``rmse`` is the RMS perpendicular distance of the points to the fitted line;
    ``rmse_vertical`` uses vertical residuals and ``rmse_identity`` the distance
    to y = x.
    """

    slope: float
    intercept: float
    r_squared: float
    rmse: float
    n: int
    rmse_vertical: float = float("nan")
    rmse_identity: float = float("nan")

    def to_record(self) -> str:
        return f"m={self.slope!r} r2={self.r_squared!r} rmse={self.rmse!r} n={self.n}"

    @classmethod
    def from_record(cls, text: str) -> "FitReport":
        fields = dict(part.split("=", 1) for part in text.split())
        return cls(
            slope=float(fields["m"]),
            intercept=float("nan"),
            r_squared=float(fields["r2"]),
            rmse=float(fields["rmse"]),
            n=int(fields["n"]),
        )


def fit_arrays(measured, modelled, residual: str = "perpendicular") -> FitReport:
    x = np.asarray(measured, dtype=float)
    y = np.asarray(modelled, dtype=float)
    n = len(x)
    if n < 3:
        raise ValueError("at least three pairs are needed for a fit")
    # sort so the statistics do not depend on sample order
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if not sxx > 0:
        raise ValueError("measured values have zero variance")
    slope = np.sum((x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    vertical = y - (slope * x + intercept)
    ss_res = np.sum(vertical**2)
    ss_tot = np.sum((y - ym) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    r2 = min(max(r2, 0.0), 1.0)
    rmse_v = float(np.sqrt(np.mean(vertical**2)))
    rmse_p = rmse_v / float(np.sqrt(1.0 + slope * slope))
    if residual not in ("perpendicular", "vertical"):
        raise ValueError(f"unknown residual kind {residual!r}")
    return FitReport(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(r2),
        rmse=rmse_p if residual == "perpendicular" else rmse_v,
        n=n,
        rmse_vertical=rmse_v,
        rmse_identity=float(np.sqrt(np.mean((y - x) ** 2))),
    )


def fit(pairs, residual: str = "perpendicular") -> FitReport:
    pairs = list(pairs)
    return fit_arrays(
        [p.measured for p in pairs], [p.modelled for p in pairs], residual=residual
    )


def window_average(pairs, window: float) -> list[PairedSample]:
    """Replace each sample by the mean over samples of the same dataset inside the
    axis-aligned square of side ``window`` centred on it (boundary included)."""
    if window <= 0:
        raise ValueError("window must be positive")
    pairs = list(pairs)
    half = window / 2.0
    by_dataset: dict[str, list[int]] = {}
    for i, p in enumerate(pairs):
        by_dataset.setdefault(p.dataset, []).append(i)
    xs = np.array([p.x for p in pairs])
    ys = np.array([p.y for p in pairs])
    meas = np.array([p.measured for p in pairs])
    mod = np.array([p.modelled for p in pairs])
    result = [None] * len(pairs)
    for idx in by_dataset.values():
        idx = np.array(idx)
        dx = np.abs(xs[idx][:, None] - xs[idx][None, :])
        dy = np.abs(ys[idx][:, None] - ys[idx][None, :])
        inside = (dx <= half + 1e-12) & (dy <= half + 1e-12)
        counts = inside.sum(axis=1)
        m_meas = (inside * meas[idx][None, :]).sum(axis=1) / counts
        m_mod = (inside * mod[idx][None, :]).sum(axis=1) / counts
        for k, i in enumerate(idx):
            result[i] = replace(pairs[i], measured=float(m_meas[k]), modelled=float(m_mod[k]))
    return result
