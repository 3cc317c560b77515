"""Axisymmetric (r, theta) grids, finite differences and quadrature.

Radial nodes are vertex-centred (both ends are nodes); polar nodes are
cell-centred, theta_j = (j + 1/2) pi / n_theta, so nothing is ever evaluated
on the symmetry axis.  The phi integral is done analytically (factor 2 pi).

Grid arrays are indexed ``[i_r, j_theta, ...]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InvalidParameter, RangeError
from .geometry import MetricSpec

_RTOL = 1e-10


@dataclass(frozen=True)
class Grid:
    r_min: float
    r_max: float
    n_r: int
    n_theta: int
    mode: str = "uniform"

    def __post_init__(self):
        if not (np.isfinite(self.r_min) and np.isfinite(self.r_max)) or not 0 < self.r_min < self.r_max:
            raise InvalidParameter(f"need 0 < r_min < r_max, got [{self.r_min}, {self.r_max}]")
        if int(self.n_r) != self.n_r or self.n_r < 2:
            raise InvalidParameter(f"n_r must be an integer >= 2, got {self.n_r}")
        if int(self.n_theta) != self.n_theta or self.n_theta < 1:
            raise InvalidParameter(f"n_theta must be a positive integer, got {self.n_theta}")
        if self.mode not in ("uniform", "geometric"):
            raise InvalidParameter(f"r-spacing mode must be 'uniform' or 'geometric', got {self.mode!r}")

    @property
    def r(self) -> np.ndarray:
        if self.mode == "geometric":
            r = np.geomspace(self.r_min, self.r_max, self.n_r)
        else:
            r = np.linspace(self.r_min, self.r_max, self.n_r)
        r[0], r[-1] = self.r_min, self.r_max
        return r

    @property
    def theta(self) -> np.ndarray:
        return (np.arange(self.n_theta) + 0.5) * self.dtheta

    @property
    def dtheta(self) -> float:
        return np.pi / self.n_theta

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_r, self.n_theta)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.r, self.theta, indexing="ij")

    @property
    def h(self) -> float:
        """Representative spacing used in convergence fits."""
        return max(np.max(np.diff(self.r)) / self.r_min, self.dtheta)

    def radius_index(self, r: float) -> int:
        rs = self.r
        i = int(np.argmin(np.abs(rs - r)))
        if abs(rs[i] - r) > _RTOL * max(1.0, abs(r)):
            raise RangeError(f"r={r} is not a grid radius")
        return i

    def boundary_mask(self) -> np.ndarray:
        """True on every edge node (first/last radius and first/last polar row)."""
        mask = np.zeros(self.shape, bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask

    def with_resolution(self, n_r: int, n_theta: int) -> "Grid":
        return Grid(self.r_min, self.r_max, n_r, n_theta, self.mode)

    def with_r_max(self, r_max: float, n_r: Optional[int] = None) -> "Grid":
        return Grid(self.r_min, r_max, n_r or self.n_r, self.n_theta, self.mode)


def build_grid(r_min: float, r_max: float, n_r: int, n_theta: int, mode: str = "uniform") -> Grid:
    return Grid(float(r_min), float(r_max), n_r, n_theta, mode)


@dataclass
class GridSpinorField:
    """One two-component spinor per node, with components in ``frame``."""

    grid: Grid
    values: np.ndarray
    frame: str
    dirichlet: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, complex)
        if self.values.shape != self.grid.shape + (2,):
            raise InvalidParameter(f"field shape {self.values.shape} does not match grid {self.grid.shape}")
        if self.dirichlet is None:
            self.dirichlet = np.zeros(self.grid.shape, bool)

    @classmethod
    def sample(cls, field, grid: Grid, dirichlet=None) -> "GridSpinorField":
        """Sample an :class:`AnalyticSpinorField` at every node."""
        R, T = grid.mesh()
        return cls(grid, field(R, T), field.frame, dirichlet)

    def norm2(self) -> np.ndarray:
        return np.sum((self.values * np.conj(self.values)).real, axis=-1)

    def to_csv(self, path) -> Path:
        return write_field_csv(path, self.grid, self.values)


FIELD_CSV_COLUMNS = ("r", "theta", "re_xi1", "im_xi1", "re_xi2", "im_xi2")


def write_field_csv(path, grid: Grid, values: np.ndarray) -> Path:
    path = Path(path)
    R, T = grid.mesh()
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(FIELD_CSV_COLUMNS)
        for i in range(grid.n_r):
            for j in range(grid.n_theta):
                x = values[i, j]
                w.writerow([repr(float(v)) for v in
                            (R[i, j], T[i, j], x[0].real, x[0].imag, x[1].real, x[1].imag)])
    return path


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1], np.stack([data[:, 2] + 1j * data[:, 3], data[:, 4] + 1j * data[:, 5]], -1)


# finite differences ------------------------------------------------------

def fd_partial(values: np.ndarray, grid: Grid, direction: int) -> np.ndarray:
    """Second-order coordinate derivative of grid samples along r (0) or theta (1).

    Central differences inside (non-uniform three-point formula in r),
    one-sided second-order closures on the edges.
    """
    if direction == 0:
        return np.gradient(values, grid.r, axis=0, edge_order=2)
    if direction == 1:
        if grid.n_theta < 3:
            raise InvalidParameter("theta derivatives need n_theta >= 3")
        return np.gradient(values, grid.dtheta, axis=1, edge_order=2)
    raise InvalidParameter(f"direction must be 0 (r) or 1 (theta), got {direction}")


def fd_derivative(field, direction: int, node: tuple[int, int], scale: Optional[np.ndarray] = None):
    """Derivative of a :class:`GridSpinorField` (or raw samples with a
    ``grid``) at one node.  With ``scale`` (the frame scale factor h_i on the
    grid) the frame-directional derivative h_i^{-1} d_i is returned."""
    d = fd_partial(field.values, field.grid, direction)[node]
    if scale is not None:
        d = d / np.asarray(scale)[node]
    return d


def frame_scales(spec: MetricSpec, grid: Grid) -> np.ndarray:
    """h_i = sqrt(g_ii) at every node, shape (3, n_r, n_theta)."""
    R, T = grid.mesh()
    g = spec.components(R, T, order=0)
    return np.sqrt(np.stack([gi.val for gi in g]))


# quadrature ----------------------------------------------------------------

@dataclass
class QuadratureRule:
    """Volume density sqrt(det g) * 2 pi * dtheta per node (multiply by a
    radial trapezoid weight to get a cell volume) and ring weights
    sqrt(g_tt g_pp) * 2 pi * dtheta per node."""

    grid: Grid
    spec: MetricSpec
    volume_density: np.ndarray
    surface_weights: np.ndarray

    @property
    def volume_weights(self) -> np.ndarray:
        return self.volume_density * trapezoid_weights(self.grid.r)[:, None]


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x, dtype=float)
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def build_quadrature(spec: MetricSpec, grid: Grid) -> QuadratureRule:
    if grid.r_min <= spec.horizon:
        raise RangeError(f"grid starts at r={grid.r_min} inside r <= 2M = {spec.horizon}")
    h = frame_scales(spec, grid)
    factor = 2.0 * np.pi * grid.dtheta
    return QuadratureRule(grid, spec, h[0] * h[1] * h[2] * factor, h[1] * h[2] * factor)


def _band(grid: Grid, r_lo: Optional[float], r_hi: Optional[float]) -> np.ndarray:
    rs = grid.r
    lo = grid.r_min if r_lo is None else r_lo
    hi = grid.r_max if r_hi is None else r_hi
    tol = _RTOL * max(1.0, grid.r_max)
    if lo < grid.r_min - tol or hi > grid.r_max + tol or lo >= hi:
        raise RangeError(f"band [{lo}, {hi}] not inside grid range [{grid.r_min}, {grid.r_max}]")
    idx = np.nonzero((rs >= lo - tol) & (rs <= hi + tol))[0]
    if idx.size < 2:
        raise RangeError(f"band [{lo}, {hi}] contains fewer than two grid radii")
    return idx


def integrate_volume(rule: QuadratureRule, samples, r_lo: Optional[float] = None,
                     r_hi: Optional[float] = None) -> float:
    """Integral of grid samples over the radial band [r_lo, r_hi]:
    trapezoid in r over the grid radii inside the band, midpoint in theta."""
    samples = np.broadcast_to(np.asarray(samples, float), rule.grid.shape)
    idx = _band(rule.grid, r_lo, r_hi)
    w = trapezoid_weights(rule.grid.r[idx])
    return float(np.sum(w[:, None] * rule.volume_density[idx] * samples[idx]))


def integrate_surface(rule: QuadratureRule, samples, r: float) -> float:
    """Integral over the coordinate sphere of radius ``r`` (a grid radius).

    ``samples`` is either a full grid array or one ring of n_theta values.
    """
    i = rule.grid.radius_index(r)
    samples = np.asarray(samples, float)
    ring = samples[i] if samples.ndim == 2 else np.broadcast_to(samples, (rule.grid.n_theta,))
    return float(np.sum(rule.surface_weights[i] * ring))


def scalar_laplacian(rule: QuadratureRule, u: np.ndarray) -> np.ndarray:
    """Discrete Laplace-Beltrami operator of scalar grid samples:
    (1/sqrt g) d_i (sqrt g g^{ii} d_i u) with nested second-order differences."""
    grid = rule.grid
    h = frame_scales(rule.spec, grid)
    vol = h[0] * h[1] * h[2]
    out = fd_partial(vol / h[0] ** 2 * fd_partial(u, grid, 0), grid, 0)
    out = out + fd_partial(vol / h[1] ** 2 * fd_partial(u, grid, 1), grid, 1)
    return out / vol


def normal_flux(rule: QuadratureRule, u: np.ndarray, r: float) -> float:
    """Integral of the outward unit-normal derivative h_r^{-1} d_r u over the
    sphere of radius r."""
    h = frame_scales(rule.spec, rule.grid)
    return integrate_surface(rule, fd_partial(u, rule.grid, 0) / h[0], r)
