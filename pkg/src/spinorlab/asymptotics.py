"""Weighted norms, decay fits, Weitzenboeck checks, fluxes and b-extraction.

Grid quantities use the discretisation module's conventions: second-order
coordinate differences (``fd_partial``), trapezoid-in-r / midpoint-in-theta
volume quadrature and ring quadrature on coordinate spheres.  Curvature and
connection coefficients are always evaluated analytically at the nodes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .discretization import (Grid, GridSpinorField, build_quadrature, fd_partial, frame_scales,
                             integrate_volume)
from .errors import DegenerateData, InvalidParameter, NotHarmonic, RangeError
from .geometry import MetricSpec, scalar_curvature
from .jets import Jet
from .spinors import AnalyticSpinorField, SpinGeometry, connection_laplacian, dirac_squared

HARMONIC_THRESHOLD = 1e-6


# weighted norms --------------------------------------------------------------

@dataclass(frozen=True)
class WeightParams:
    p: float = 2.0
    delta: float = 0.0
    k: int = 0

    def __post_init__(self):
        if not np.isfinite(self.p) or self.p <= 1:
            raise InvalidParameter(f"p must be > 1, got {self.p}")
        if self.k not in (0, 1, 2):
            raise InvalidParameter(f"derivative order k must be 0, 1 or 2, got {self.k}")
        if not np.isfinite(self.delta):
            raise InvalidParameter("delta must be finite")


def harmonic_weight_range(p: float) -> tuple[float, float]:
    """Admissible epsilon interval (2/p, 2 - 2/p) for delta = -epsilon."""
    return 2.0 / p, 2.0 - 2.0 / p


def _coordinate_partials(values: np.ndarray, grid: Grid, k: int) -> list[np.ndarray]:
    out = [values]
    if k >= 1:
        dr = fd_partial(values, grid, 0)
        dt = fd_partial(values, grid, 1)
        out += [dr, dt]
    if k >= 2:
        # d_r d_theta appears twice among the ordered multi-indices
        drt = fd_partial(dr, grid, 1)
        out += [fd_partial(dr, grid, 0), drt, drt, fd_partial(dt, grid, 1)]
    return out


def weighted_norm(samples, grid: Grid, spec: MetricSpec, params: WeightParams) -> float:
    """[sum_{|l|<=k} int |d^l u|^p (1+r^2)^((-delta p + |l| p - 3)/2) dV]^(1/p).

    ``samples`` is real/complex scalar data (n_r, n_theta) or spinor data
    (n_r, n_theta, 2); |.| is the pointwise Euclidean norm.
    """
    values = np.asarray(samples.values if isinstance(samples, GridSpinorField) else samples)
    if values.shape[:2] != grid.shape:
        raise InvalidParameter(f"samples of shape {values.shape} do not match grid {grid.shape}")
    rule = build_quadrature(spec, grid)
    R, _ = grid.mesh()
    p, delta = params.p, params.delta
    orders = [0] + [1, 1] * (params.k >= 1) + [2] * 4 * (params.k >= 2)
    mags = [np.abs(d) if d.ndim == 2 else np.hypot.reduce(np.abs(d), axis=-1)
            for d in _coordinate_partials(values, grid, params.k)]
    # factor out the largest magnitude so |u|^p neither underflows nor overflows
    scale = max(float(m.max()) for m in mags)
    if scale == 0.0:
        return 0.0
    total = 0.0
    for order, mag in zip(orders, mags):
        w = (1.0 + R * R) ** ((-delta * p + order * p - 3.0) / 2.0)
        total += integrate_volume(rule, (mag / scale) ** p * w)
    return float(scale * total ** (1.0 / p))


# decay fits ------------------------------------------------------------------

def decay_rate_fit(samples, grid: Grid, theta_band: tuple[float, float] = (0.0, np.pi),
                   exclude_outer: bool = False) -> float:
    """Slope of log(theta-band average of |field|) against log r on the
    outer half of the grid radii (minus the last radius with
    ``exclude_outer``, e.g. for fields pinned to zero there)."""
    values = np.asarray(samples.values if isinstance(samples, GridSpinorField) else samples)
    mag = np.abs(values) if values.ndim == 2 else np.sqrt(np.sum(np.abs(values) ** 2, axis=-1))
    lo, hi = theta_band
    cols = (grid.theta >= lo) & (grid.theta <= hi)
    if not cols.any():
        raise InvalidParameter(f"theta band {theta_band} contains no grid angles")
    rows = np.arange(grid.n_r // 2, grid.n_r - 1 if exclude_outer else grid.n_r)
    if rows.size < 4:
        raise InvalidParameter("decay fit needs at least 4 radii in the outer half of the grid")
    avg = mag[np.ix_(rows, np.flatnonzero(cols))].mean(axis=1)
    if not np.all(avg > 0):
        raise DegenerateData("band average vanishes at some fit radius")
    slope, _ = np.polyfit(np.log(grid.r[rows]), np.log(avg), 1)
    return float(slope)


# Weitzenboeck / Lichnerowicz -------------------------------------------------

def lichnerowicz_residual(spec: MetricSpec, field: AnalyticSpinorField, r, theta) -> np.ndarray:
    """D(D xi) - nabla^* nabla xi - (R/4) xi at the given points."""
    R = scalar_curvature(spec, r, theta)
    xi = field(r, theta)
    return dirac_squared(spec, field, r, theta) - connection_laplacian(spec, field, r, theta) \
        - 0.25 * R[..., None] * xi


def grid_covariant_derivatives(spec: MetricSpec, theta: GridSpinorField) -> np.ndarray:
    """nabla_{e_i} Theta at every node, shape (3, n_r, n_theta, 2): second-order
    differences for the frame derivatives, analytic connection matrices."""
    grid = theta.grid
    R, T = grid.mesh()
    jr, jt = Jet.coords(R, T, 1)
    geo = SpinGeometry.at(spec, jr, jt)
    h = frame_scales(spec, grid)
    vals = theta.values
    out = np.empty((3,) + vals.shape, complex)
    for i in range(3):
        d = fd_partial(vals, grid, i) / h[i][..., None] if i < 2 else 0.0
        out[i] = d + np.einsum("...ij,...j->...i", geo.omega[i].val, vals)
    return out


def weitzenboeck_density(spec: MetricSpec, theta: GridSpinorField) -> np.ndarray:
    """R |Theta|^2 + 4 |nabla Theta|^2 at every node."""
    R, T = theta.grid.mesh()
    nab = grid_covariant_derivatives(spec, theta)
    grad2 = np.sum(np.abs(nab) ** 2, axis=(0, -1))
    return scalar_curvature(spec, R, T) * theta.norm2() + 4.0 * grad2


FLUX_MEASURES = ("volume", "induced")


def _ring_weights(spec: MetricSpec, grid: Grid, measure: str) -> np.ndarray:
    """Per-node ring weights on coordinate spheres.

    "induced": the induced area sqrt(g_tt g_pp) dtheta dphi, the measure of
    the divergence theorem.  "volume": the volume density sqrt(det g)
    dtheta dphi restricted to the sphere, i.e. the induced area times h_r;
    this is the weighting under which |Theta|^2 = F has flux
    (16/3) pi b r^3 on Melvin-type metrics.
    """
    rule = build_quadrature(spec, grid)
    if measure == "induced":
        return rule.surface_weights
    if measure == "volume":
        return rule.volume_density
    raise InvalidParameter(f"flux measure must be one of {FLUX_MEASURES}, got {measure!r}")


def _flux_all(spec: MetricSpec, theta: GridSpinorField, measure: str = "volume") -> np.ndarray:
    grid = theta.grid
    h = frame_scales(spec, grid)
    dn = fd_partial(theta.norm2(), grid, 0) / h[0]
    return np.sum(_ring_weights(spec, grid, measure) * dn, axis=1)


def boundary_flux(spec: MetricSpec, theta: GridSpinorField, r: float, measure: str = "volume") -> float:
    """Ring integral at radius r of the unit-normal derivative h_r^{-1} d_r |Theta|^2."""
    i = theta.grid.radius_index(r)
    return float(_flux_all(spec, theta, measure)[i])


def _theta_rows(grid: Grid, theta_band: Optional[tuple[float, float]]) -> tuple[int, int]:
    if theta_band is None:
        return 0, grid.n_theta - 1
    lo, hi = theta_band
    rows = np.flatnonzero((grid.theta >= lo) & (grid.theta <= hi))
    if rows.size < 2:
        raise RangeError(f"theta band {theta_band} contains fewer than two grid angles")
    return int(rows[0]), int(rows[-1])


def _cone_flux(spec: MetricSpec, grid: Grid, u: np.ndarray, j: int, i_lo: int, i_hi: int) -> float:
    """Integral of h_theta^{-1} d_theta u over the cone midway between polar
    rows j-1 and j (increasing-theta normal), radii i_lo..i_hi."""
    from .discretization import trapezoid_weights
    rs = grid.r[i_lo:i_hi + 1]
    t = np.full_like(rs, grid.theta[j] - 0.5 * grid.dtheta)
    g = spec.components(rs, t, order=0)
    h1, h2, h3 = (np.sqrt(x.val) for x in g)
    du = (u[i_lo:i_hi + 1, j] - u[i_lo:i_hi + 1, j - 1]) / grid.dtheta
    return float(2.0 * np.pi * np.sum(trapezoid_weights(rs) * h1 * h3 / h2 * du))


def scalar_weitzenbock_check(spec: MetricSpec, theta: GridSpinorField,
                             band: Optional[tuple[float, float]] = None,
                             theta_band: Optional[tuple[float, float]] = None) -> float:
    """Relative defect of the integrated identity
    int_region (R|Theta|^2 + 4|nabla Theta|^2) = 2 (net outward flux of grad |Theta|^2)
    over the region band x theta_band.

    The net flux is radial (flux(r_hi) - flux(r_lo), induced measure) plus,
    when ``theta_band`` cuts the polar range, the two bounding cones.  The
    full polar range has no cone terms, which is only right for fields whose
    |Theta|^2 is regular on the axis.  Diagnostic only: a non-harmonic field
    simply produces an O(1) value.
    """
    grid = theta.grid
    lo, hi = band if band is not None else (grid.r_min, grid.r_max)
    i_lo, i_hi = grid.radius_index(lo), grid.radius_index(hi)
    if i_hi <= i_lo:
        raise RangeError(f"band [{lo}, {hi}] is empty")
    j_lo, j_hi = _theta_rows(grid, theta_band)
    mask = np.zeros(grid.n_theta)
    mask[j_lo:j_hi + 1] = 1.0
    rule = build_quadrature(spec, grid)
    vol = integrate_volume(rule, weitzenboeck_density(spec, theta) * mask, lo, hi)

    u = theta.norm2()
    h = frame_scales(spec, grid)
    dn = fd_partial(u, grid, 0) / h[0]
    flux = np.sum((rule.surface_weights * dn)[:, j_lo:j_hi + 1], axis=1)
    net = flux[i_hi] - flux[i_lo]
    if j_lo > 0:
        net -= _cone_flux(spec, grid, u, j_lo, i_lo, i_hi)
    if j_hi < grid.n_theta - 1:
        net += _cone_flux(spec, grid, u, j_hi + 1, i_lo, i_hi)
    rhs = 2.0 * net
    if vol == 0:
        return float(abs(rhs))
    return float(abs(vol - rhs) / abs(vol))


# flux series and b -----------------------------------------------------------

def _power_fit(r: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    good = y > 0
    if good.sum() < 3:
        return float("nan"), float("nan")
    s, logc = np.polyfit(np.log(r[good]), np.log(y[good]), 1)
    return float(np.exp(logc)), float(s)


@dataclass
class FluxSeries:
    radii: np.ndarray
    flux: np.ndarray
    coefficient: float
    exponent: float
    tolerance: float = 0.0
    negative: list = field(default_factory=list)
    measure: str = "volume"

    def __post_init__(self):
        self.radii = np.asarray(self.radii, float)
        self.flux = np.asarray(self.flux, float)
        if self.radii.size < 3 or np.any(np.diff(self.radii) <= 0):
            raise InvalidParameter("flux series needs >= 3 strictly increasing radii")

    @property
    def nonnegative(self) -> bool:
        return not self.negative

    def to_csv(self, path) -> Path:
        return _write_rv_csv(path, self.radii, self.flux, "flux")

    def summary(self) -> dict:
        return {"measure": self.measure, "coefficient": self.coefficient, "exponent": self.exponent, "tolerance": self.tolerance,
                "negative_radii": [float(r) for r in self.negative], "nonnegative": self.nonnegative,
                "min_flux": float(self.flux.min())}


def flux_series(spec: MetricSpec, theta: GridSpinorField, radii: Optional[Sequence[float]] = None,
                tol: float = 0.0, measure: str = "volume") -> FluxSeries:
    grid = theta.grid
    flux = _flux_all(spec, theta, measure)
    idx = np.arange(grid.n_r) if radii is None else np.array([grid.radius_index(r) for r in radii])
    r, f = grid.r[idx], flux[idx]
    c, s = _power_fit(r, f)
    neg = [float(x) for x, y in zip(r, f) if y < -tol]
    return FluxSeries(r, f, c, s, tol, neg, measure)


def flux_nonnegativity(spec: MetricSpec, theta: GridSpinorField, tol: float = 0.0,
                       measure: str = "induced") -> FluxSeries:
    """Flux at every grid radius; radii with flux < -tol are flagged.

    The inequality comes from integrating the Weitzenboeck identity, so the
    divergence-theorem (induced) measure is the default.
    """
    return flux_series(spec, theta, tol=tol, measure=measure)


@dataclass
class BEstimate:
    value: float
    method: str
    radii: np.ndarray
    raw: np.ndarray
    extrapolated: float
    fit_window: tuple
    fit_terms: int
    fit_residual: float
    harmonicity_defect: Optional[float] = None
    dirac_residual: Optional[float] = None
    measure: Optional[str] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["radii"] = [float(x) for x in self.radii]
        d["raw"] = [float(x) for x in self.raw]
        d["fit_window"] = [float(x) for x in self.fit_window]
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps({"schema_version": 1, **self.to_dict()}, indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text

    def to_csv(self, path) -> Path:
        return _write_rv_csv(path, self.radii, self.raw, "b")


def richardson_in_inverse_r(r: np.ndarray, values: np.ndarray, terms: int = 3) -> tuple[float, float]:
    """Least-squares fit values ~ b + c1/r + ... + c_{terms-1}/r^{terms-1};
    returns (b, rms fit residual)."""
    r = np.asarray(r, float)
    if r.size < terms:
        raise RangeError(f"extrapolation with {terms} terms needs >= {terms} radii, got {r.size}")
    V = np.stack([r ** (-j) for j in range(terms)], axis=1)
    coef, *_ = np.linalg.lstsq(V, values, rcond=None)
    resid = values - V @ coef
    return float(coef[0]), float(np.sqrt(np.mean(resid ** 2)))


def _default_window(grid: Grid) -> np.ndarray:
    """Interior grid radii in the outer half."""
    return np.arange(grid.n_r // 2, grid.n_r - 1)


def estimate_b(spec: MetricSpec, theta: GridSpinorField, method: str = "boundary",
               radii: Optional[Sequence[float]] = None, terms: int = 3,
               threshold: float = HARMONIC_THRESHOLD, measure: str = "volume") -> BEstimate:
    """Decay coefficient b from the flux (boundary) or Weitzenboeck (volume) expression.

    boundary: 3 flux(r) / (16 pi r^3); volume: 3/(32 pi) r^-3 int_[r_min, r] (R|Theta|^2 + 4|nabla Theta|^2).
    ``measure`` selects the ring weighting of the boundary flux (see
    :func:`boundary_flux`).  The volume method refuses fields whose discrete Dirac residual exceeds
    ``threshold`` (relative normal-equation residual).
    """
    grid = theta.grid
    idx = _default_window(grid) if radii is None else np.array([grid.radius_index(r) for r in radii])
    if idx.size < terms:
        raise RangeError(f"need at least {terms} radii for the extrapolation, got {idx.size}")
    r = grid.r[idx]
    defect = strong = None
    if method == "boundary":
        flux = _flux_all(spec, theta, measure)[idx]
        raw = 3.0 * flux / (16.0 * np.pi * r ** 3)
    elif method == "volume":
        from .solver import assemble, dirac_residual, harmonicity_defect
        op = assemble(spec, grid, dirichlet=theta.dirichlet if theta.dirichlet.any() else None)
        defect = harmonicity_defect(op, theta.values)
        strong = dirac_residual(op, theta.values)
        if not defect <= threshold:
            raise NotHarmonic(f"discrete Dirac residual {defect:.3e} exceeds {threshold:.1e}; "
                              "the volume expression only holds for harmonic fields")
        rule = build_quadrature(spec, grid)
        dens = weitzenboeck_density(spec, theta)
        vol = np.array([integrate_volume(rule, dens, grid.r_min, rr) for rr in r])
        raw = 3.0 * vol / (32.0 * np.pi * r ** 3)
    else:
        raise InvalidParameter(f"method must be 'boundary' or 'volume', got {method!r}")
    b, res = richardson_in_inverse_r(r, raw, terms)
    return BEstimate(value=b, method=method, radii=r, raw=raw, extrapolated=b,
                     fit_window=(float(r[0]), float(r[-1])), fit_terms=terms, fit_residual=res,
                     harmonicity_defect=defect, dirac_residual=strong, measure=measure if method == "boundary" else None)


def _write_rv_csv(path, r, v, name: str) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("r", name))
        for a, b in zip(r, v):
            w.writerow((repr(float(a)), repr(float(b))))
    return path
