"""Discrete Dirac operator, least-squares solves and injectivity probes.

The operator is discretised with a cell-centred box scheme: one equation
per grid cell, evaluated at the cell centre, using the four corner nodes.
Coordinate derivatives are averaged edge differences, the zeroth-order
(connection) term is the corner average, and all coefficients come from the
analytic spin geometry at the cell centre.  There are more cells than
interior nodes, so the system is solved in the least-squares sense by
conjugate gradients on the normal equations (CGLS) with Jacobi column
scaling.

Complex spinors are realified per node as (Re xi1, Im xi1, Re xi2, Im xi2).
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import Grid, GridSpinorField, build_quadrature
from .errors import DomainError, InvalidParameter, NonConvergence
from .geometry import Family, MetricSpec
from .jets import Jet
from .spinors import GAMMA, SpinGeometry, dirac_apply, theta0_construct


def realify_matrix(M: np.ndarray) -> np.ndarray:
    """(..., 2, 2) complex -> (..., 4, 4) real acting on realified spinors."""
    out = np.zeros(M.shape[:-2] + (4, 4))
    out[..., 0::2, 0::2] = M.real
    out[..., 0::2, 1::2] = -M.imag
    out[..., 1::2, 0::2] = M.imag
    out[..., 1::2, 1::2] = M.real
    return out


def to_real(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, complex)
    return np.stack([v[..., 0].real, v[..., 0].imag, v[..., 1].real, v[..., 1].imag], -1).reshape(-1)


def from_real(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, float).reshape(-1, 4)
    return np.stack([x[:, 0] + 1j * x[:, 1], x[:, 2] + 1j * x[:, 3]], -1)


def dirac_coefficients(spec: MetricSpec, r, theta):
    """Matrices (A_r, A_theta, W) with D = A_r d_r + A_theta d_theta + W."""
    jr, jt = Jet.coords(r, theta, 1)
    geo = SpinGeometry.at(spec, jr, jt)
    h1, h2 = geo.h[0].val, geo.h[1].val
    W = sum(np.einsum("ij,...jk->...ik", GAMMA[i], geo.omega[i].val) for i in range(3))
    A_r = GAMMA[0] / h1[..., None, None]
    A_t = GAMMA[1] / h2[..., None, None]
    return A_r, A_t, W


@dataclass
class DiscreteOperator:
    spec: MetricSpec
    grid: Grid
    full: sp.csr_matrix           # all nodes as columns
    matrix: sp.csr_matrix         # unknown (non-Dirichlet) nodes as columns
    dirichlet: np.ndarray         # (n_r, n_theta) bool
    cell_r: np.ndarray            # cell-centre coordinates, flattened
    cell_theta: np.ndarray
    boundary: str = "dirichlet-all-edges"

    @property
    def n_cells(self) -> int:
        return self.cell_r.size

    @property
    def unknown_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet.ravel())

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Discrete Dirac operator on nodal values (n_r, n_theta, 2); returns
        one spinor per cell, shape (n_cells, 2)."""
        return from_real(self.full @ to_real(values))

    def split(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Realified (unknown, Dirichlet) parts of nodal values."""
        flat = np.asarray(values, complex).reshape(-1, 2)
        mask = self.dirichlet.ravel()
        return to_real(flat[~mask]), to_real(flat[mask])

    def dirichlet_matrix(self) -> sp.csr_matrix:
        cols = _real_columns(np.flatnonzero(self.dirichlet.ravel()))
        return self.full.tocsc()[:, cols].tocsr()

    def scaled(self, c: float) -> "DiscreteOperator":
        return DiscreteOperator(self.spec, self.grid, c * self.full, c * self.matrix, self.dirichlet,
                                self.cell_r, self.cell_theta, self.boundary)


def _real_columns(nodes: np.ndarray) -> np.ndarray:
    return (4 * nodes[:, None] + np.arange(4)).ravel()


def assemble(spec: MetricSpec, grid: Grid, dirichlet: Optional[np.ndarray] = None) -> DiscreteOperator:
    """Box-scheme discretisation of the Dirac operator of ``spec`` on ``grid``."""
    if spec.family is Family.EtaMinus:
        raise InvalidParameter("the compactifying eta^- metric is not usable by the solver")
    if grid.r_min <= spec.horizon:
        raise DomainError(f"grid reaches r={grid.r_min} <= 2M = {spec.horizon}")
    if grid.n_theta < 2:
        raise InvalidParameter("the box scheme needs n_theta >= 2")
    nr, nt = grid.shape
    rs, ts = grid.r, grid.theta
    rc = 0.5 * (rs[:-1] + rs[1:])
    tc = 0.5 * (ts[:-1] + ts[1:])
    RC, TC = np.meshgrid(rc, tc, indexing="ij")
    A_r, A_t, W = dirac_coefficients(spec, RC.ravel(), TC.ravel())

    ci, cj = np.meshgrid(np.arange(nr - 1), np.arange(nt - 1), indexing="ij")
    ci, cj = ci.ravel(), cj.ravel()
    dr = (rs[1:] - rs[:-1])[ci]
    n_cells = ci.size
    rows, cols, vals = [], [], []
    row_base = 4 * np.arange(n_cells)
    for a in (0, 1):
        for b in (0, 1):
            sr = (1.0 if a else -1.0) / (2.0 * dr)
            st = (1.0 if b else -1.0) / (2.0 * grid.dtheta)
            block = realify_matrix(sr[:, None, None] * A_r + st * A_t + 0.25 * W)
            node = (ci + a) * nt + (cj + b)
            p, q = np.meshgrid(np.arange(4), np.arange(4), indexing="ij")
            rows.append((row_base[:, None, None] + p).ravel())
            cols.append((4 * node[:, None, None] + q).ravel())
            vals.append(block.ravel())
    rows, cols, vals = (np.concatenate(x) for x in (rows, cols, vals))
    keep = vals != 0
    full = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(4 * n_cells, 4 * nr * nt))
    full.sum_duplicates()

    if dirichlet is None:
        dirichlet = grid.boundary_mask()
    dirichlet = np.asarray(dirichlet, bool)
    unknown = _real_columns(np.flatnonzero(~dirichlet.ravel()))
    matrix = full.tocsc()[:, unknown].tocsr()
    return DiscreteOperator(spec, grid, full, matrix, dirichlet, RC.ravel(), TC.ravel())


def sample_rhs(op: DiscreteOperator, field) -> np.ndarray:
    """Analytic D(field) at the cell centres, shape (n_cells, 2)."""
    return dirac_apply(op.spec, field, op.cell_r, op.cell_theta)


# solving --------------------------------------------------------------------

@dataclass
class SolveReport:
    iterations: int
    residual: float               # ||D u - rho|| / ||rho|| over all cell equations
    normal_residual: float        # ||D^T (D u - rho)|| / ||D^T rho||
    converged: bool
    wall_time: Optional[float]
    l2_error: Optional[float] = None
    tol: float = 0.0
    boundary: str = "dirichlet-all-edges"
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path=None, deterministic: bool = False) -> str:
        d = self.to_dict()
        if deterministic:
            d["wall_time"] = None
        text = json.dumps({"schema_version": 1, **d}, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


def cgls(A: sp.spmatrix, b: np.ndarray, tol: float, max_iter: int):
    """CG on A^T A x = A^T b with Jacobi column scaling.

    Returns (x, iterations, relative normal-equation residual).
    """
    colnorm = np.sqrt(np.asarray(A.multiply(A).sum(axis=0)).ravel())
    d = np.where(colnorm > 0, 1.0 / np.where(colnorm > 0, colnorm, 1.0), 0.0)
    As = (A @ sp.diags(d)).tocsr()
    AsT = As.T.tocsr()
    x = np.zeros(A.shape[1])
    r = b.astype(float).copy()
    s = AsT @ r
    g0 = float(s @ s)
    if g0 == 0.0:
        return x, 0, 0.0
    p = s.copy()
    g = g0
    k = 0
    rel = 1.0
    while k < max_iter:
        q = As @ p
        alpha = g / float(q @ q)
        x += alpha * p
        r -= alpha * q
        s = AsT @ r
        g_new = float(s @ s)
        k += 1
        rel = np.sqrt(g_new / g0)
        if rel <= tol:
            break
        p = s + (g_new / g) * p
        g = g_new
    return d * x, k, float(rel)


def solve_least_squares(op: DiscreteOperator, rhs, tol: float = 1e-10, max_iter: int = 20000,
                        dirichlet_values: Optional[np.ndarray] = None,
                        reference: Optional[np.ndarray] = None,
                        raise_on_failure: bool = True) -> tuple[GridSpinorField, SolveReport]:
    """Minimise ||D u - rhs|| over nodal fields equal to ``dirichlet_values``
    on the Dirichlet nodes (zero by default).

    ``rhs`` is one spinor per cell (n_cells, 2).  ``reference`` (nodal
    values) enables the L2 error in the report.
    """
    if tol <= 0:
        raise InvalidParameter("tol must be positive")
    rhs = np.asarray(rhs, complex)
    if rhs.shape != (op.n_cells, 2):
        raise InvalidParameter(f"rhs must have shape ({op.n_cells}, 2), got {rhs.shape}")
    t0 = time.perf_counter()
    grid = op.grid
    values = np.zeros(grid.shape + (2,), complex)
    if dirichlet_values is not None:
        values[op.dirichlet] = np.asarray(dirichlet_values, complex)[op.dirichlet]
    _, y = op.split(values)
    b = to_real(rhs) - op.dirichlet_matrix() @ y
    x, its, rel = cgls(op.matrix, b, tol, max_iter)

    flat = values.reshape(-1, 2)
    flat[op.unknown_nodes] = from_real(x)
    values = flat.reshape(grid.shape + (2,))

    rho = to_real(rhs)
    resid_vec = op.full @ to_real(values) - rho
    rho_norm = np.linalg.norm(rho)
    residual = float(np.linalg.norm(resid_vec) / rho_norm) if rho_norm > 0 else float(np.linalg.norm(resid_vec))
    nb = np.linalg.norm(op.matrix.T @ b)
    normal = float(np.linalg.norm(op.matrix.T @ resid_vec) / nb) if nb > 0 else 0.0

    l2 = None
    if reference is not None:
        l2 = l2_error(op, values, reference)
    report = SolveReport(iterations=its, residual=residual, normal_residual=normal,
                         converged=bool(rel <= tol), wall_time=time.perf_counter() - t0,
                         l2_error=l2, tol=tol, boundary=op.boundary)
    out = GridSpinorField(grid, values, op.spec.tag, op.dirichlet.copy())
    if not report.converged and raise_on_failure:
        raise NonConvergence(f"CGLS stopped after {its} iterations at relative normal residual {rel:.3e} "
                             f"(tol {tol:.1e})", report)
    return out, report


def l2_error(op: DiscreteOperator, values: np.ndarray, reference: np.ndarray) -> float:
    """sqrt of the volume integral of |u - u_ref|^2 over the grid."""
    rule = build_quadrature(op.spec, op.grid)
    diff = np.sum(np.abs(np.asarray(values) - np.asarray(reference)) ** 2, axis=-1)
    return float(np.sqrt(np.sum(rule.volume_weights * diff)))


def solve_harmonic_correction(spec: MetricSpec, grid: Grid, xi0=(1.0, 0.0), tol: float = 1e-10,
                              max_iter: int = 20000, rhs_mode: str = "discrete"
                              ) -> tuple[GridSpinorField, SolveReport]:
    """Solve D Theta~ = D Theta0 with Theta~ = 0 on every edge and return
    (Theta = Theta~ - Theta0, report).  Theta~ is Theta plus the sampled Theta0.

    ``rhs_mode="discrete"`` applies the assembled operator to the sampled
    Theta0, which makes Theta the least-squares harmonic extension of the
    boundary values -Theta0; ``"analytic"`` samples D Theta0 exactly at the
    cell centres (the two differ by the O(h^2) truncation error).
    """
    if spec.family in (Family.EtaPlus, Family.EtaMinus, Family.Derived):
        raise InvalidParameter(f"harmonic correction needs a Melvin-type or flat metric, got {spec.family.value}")
    theta0 = theta0_construct(spec, xi0)
    op = assemble(spec, grid)
    T0 = GridSpinorField.sample(theta0, grid)
    if rhs_mode == "discrete":
        rho = op.apply(T0.values)
    elif rhs_mode == "analytic":
        rho = sample_rhs(op, theta0)
    else:
        raise InvalidParameter(f"rhs_mode must be 'discrete' or 'analytic', got {rhs_mode!r}")
    tilde, report = solve_least_squares(op, rho, tol=tol, max_iter=max_iter)
    report.notes.append(f"rhs_mode={rhs_mode}")
    report.notes.append("outer and inner edges carry Theta~ = 0; the truncation error of this "
                        "condition is not controlled by tol")
    theta = GridSpinorField(grid, tilde.values - T0.values, spec.tag, op.dirichlet.copy())
    return theta, report


def harmonicity_defect(op: DiscreteOperator, values: np.ndarray) -> float:
    """Relative normal-equation residual of a nodal field viewed as a
    least-squares harmonic extension of its own Dirichlet values:
    ||D_u^T D v|| / ||D_u^T D_b v_b||, where D_u, D_b are the unknown and
    Dirichlet column blocks."""
    x, y = op.split(values)
    Db = op.dirichlet_matrix()
    num = np.linalg.norm(op.matrix.T @ (op.matrix @ x + Db @ y))
    den = np.linalg.norm(op.matrix.T @ (Db @ y))
    if den == 0:
        return float(num)
    return float(num / den)


def dirac_residual(op: DiscreteOperator, values: np.ndarray) -> float:
    """||D v|| / ||D v_b||, with v_b the field zeroed off the Dirichlet nodes:
    the strong residual of v relative to its Dirichlet forcing."""
    x, y = op.split(values)
    den = np.linalg.norm(op.dirichlet_matrix() @ y)
    num = np.linalg.norm(op.full @ to_real(values))
    return float(num / den) if den > 0 else float(num)


def smallest_singular_value(op: DiscreteOperator, iterations: int = 500, tol: float = 1e-10,
                            seed: int = 0) -> float:
    """Smallest singular value of the Dirichlet-reduced operator.

    Shift-invert Lanczos on D^T D around zero; the low end of the spectrum
    is tightly clustered, which makes plain inverse iteration crawl.
    """
    A = op.matrix
    N = (A.T @ A).tocsc()
    v0 = np.random.default_rng(seed).standard_normal(A.shape[1])
    try:
        lam = spla.eigsh(N, k=1, sigma=0.0, which="LM", v0=v0, maxiter=iterations, tol=tol,
                         return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise NonConvergence(f"shift-invert Lanczos did not converge in {iterations} restarts") from exc
    except RuntimeError as exc:
        # exactly singular normal matrix: no injectivity
        raise NonConvergence(f"normal matrix is singular: {exc}") from exc
    return float(np.sqrt(max(lam[0], 0.0)))
