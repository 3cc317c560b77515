"""Two-component spinors, the spin connection and the frame Dirac operator.

Clifford multiplication by the k-th frame covector is the matrix
gamma_k = i sigma_k, so gamma_i gamma_j + gamma_j gamma_i = -2 delta_ij.
The spin covariant derivative is

    nabla_{e_i} xi = e_i(xi) - 1/4 C_mij gamma_m gamma_j xi,
    C_mij = <e_m, nabla_{e_i} e_j>,

and the Dirac operator is D = sum_k gamma_k nabla_{e_k}.  Fields are
phi-independent, so e_3(xi) = 0 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import jets
from .errors import FrameMismatch, InvalidParameter, NonpositiveConformalFactor, NonpositiveWarp
from .geometry import MetricSpec, conformal_metric, connection_jets, warped_metric
from .jets import Jet

SIGMA = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)
GAMMA = 1j * SIGMA


def clifford_mul(k: int, xi) -> np.ndarray:
    """gamma_k xi for k in {1, 2, 3}; ``xi`` has trailing axis of length 2."""
    if k not in (1, 2, 3):
        raise InvalidParameter(f"Clifford index must be 1, 2 or 3, got {k}")
    return np.einsum("ij,...j->...i", GAMMA[k - 1], np.asarray(xi, complex))


def norm2(xi) -> np.ndarray:
    xi = np.asarray(xi)
    return np.sum((xi * np.conj(xi)).real, axis=-1)


# fields -------------------------------------------------------------------

SpinorFn = Callable[[Jet, Jet], Jet]


@dataclass(frozen=True)
class AnalyticSpinorField:
    """Closed-form spinor field xi(r, theta) with components in the
    orthonormal frame of the metric named by ``frame``.

    ``fn`` maps coordinate jets to a jet with trailing value axis of length
    2, so derivatives come out of jet arithmetic.
    """

    fn: SpinorFn
    frame: str
    name: str = "field"

    def jet(self, r: Jet, t: Jet) -> Jet:
        out = self.fn(r, t)
        if out.shape[-1:] != (2,):
            raise ValueError("spinor field must return a jet with trailing axis 2")
        return Jet(out.c.astype(complex), out.order)

    def __call__(self, r, theta, order: int = 0) -> np.ndarray:
        jr, jt = Jet.coords(r, theta, order)
        return self.jet(jr, jt).val

    def derivatives(self, r, theta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(xi, d_r xi, d_theta xi)."""
        jr, jt = Jet.coords(r, theta, 1)
        j = self.jet(jr, jt)
        return j.val, j.c[1], j.c[2]

    def retag(self, spec: MetricSpec) -> "AnalyticSpinorField":
        """Same components read in the frame of another metric."""
        return AnalyticSpinorField(self.fn, spec.tag, self.name)

    def scaled(self, u: Callable[[Jet, Jet], Jet], name: Optional[str] = None) -> "AnalyticSpinorField":
        """The field u * xi for a scalar jet function u."""
        fn = self.fn
        return AnalyticSpinorField(lambda r, t: u(r, t).expand() * fn(r, t), self.frame,
                                   name or f"u*{self.name}")


def constant_field(xi0, spec: MetricSpec, name: str = "constant") -> AnalyticSpinorField:
    xi0 = np.asarray(xi0, complex)

    def fn(r, t):
        return Jet.const(np.broadcast_to(xi0, r.shape + (2,)).copy(), r.order)
    return AnalyticSpinorField(fn, spec.tag, name)


def _check_frame(spec: MetricSpec, field: AnalyticSpinorField) -> None:
    if field.frame != spec.tag:
        raise FrameMismatch(f"field {field.name!r} refers to frame {field.frame!r}, "
                            f"operator metric is {spec.tag!r}")


# pointwise machinery on jets ----------------------------------------------

@dataclass
class SpinGeometry:
    """Scale factors and spin-connection matrices of a metric at points.

    ``omega[i]`` is the 2x2 matrix -1/4 sum_mj C_mij gamma_m gamma_j, so
    nabla_{e_i} = e_i + omega[i].
    """

    h: list
    C: list
    omega: list

    @classmethod
    def at(cls, spec: MetricSpec, r: Jet, t: Jet) -> "SpinGeometry":
        g = spec.component_jets(r, t)
        C = connection_jets(g)
        h = [jets.sqrt(gi) for gi in g]
        omega = []
        for i in range(3):
            c = np.zeros((6,) + r.shape + (2, 2), complex)
            for m in range(3):
                for j in range(3):
                    if m == j:
                        continue
                    gg = GAMMA[m] @ GAMMA[j]
                    c = c + np.multiply.outer(C[m][i][j].c, gg)
            omega.append(Jet(-0.25 * c, C[0][0][0].order))
        return cls(h=h, C=C, omega=omega)

    def frame_derivative(self, xi: Jet, i: int) -> Jet:
        """e_i(xi); zero along the Killing direction."""
        if i == 2:
            return Jet(np.zeros_like(xi.c), xi.order - 1)
        return (1.0 / self.h[i]).expand() * xi.d(i)

    def nabla(self, xi: Jet, i: int) -> Jet:
        return self.frame_derivative(xi, i) + jets.matvec(self.omega[i], xi)

    def dirac(self, xi: Jet) -> Jet:
        out = None
        for i in range(3):
            term = jets.const_matvec(GAMMA[i], self.nabla(xi, i))
            out = term if out is None else out + term
        return out

    def connection_laplacian(self, xi: Jet) -> Jet:
        """nabla^* nabla xi = -sum_i (nabla_i nabla_i xi - nabla_{nabla_{e_i} e_i} xi)."""
        first = [self.nabla(xi, i) for i in range(3)]
        out = None
        for i in range(3):
            term = self.nabla(first[i], i)
            for j in range(3):
                term = term - self.C[j][i][i].expand() * first[j]
            out = -term if out is None else out - term
        return out


def _coords(spec: MetricSpec, r, theta, order: int):
    spec.check_domain(r, theta)
    return Jet.coords(r, theta, order)


def spin_covariant_derivative(spec: MetricSpec, field: AnalyticSpinorField, i: int, r, theta) -> np.ndarray:
    """nabla_{e_i} xi at the given points, frame index i in {1, 2, 3}."""
    if i not in (1, 2, 3):
        raise InvalidParameter(f"frame index must be 1, 2 or 3, got {i}")
    _check_frame(spec, field)
    jr, jt = _coords(spec, r, theta, 1)
    geo = SpinGeometry.at(spec, jr, jt)
    return geo.nabla(field.jet(jr, jt), i - 1).val


def dirac_apply(spec: MetricSpec, field: AnalyticSpinorField, r, theta) -> np.ndarray:
    _check_frame(spec, field)
    jr, jt = _coords(spec, r, theta, 1)
    geo = SpinGeometry.at(spec, jr, jt)
    return geo.dirac(field.jet(jr, jt)).val


def _dirac_of(spec: MetricSpec, fn: SpinorFn, jr: Jet, jt: Jet) -> Jet:
    return SpinGeometry.at(spec, jr, jt).dirac(fn(jr, jt))


# transformation lemmas ------------------------------------------------------

def conformal_residual(spec_g: MetricSpec, zeta: Callable[[Jet, Jet], Jet],
                       field: AnalyticSpinorField, r, theta) -> np.ndarray:
    """D_{zeta^2 g}(zeta^-1 xi) - zeta^-2 D_g xi, which vanishes identically
    in three dimensions."""
    _check_frame(spec_g, field)
    jr, jt = _coords(spec_g, r, theta, 1)
    z = zeta(jr, jt)
    if np.any(z.val <= 0):
        raise NonpositiveConformalFactor("conformal factor must be positive")
    spec_hat = conformal_metric(spec_g, zeta)
    lhs = _dirac_of(spec_hat, lambda a, b: (1.0 / zeta(a, b)).expand() * field.jet(a, b), jr, jt)
    rhs = (z ** -2.0).expand() * _dirac_of(spec_g, field.jet, jr, jt)
    return (lhs - rhs).val


def fiber_rescale_residual(spec_base: MetricSpec, f: Callable[[Jet, Jet], Jet],
                           q: Callable[[Jet, Jet], Jet], alpha: float,
                           field: AnalyticSpinorField, r, theta) -> np.ndarray:
    """D_ghat(q^alpha xi) - q^alpha D_g xi for ghat = gbar + f dphi^2 and
    g = gbar + q f dphi^2, with gbar the (r, theta) block of ``spec_base``.

    The field's components are read in the frame of ``spec_base``'s
    (r, theta) block together with the unit phi-direction of each metric,
    which is the identification used for both operators.
    """
    if field.frame != spec_base.tag:
        raise FrameMismatch(f"field refers to {field.frame!r}, base metric is {spec_base.tag!r}")
    jr, jt = _coords(spec_base, r, theta, 1)
    if np.any(f(jr, jt).val <= 0) or np.any(q(jr, jt).val <= 0):
        raise NonpositiveWarp("warp functions f and q must be positive")
    g_hat = warped_metric(spec_base, f)
    g = warped_metric(spec_base, lambda a, b: q(a, b) * f(a, b))
    lhs = _dirac_of(g_hat, lambda a, b: (q(a, b) ** alpha).expand() * field.jet(a, b), jr, jt)
    rhs = (q(jr, jt) ** alpha).expand() * _dirac_of(g, field.jet, jr, jt)
    return (lhs - rhs).val


@dataclass
class SweepResult:
    alphas: np.ndarray
    mean_residual: np.ndarray
    max_residual: np.ndarray
    alpha_star: float
    max_residual_at_star: float
    reference_alpha: float = -3.0 / 8.0

    @property
    def agrees_with_reference(self) -> bool:
        return bool(np.isclose(self.alpha_star, self.reference_alpha))

    def as_dict(self) -> dict:
        return {
            "alpha_star": self.alpha_star,
            "max_residual_at_star": self.max_residual_at_star,
            "reference_alpha": self.reference_alpha,
            "agrees_with_reference": self.agrees_with_reference,
            "residual_at_reference": float(np.interp(self.reference_alpha, self.alphas, self.mean_residual)),
        }


def fiber_rescale_sweep(spec_base, f, q, field, r, theta, alphas=None) -> SweepResult:
    """Scan the fibre-rescaling exponent and report the minimiser of the
    mean residual norm over the sample points."""
    if alphas is None:
        alphas = np.arange(-16, 17) / 16.0
    alphas = np.asarray(alphas, float)
    means, maxes = [], []
    for a in alphas:
        res = np.sqrt(norm2(fiber_rescale_residual(spec_base, f, q, a, field, r, theta)))
        means.append(res.mean())
        maxes.append(res.max())
    means, maxes = np.array(means), np.array(maxes)
    k = int(np.argmin(means))
    return SweepResult(alphas, means, maxes, float(alphas[k]), float(maxes[k]))


def theta0_construct(spec: MetricSpec, xi0) -> AnalyticSpinorField:
    """The growing spinor F^(1/2) xi0 in the frame of ``spec``."""
    xi0 = np.asarray(xi0, complex)
    if xi0.shape != (2,) or not np.isclose(norm2(xi0), 1.0, rtol=0, atol=1e-12):
        raise InvalidParameter("xi0 must be a unit-norm constant spinor")

    def fn(r, t):
        root = jets.sqrt(spec.F_jet(r, t))
        return root.expand() * Jet.const(np.broadcast_to(xi0, r.shape + (2,)).copy(), r.order)
    return AnalyticSpinorField(fn, spec.tag, "theta0")


def dirac_decomposition_residual(spec_hat: MetricSpec, spec_g: MetricSpec,
                                 field: AnalyticSpinorField, r, theta) -> np.ndarray:
    """D_ghat xi - sum_{A=1,2} F^-1 gamma_A nabla^g_{e_A} xi.

    The F e^3 . d_{e_3} term drops out on phi-independent fields.
    """
    _check_frame(spec_hat, field)
    jr, jt = _coords(spec_hat, r, theta, 1)
    spec_g.check_domain(r, theta)
    xi = field.jet(jr, jt)
    d_hat = SpinGeometry.at(spec_hat, jr, jt).dirac(xi)
    geo_g = SpinGeometry.at(spec_g, jr, jt)
    Finv = (1.0 / spec_hat.F_jet(jr, jt)).expand()
    approx = None
    for A in range(2):
        term = jets.const_matvec(GAMMA[A], geo_g.nabla(xi, A))
        approx = term if approx is None else approx + term
    return (d_hat - Finv * approx).val


# second-order operators ----------------------------------------------------

def dirac_squared(spec: MetricSpec, field: AnalyticSpinorField, r, theta) -> np.ndarray:
    _check_frame(spec, field)
    jr, jt = _coords(spec, r, theta, 2)
    geo = SpinGeometry.at(spec, jr, jt)
    return geo.dirac(geo.dirac(field.jet(jr, jt))).val


def connection_laplacian(spec: MetricSpec, field: AnalyticSpinorField, r, theta) -> np.ndarray:
    _check_frame(spec, field)
    jr, jt = _coords(spec, r, theta, 2)
    geo = SpinGeometry.at(spec, jr, jt)
    return geo.connection_laplacian(field.jet(jr, jt)).val
