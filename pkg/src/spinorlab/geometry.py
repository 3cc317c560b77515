"""Axisymmetric diagonal 3-metrics, orthonormal frames and their curvature.

Every metric here has the form

    g = g_rr(r, t) dr^2 + g_tt(r, t) dt^2 + g_pp(r, t) dphi^2

with coefficients independent of phi.  Components are evaluated as
second-order jets (see :mod:`spinorlab.jets`) so frames, Christoffel
symbols, connection coefficients and scalar curvature all come out with
exact derivatives.

Index conventions: coordinate indices 0, 1, 2 stand for (r, theta, phi);
frame indices 0, 1, 2 stand for (e_1, e_2, e_3) with
e_i = h_i^{-1} d/dx^i and h_i = sqrt(g_ii).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import jets
from .errors import DomainError, InvalidParameter
from .jets import Jet


class Family(str, enum.Enum):
    Flat = "Flat"
    Melvin = "Melvin"
    AsymptoticallyMelvin = "AsymptoticallyMelvin"
    SchwarzschildMelvin = "SchwarzschildMelvin"
    CompanionFlat = "CompanionFlat"
    EtaPlus = "EtaPlus"
    EtaMinus = "EtaMinus"
    # metrics built from other metrics (conformal rescalings, warped fibres)
    Derived = "Derived"


@dataclass(frozen=True)
class PerturbationSpec:
    """Amplitudes of the decaying perturbations v1, v2, v3.

    Each v_i = a_i (1 + r^2)^(-1/2) (1 + sin^2(theta)/2), which is smooth on
    the axis, O(1/r) with O(1/r^2) derivatives.
    """

    a1: float = 0.0
    a2: float = 0.0
    a3: float = 0.0

    def __post_init__(self):
        for name in ("a1", "a2", "a3"):
            a = getattr(self, name)
            if not np.isfinite(a) or abs(a) >= 0.5:
                raise InvalidParameter(f"perturbation amplitude {name}={a} must satisfy |a| < 1/2")

    @property
    def is_zero(self) -> bool:
        return self.a1 == 0 and self.a2 == 0 and self.a3 == 0

    def profile(self, r: Jet, t: Jet) -> Jet:
        return (1.0 + r * r) ** -0.5 * (1.0 + 0.5 * jets.sin(t) ** 2)

    def v(self, i: int, r: Jet, t: Jet) -> Jet:
        a = (self.a1, self.a2, self.a3)[i - 1]
        return a * self.profile(r, t)


ComponentFn = Callable[[Jet, Jet], tuple]


@dataclass(frozen=True)
class MetricSpec:
    family: Family
    b: float = 0.0
    B: Optional[float] = None
    M: float = 0.0
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    # only for Family.Derived
    builder: Optional[ComponentFn] = field(default=None, compare=False, repr=False)
    name: Optional[str] = None

    @property
    def tag(self) -> str:
        """Identifies the orthonormal frame that spinor components refer to."""
        if self.name:
            return self.name
        p = self.perturbation
        return (f"{self.family.value}(b={self.b!r},B={self.B!r},M={self.M!r},"
                f"a=({p.a1!r},{p.a2!r},{p.a3!r}))")

    @property
    def horizon(self) -> float:
        """Radius below which the metric is undefined (2M, or 0)."""
        if self.family in (Family.SchwarzschildMelvin, Family.EtaPlus, Family.EtaMinus):
            return 2.0 * self.M
        if self.family is Family.CompanionFlat and self.M > 0:
            return 2.0 * self.M
        return 0.0

    def check_domain(self, r, theta) -> None:
        r = np.asarray(r, float)
        theta = np.asarray(theta, float)
        if np.any(~np.isfinite(r)) or np.any(r <= 0):
            raise DomainError("r must be positive and finite")
        if np.any(r <= self.horizon):
            raise DomainError(f"evaluation at r <= 2M = {self.horizon}")
        if np.any(theta <= 0) or np.any(theta >= np.pi) or np.any(np.sin(theta) <= 0):
            raise DomainError("theta must lie strictly inside (0, pi); the axis is excluded")

    def F_jet(self, r: Jet, t: Jet) -> Jet:
        return 1.0 + self.b * (r * jets.sin(t)) ** 2

    def F(self, r, theta) -> np.ndarray:
        return 1.0 + self.b * (np.asarray(r) * np.sin(theta)) ** 2

    def component_jets(self, r: Jet, t: Jet) -> tuple[Jet, Jet, Jet]:
        return _BUILDERS[self.family](self, r, t)

    def components(self, r, theta, order: int = 2, check: bool = True) -> tuple[Jet, Jet, Jet]:
        """(g_rr, g_tt, g_pp) as jets at the given points."""
        if check:
            self.check_domain(r, theta)
        jr, jt = Jet.coords(r, theta, order)
        return self.component_jets(jr, jt)


# component builders ---------------------------------------------------------

def _flat(spec, r, t):
    s = jets.sin(t)
    return r * 0.0 + 1.0, r * r, (r * s) ** 2


def _asym_melvin(spec, r, t):
    p = spec.perturbation
    F = spec.F_jet(r, t)
    w1 = 1.0 + p.v(1, r, t)
    w2 = 1.0 + p.v(2, r, t)
    F2 = F * F
    return w1 * F2, w1 * F2 * r * r, w2 * (r * jets.sin(t)) ** 2 / F2


def _schwarzschild_melvin(spec, r, t):
    p = spec.perturbation
    F2 = spec.F_jet(r, t) ** 2
    w3 = 1.0 + p.v(3, r, t)
    w2 = 1.0 + p.v(2, r, t)
    lapse = 1.0 - 2.0 * spec.M / r
    return w3 * F2 / lapse, w3 * F2 * r * r, w2 * (r * jets.sin(t)) ** 2 / F2


def _companion_flat(spec, r, t):
    p = spec.perturbation
    w2 = 1.0 + p.v(2, r, t)
    gpp = w2 * (r * jets.sin(t)) ** 2
    if spec.M > 0:
        w3 = 1.0 + p.v(3, r, t)
        return w3 / (1.0 - 2.0 * spec.M / r), w3 * r * r, gpp
    w1 = 1.0 + p.v(1, r, t)
    return w1 + 0.0 * r, w1 * r * r, gpp


def eta_factors(M: float, b: float, sign: int, r: Jet, t: Jet) -> tuple[Jet, Jet]:
    """Conformal factor zeta and fibre function f of the eta metrics."""
    root = jets.sqrt(1.0 - 2.0 * M / r)
    w = 0.25 * (1.0 - M / r + sign * root) ** 2
    F = 1.0 + b * (r * jets.sin(t)) ** 2
    return w / (F * F), w * (r * jets.sin(t)) ** 2


def _eta(sign):
    def build(spec, r, t):
        zeta, f = eta_factors(spec.M, spec.b, sign, r, t)
        F2 = spec.F_jet(r, t) ** 2
        lapse = 1.0 - 2.0 * spec.M / r
        return zeta * F2 / lapse, zeta * F2 * r * r, f
    return build


def _derived(spec, r, t):
    return spec.builder(r, t)


_BUILDERS = {
    Family.Flat: _flat,
    Family.Melvin: _asym_melvin,
    Family.AsymptoticallyMelvin: _asym_melvin,
    Family.SchwarzschildMelvin: _schwarzschild_melvin,
    Family.CompanionFlat: _companion_flat,
    Family.EtaPlus: _eta(+1),
    Family.EtaMinus: _eta(-1),
    Family.Derived: _derived,
}


def make_metric(family, b: Optional[float] = None, B: Optional[float] = None,
                M: float = 0.0, perturbation: Optional[PerturbationSpec] = None) -> MetricSpec:
    """Build one of the closed-form metric families.

    For the Melvin family pass the field strength ``B``; the decay parameter
    is then ``b = B**2 / 4``.  All other families take ``b`` directly.
    """
    try:
        family = Family(family)
    except ValueError:
        raise InvalidParameter(f"unknown metric family {family!r}") from None
    if family is Family.Derived:
        raise InvalidParameter("derived metrics are built with conformal_metric / warped_metric")
    perturbation = perturbation or PerturbationSpec()
    if not isinstance(perturbation, PerturbationSpec):
        perturbation = PerturbationSpec(*perturbation)
    if M is None:
        M = 0.0
    if not np.isfinite(M) or M < 0:
        raise InvalidParameter(f"M must be >= 0, got {M}")

    if family is Family.Melvin:
        if B is None:
            raise InvalidParameter("the Melvin family needs the field strength B")
        if B < 0:
            raise InvalidParameter(f"B must be >= 0, got {B}")
        b_from_B = 0.25 * B * B
        if b is not None and not np.isclose(b, b_from_B, rtol=1e-14, atol=0):
            raise InvalidParameter(f"b={b} inconsistent with B={B} (b = B^2/4 = {b_from_B})")
        b = b_from_B
    elif B is not None:
        raise InvalidParameter(f"B is only meaningful for the Melvin family, not {family.value}")

    b = 0.0 if b is None else float(b)
    if not np.isfinite(b) or b < 0:
        raise InvalidParameter(f"b must be >= 0, got {b}")

    if family is Family.Flat and (b != 0 or M != 0 or not perturbation.is_zero):
        raise InvalidParameter("Flat takes no parameters; use CompanionFlat for perturbed metrics")
    if family in (Family.Melvin, Family.AsymptoticallyMelvin) and M != 0:
        raise InvalidParameter(f"M is not a parameter of {family.value}")
    if family in (Family.EtaPlus, Family.EtaMinus) and not perturbation.is_zero:
        raise InvalidParameter("eta metrics are built on the unperturbed Schwarzschild-Melvin base")

    return MetricSpec(family=family, b=b, B=None if B is None else float(B), M=float(M),
                      perturbation=perturbation)


def companion(spec: MetricSpec) -> MetricSpec:
    """The asymptotically flat companion g of a Melvin-type metric ghat
    (same b, M and perturbation), with ghat = F^2 g on the (r, theta) block
    and ghat_pp = F^-2 g_pp."""
    if spec.family in (Family.Melvin, Family.AsymptoticallyMelvin, Family.SchwarzschildMelvin):
        return make_metric(Family.CompanionFlat, b=spec.b, M=spec.M, perturbation=spec.perturbation)
    raise InvalidParameter(f"{spec.family.value} has no asymptotically flat companion")


def eta_metrics(M: float, b: float = 0.0) -> tuple[MetricSpec, MetricSpec]:
    """The pair zeta^+- gbar + f^+- dphi^2 on the Schwarzschild-Melvin base."""
    if M is None or not np.isfinite(M) or M < 0:
        raise InvalidParameter(f"M must be >= 0, got {M}")
    return make_metric(Family.EtaPlus, b=b, M=M), make_metric(Family.EtaMinus, b=b, M=M)


def conformal_metric(spec: MetricSpec, zeta: Callable[[Jet, Jet], Jet],
                     name: Optional[str] = None) -> MetricSpec:
    """The metric zeta^2 g for a positive jet-valued function zeta."""
    def build(r, t):
        z2 = zeta(r, t) ** 2
        return tuple(z2 * g for g in spec.component_jets(r, t))
    return MetricSpec(Family.Derived, b=spec.b, M=spec.M, builder=build,
                      name=name or f"conformal[{spec.tag}]@{id(zeta):x}")


def warped_metric(base: MetricSpec, fibre: Callable[[Jet, Jet], Jet],
                  name: Optional[str] = None) -> MetricSpec:
    """gbar + f dphi^2 where gbar is the (r, theta) block of ``base``."""
    def build(r, t):
        grr, gtt, _ = base.component_jets(r, t)
        return grr, gtt, fibre(r, t)
    return MetricSpec(Family.Derived, b=base.b, M=base.M, builder=build,
                      name=name or f"warped[{base.tag}]@{id(fibre):x}")


# frames, Christoffel symbols, connection ----------------------------------

@dataclass
class FramePoint:
    """Scale factors h_i = sqrt(g_ii) and their first partials.

    ``h`` has shape ``(3, *pts)``; ``dh[k, i]`` is the partial of h_i along
    coordinate k (k = 0 for r, 1 for theta).
    """

    h: np.ndarray
    dh: np.ndarray


@dataclass
class ChristoffelData:
    """gamma[k, i, j] = Gamma^k_{ij} (coordinate indices r, theta, phi)."""

    gamma: np.ndarray


@dataclass
class ConnectionData:
    """C[m, i, j] = <e_m, nabla_{e_i} e_j> in the orthonormal frame."""

    C: np.ndarray


def scale_factor_jets(spec: MetricSpec, r: Jet, t: Jet) -> list[Jet]:
    return [jets.sqrt(g) for g in spec.component_jets(r, t)]


def frame(spec: MetricSpec, r, theta) -> FramePoint:
    spec.check_domain(r, theta)
    jr, jt = Jet.coords(r, theta, order=1)
    hs = scale_factor_jets(spec, jr, jt)
    return FramePoint(h=np.stack([h.val for h in hs]),
                      dh=np.stack([np.stack([h.c[1] for h in hs]), np.stack([h.c[2] for h in hs])]))


def _zero_like(j: Jet, order: int) -> Jet:
    return Jet(np.zeros_like(j.c), order)


def christoffel_jets(g: tuple[Jet, Jet, Jet]) -> list:
    """Coordinate Christoffel symbols of a diagonal phi-independent metric.

    Uses Gamma^k_ij = 1/2 g^{kl} (d_i g_lj + d_j g_li - d_l g_ij) with the
    phi-derivative identically zero.  Returns a nested 3x3x3 list of jets
    one order lower than the input.
    """
    zero = _zero_like(g[0], g[0].order - 1)
    # dg[k][i] = d_k g_ii; row 2 is the phi-derivative
    dg = [[g[i].d(k) for i in range(3)] for k in range(2)] + [[zero] * 3]

    def dmetric(k, i, j):
        return dg[k][i] if i == j else zero

    out = [[[zero] * 3 for _ in range(3)] for _ in range(3)]
    for k in range(3):
        ginv = 1.0 / g[k]
        for i in range(3):
            for j in range(3):
                # inverse metric is diagonal, so only l = k contributes
                acc = dmetric(i, k, j) + dmetric(j, k, i) - dmetric(k, i, j)
                out[k][i][j] = 0.5 * ginv * acc
    return out


def christoffel(spec: MetricSpec, r, theta) -> ChristoffelData:
    g = spec.components(r, theta, order=1)
    G = christoffel_jets(g)
    return ChristoffelData(np.array([[[G[k][i][j].val for j in range(3)]
                                      for i in range(3)] for k in range(3)]))


def connection_jets(g: tuple[Jet, Jet, Jet]) -> list:
    """Frame connection coefficients C_mij as jets (one order below g).

    C_mij = h_i^{-1} [ (h_m / h_j) Gamma^m_ij - delta_mj (d_i h_j) / h_j ].
    """
    G = christoffel_jets(g)
    h = [jets.sqrt(gi) for gi in g]
    hinv = [1.0 / hi for hi in h]
    zero = _zero_like(g[0], g[0].order - 1)
    dh = [[h[j].d(k) for j in range(3)] for k in range(2)] + [[zero] * 3]
    C = [[[zero] * 3 for _ in range(3)] for _ in range(3)]
    for m in range(3):
        for i in range(3):
            for j in range(3):
                term = h[m] * hinv[j] * G[m][i][j]
                if m == j:
                    term = term - dh[i][j] * hinv[j]
                C[m][i][j] = hinv[i] * term
    return C


def connection_coefficients(spec: MetricSpec, r, theta) -> ConnectionData:
    g = spec.components(r, theta, order=1)
    C = connection_jets(g)
    return ConnectionData(np.array([[[C[m][i][j].val for j in range(3)]
                                     for i in range(3)] for m in range(3)]))


def scalar_curvature_jet(g: tuple[Jet, Jet, Jet]) -> Jet:
    """R = g^{ii} R_ii with
    R_ij = d_k Gamma^k_ij - d_j Gamma^k_ik + Gamma^k_kl Gamma^l_ij - Gamma^k_jl Gamma^l_ik.
    """
    G = christoffel_jets(g)
    R = 0.0
    for i in range(3):
        Rii = 0.0
        for k in range(3):
            if k < 2:
                Rii = Rii + G[k][i][i].d(k)
            if i < 2:
                Rii = Rii - G[k][i][k].d(i)
            for l in range(3):
                Rii = Rii + G[k][k][l] * G[l][i][i] - G[k][i][l] * G[l][i][k]
        R = R + Rii / g[i]
    return R


def scalar_curvature(spec: MetricSpec, r, theta) -> np.ndarray:
    g = spec.components(r, theta, order=2)
    return scalar_curvature_jet(g).val
