"""Pointwise verification suites used by the scenario runner.

Each check returns a dict with ``name``, ``status`` ("pass", "fail" or
"info"), the measured ``value`` and the ``tolerance`` it was held to.
"""

from __future__ import annotations

import numpy as np

from . import jets
from .geometry import (Family, MetricSpec, christoffel, companion, connection_coefficients,
                       scalar_curvature)
from .jets import Jet
from .spinors import (GAMMA, AnalyticSpinorField, conformal_residual, fiber_rescale_sweep, norm2)


def check(name: str, value: float, tol: float, ok: bool | None = None) -> dict:
    value = float(value)
    if ok is None:
        ok = value <= tol
    return {"name": name, "status": "pass" if ok else "fail", "value": value, "tolerance": tol}


def info(name: str, value: float, **extra) -> dict:
    return {"name": name, "status": "info", "value": float(value), **extra}


def sample_points(spec: MetricSpec, n: int, seed: int = 0, r_range=None,
                  theta_margin: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Reproducible random off-axis points in the metric's valid range."""
    rng = np.random.default_rng(seed)
    if r_range is None:
        lo = max(1.0, spec.horizon + 0.5)
        r_range = (lo, lo + 3.0)
    lo, hi = r_range
    lo = max(lo, spec.horizon * (1 + 1e-6) + 1e-9)
    r = rng.uniform(lo, hi, n)
    t = rng.uniform(theta_margin, np.pi - theta_margin, n)
    return r, t


def probe_field(spec: MetricSpec) -> AnalyticSpinorField:
    """A generic smooth test spinor with nontrivial r and theta dependence."""
    def fn(r, t):
        a = jets.exp(r * -0.25) * (1.0 + 0.5j * jets.cos(t))
        b = jets.sqrt(r) * jets.sin(t) * jets.expi(t) + 0.3
        return jets.stack([a, b])
    return AnalyticSpinorField(fn, spec.tag, "probe")


def is_flat_type(spec: MetricSpec) -> bool:
    if spec.family is Family.Flat:
        return True
    return (spec.family in (Family.CompanionFlat, Family.AsymptoticallyMelvin, Family.Melvin)
            and spec.M == 0 and spec.b == 0 and spec.perturbation.is_zero)


# geometry ------------------------------------------------------------------

def clifford_defect() -> float:
    eye = np.eye(2)
    return max(np.abs(GAMMA[i] @ GAMMA[j] + GAMMA[j] @ GAMMA[i] + 2 * (i == j) * eye).max()
               for i in range(3) for j in range(3))


def derivative_defect(spec: MetricSpec, r, t, step: float = 1e-5) -> float:
    """Max relative mismatch of analytic first partials against central
    differences of the component values (O(step^2) expected)."""
    worst = 0.0
    g = spec.components(r, t, order=1)
    for k, (dr, dt) in enumerate(((step, 0.0), (0.0, step))):
        plus = spec.components(r + dr, t + dt, order=0)
        minus = spec.components(r - dr, t - dt, order=0)
        for gi, gp, gm in zip(g, plus, minus):
            fd = (gp.val - gm.val) / (2 * step)
            scale = np.maximum(np.abs(gi.val), 1.0)
            worst = max(worst, float(np.max(np.abs(fd - gi.c[1 + k]) / scale)))
    return worst


def geometry_checks(spec: MetricSpec, r, t) -> list[dict]:
    out = [check("clifford-anticommutator", clifford_defect(), 1e-15)]
    g = spec.components(r, t, order=2)
    out.append(check("components-positive", float(-min(gi.val.min() for gi in g)), 0.0,
                     ok=all(np.all(gi.val > 0) for gi in g)))
    out.append(check("derivative-consistency", derivative_defect(spec, r, t), 1e-6))
    C = connection_coefficients(spec, r, t).C
    out.append(check("connection-antisymmetry", np.abs(C + C.transpose(2, 1, 0, *range(3, C.ndim))).max(), 1e-12))
    G = christoffel(spec, r, t).gamma
    out.append(check("christoffel-phiphi-phi", np.abs(G[2, 2, 2]).max(), 1e-14))
    R = scalar_curvature(spec, r, t)
    if is_flat_type(spec):
        s = np.sin(t)
        ref = {(1, 1, 0): 1 / r, (2, 2, 0): 1 / r, (2, 2, 1): np.cos(t) / (s * r), (1, 0, 0): 0 * r}
        err = max(np.abs(C[k] - v).max() for k, v in ref.items())
        out.append(check("flat-connection-closed-forms", err, 1e-12))
        out.append(check("flat-scalar-curvature", np.abs(R).max(), 1e-10))
    elif spec.family in (Family.Melvin, Family.AsymptoticallyMelvin) and spec.perturbation.is_zero:
        out.append(check("scalar-curvature-nonnegative", -R.min(), 1e-10, ok=bool(R.min() >= -1e-10)))
    else:
        out.append(info("scalar-curvature-min", R.min()))
    if spec.family in (Family.Melvin, Family.AsymptoticallyMelvin, Family.SchwarzschildMelvin):
        out.extend(companion_checks(spec, r, t))
    return out


def companion_checks(spec: MetricSpec, r, t) -> list[dict]:
    """Relations between a Melvin-type metric and its flat companion."""
    comp = companion(spec)
    gh = spec.components(r, t, order=1)
    g = comp.components(r, t, order=1)
    F = spec.F(r, t)
    comp_err = max(np.abs(gh[0].val / (F * F * g[0].val) - 1).max(),
                   np.abs(gh[1].val / (F * F * g[1].val) - 1).max(),
                   np.abs(gh[2].val * F * F / g[2].val - 1).max())
    det_h = np.sqrt(gh[0].val * gh[1].val * gh[2].val)
    det_g = np.sqrt(g[0].val * g[1].val * g[2].val)
    out = [check("component-relation", comp_err, 1e-12),
           check("measure-relation", np.abs(det_h / (F * det_g) - 1).max(), 1e-12)]
    # phi-sector Christoffel symbols against 1/2 d ln X and 1/2 d ln (X F^2), X = ghat_pp
    jr, jt = Jet.coords(r, t, 1)
    X = spec.component_jets(jr, jt)[2]
    lnX = jets.log(X)
    lnXF2 = jets.log(X * spec.F_jet(jr, jt) ** 2)
    Gh = christoffel(spec, r, t).gamma
    Gg = christoffel(comp, r, t).gamma
    err = 0.0
    for A in range(2):
        err = max(err, np.abs(Gh[2, 2, A] - 0.5 * lnX.c[1 + A]).max(),
                  np.abs(Gg[2, 2, A] - 0.5 * lnXF2.c[1 + A]).max())
    out.append(check("phi-christoffel-closed-forms", err, 1e-10))
    return out


# lemmas --------------------------------------------------------------------

def conformal_factor(spec: MetricSpec):
    """F of the metric, or 1 + r^2 sin^2(theta)/4 when F is trivial."""
    b = spec.b if spec.b > 0 else 0.25
    return lambda r, t: 1.0 + b * (r * jets.sin(t)) ** 2


def lemma_checks(spec: MetricSpec, r, t) -> tuple[list[dict], dict]:
    field = probe_field(spec)
    zeta = conformal_factor(spec)
    res = np.sqrt(norm2(conformal_residual(spec, zeta, field, r, t)))
    scale = np.sqrt(norm2(field(r, t)))
    out = [check("conformal-lemma", (res / scale).max(), 1e-10)]
    f = lambda a, b: spec.component_jets(a, b)[2]
    q = lambda a, b: conformal_factor(spec)(a, b) ** 4
    sweep = fiber_rescale_sweep(spec, f, q, field, r, t)
    out.append(check("fiber-rescale-exponent-exists", sweep.max_residual_at_star, 1e-8))
    out.append(info("fiber-rescale-alpha-star", sweep.alpha_star,
                    reference=sweep.reference_alpha, agrees_with_reference=sweep.agrees_with_reference))
    return out, {"alphas": sweep.alphas.tolist(), "mean_residual": sweep.mean_residual.tolist(),
                 "max_residual": sweep.max_residual.tolist(), **sweep.as_dict()}


def lichnerowicz_checks(spec: MetricSpec, r, t) -> list[dict]:
    from .asymptotics import lichnerowicz_residual
    field = probe_field(spec)
    res = np.sqrt(norm2(lichnerowicz_residual(spec, field, r, t)))
    scale = np.sqrt(norm2(field(r, t)))
    return [check("lichnerowicz-identity", (res / scale).max(), 1e-6)]
