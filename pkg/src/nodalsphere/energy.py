"""Penalized energy, its gradient, and Nehari-set projections.

The discrete energy is
    I(v) = 1/2 (a(v, v) + sum W V v^2) - sum W G(v)
with a the Dirichlet form of the grid module.  Its gradient in the
weighted inner product is exactly apply_operator(v), so projections and
descent certificates close to rounding, not just to quadrature error.

Sign parts split at exact node sign: v+ = max(v, 0), v- = min(v, 0);
nodes with v = 0 belong to neither part.  On the grid the two parts are
weakly coupled through the Dirichlet form across the interface faces
(cross term C = a(v+, v-) > 0, an O(h) quadrature artifact of the
measure-zero continuum interface), so the nodal projection solves the
coupled pair of constraint equations by alternating scalar root finds
rather than two independent ones; with separated supports C = 0 and it
reduces to the decoupled closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.sparse import diags
from scipy.sparse.linalg import LinearOperator, factorized, minres

from . import nonlinearity as nl
from .errors import NodalDegeneracyError, ProjectionError, UsageError
from .grid import (ReducedGrid, apply_operator, assemble_stiffness,
                   dirichlet_form, inner_product, norm_eps, weighted_integral)


@dataclass(frozen=True)
class NonlinearSource:
    """Vectorized nonlinear term: g, its primitive G, and derivative g'."""

    g: object
    G: object
    gprime: object
    label: str = ""


def pure_power_source(p) -> NonlinearSource:
    return NonlinearSource(g=lambda v: nl.f_eval(v, p),
                           G=lambda v: nl.F_eval(v, p),
                           gprime=lambda v: nl.f_prime(v, p),
                           label=f"power p={p:g}")


def penalized_source(pn, inside_mask) -> NonlinearSource:
    """Spatially switched source: plain power on nodes inside the
    localization region, truncated outside."""
    inside = np.asarray(inside_mask, dtype=bool)

    def g(v):
        return np.where(inside, nl.f_eval(v, pn.p), nl.f_capped(pn, v))

    def G(v):
        return np.where(inside, nl.F_eval(v, pn.p), nl.F_capped(pn, v))

    def gprime(v):
        return np.where(inside, nl.f_prime(v, pn.p), nl.f_capped_prime(pn, v))

    return NonlinearSource(g=g, G=G, gprime=gprime, label="penalized")


@dataclass(frozen=True)
class EnergyModel:
    """Everything needed to evaluate the energy of fields on one grid."""

    grid: ReducedGrid
    V: np.ndarray = field(repr=False)
    source: NonlinearSource
    theta: float
    V0: float
    pn: object = None

    def norm_eps(self, v) -> float:
        return norm_eps(self.grid, v, self.V)

    def inner_eps(self, u, w) -> float:
        return dirichlet_form(self.grid, u, w) \
            + inner_product(self.grid, self.V * u, w)

    def weighted_norm(self, u) -> float:
        return float(np.sqrt(max(inner_product(self.grid, u, u), 0.0)))


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic_potential: float
    nonlinear: float
    total: float
    nehari_plus: float
    nehari_minus: float
    part_norm_plus: float
    part_norm_minus: float


def energy(model: EnergyModel, v) -> EnergyBreakdown:
    """Energy of a field, with the Nehari residuals of its sign parts."""
    g = model.grid
    v = np.asarray(v, dtype=float)
    vp = np.maximum(v, 0.0)
    vm = np.minimum(v, 0.0)
    kp = 0.5 * model.inner_eps(v, v)
    nonlin = weighted_integral(g, model.source.G(v))
    gv = model.source.g(v)
    nplus = model.inner_eps(v, vp) - weighted_integral(g, gv * vp)
    nminus = model.inner_eps(v, vm) - weighted_integral(g, gv * vm)
    return EnergyBreakdown(
        kinetic_potential=kp, nonlinear=nonlin, total=kp - nonlin,
        nehari_plus=nplus, nehari_minus=nminus,
        part_norm_plus=model.norm_eps(vp), part_norm_minus=model.norm_eps(vm))


def gradient(model: EnergyModel, v):
    """Riesz representative of the energy derivative in the weighted inner
    product; identical to the PDE residual field."""
    return apply_operator(model.grid, model.V, v, model.source)


def make_energy_riesz_solver(model: EnergyModel):
    """Factor the linear energy operator once and return the map from the
    PDE residual field g to the gradient in the energy inner product,
    i.e. the solution d of (L + W V) d = W g.  Descent with d removes the
    mesh-dependent stiffness of raw residual steps."""
    g = model.grid
    w_full = np.broadcast_to(g.weight_row, g.shape).ravel()
    v_full = np.broadcast_to(np.asarray(model.V, dtype=float), g.shape).ravel()
    K = assemble_stiffness(g) + diags(w_full * v_full)
    solve = factorized(K.tocsc())

    def riesz(res_field):
        rhs = w_full * np.asarray(res_field, dtype=float).ravel()
        return solve(rhs).reshape(g.shape)

    return riesz


def residual_norm(model: EnergyModel, v) -> float:
    return model.weighted_norm(gradient(model, v))


def _decreasing_root(fun, start=1.0, lo=1e-8, hi=1e8) -> float:
    """Root of a nonincreasing function by bracket expansion plus brentq.
    Raises ProjectionError when no sign change exists in [lo, hi]."""
    t = min(max(float(start), lo), hi)
    ft = fun(t)
    if ft == 0.0:
        return t
    if ft > 0.0:
        a, b = t, t
        while True:
            if b >= hi:
                raise ProjectionError(
                    f"no Nehari crossing: constraint stays one-signed on [{lo:g}, {hi:g}]")
            b = min(b * 10.0, hi)
            fb = fun(b)
            if fb <= 0.0:
                break
            a = b
        if fb == 0.0:
            return b
    else:
        a, b = t, t
        while True:
            if a <= lo:
                raise ProjectionError(
                    f"no Nehari crossing: constraint stays one-signed on [{lo:g}, {hi:g}]")
            a = max(a / 10.0, lo)
            fa = fun(a)
            if fa >= 0.0:
                break
            b = a
        if fa == 0.0:
            return a
    return float(brentq(fun, a, b, xtol=1e-30,
                        rtol=4 * np.finfo(float).eps))


def scalar_nehari_project(model: EnergyModel, v):
    """Scale v onto the constraint I'(tv)(tv) = 0; returns (t, t*v)."""
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise UsageError("cannot project the zero field")
    A = model.inner_eps(v, v)
    g = model.grid
    src = model.source

    # g is odd with g(0) = 0, so nodes where v vanishes drop out and the
    # sum equals sum W [g(tv)/(tv)] v^2 over the support
    def chi(t):
        return A - weighted_integral(g, src.g(t * v) * v) / t

    t = _decreasing_root(chi)
    phi = t * t * chi(t)
    if abs(phi) > 1e-10 * A:
        raise ProjectionError(f"projection left residual {phi:g} "
                              f"(scale {A:g})")
    return t, t * v


def nodal_nehari_project(model: EnergyModel, v, start=(1.0, 1.0)):
    """Scale the sign parts onto the nodal constraint pair; returns
    (t, s, t*v+ + s*v-).  Both residuals are driven below 1e-10 relative."""
    v = np.asarray(v, dtype=float)
    vp = np.maximum(v, 0.0)
    vm = np.minimum(v, 0.0)
    if not vp.any() or not vm.any():
        raise NodalDegeneracyError("a sign part of the field vanishes")

    A_p = model.inner_eps(vp, vp)
    A_m = model.inner_eps(vm, vm)
    # potential term of the cross product vanishes pointwise; only the
    # Dirichlet interface faces couple the parts
    C = dirichlet_form(model.grid, vp, vm)
    g = model.grid
    src = model.source

    def chi_plus(t, s):
        return A_p + s * C / t - weighted_integral(g, src.g(t * vp) * vp) / t

    def chi_minus(s, t):
        return A_m + t * C / s - weighted_integral(g, src.g(s * vm) * vm) / s

    t, s = float(start[0]), float(start[1])
    for _ in range(60):
        t_new = _decreasing_root(lambda x: chi_plus(x, s), start=t)
        s_new = _decreasing_root(lambda x: chi_minus(x, t_new), start=s)
        drift = abs(t_new - t) + abs(s_new - s)
        t, s = t_new, s_new
        if drift <= 1e-14 * (t + s):
            break

    res_plus = t * t * chi_plus(t, s)
    res_minus = s * s * chi_minus(s, t)
    if abs(res_plus) > 1e-10 * t * t * A_p or abs(res_minus) > 1e-10 * s * s * A_m:
        raise ProjectionError(
            f"nodal projection residuals ({res_plus:g}, {res_minus:g}) "
            "did not close")
    return t, s, t * vp + s * vm


@dataclass(frozen=True)
class PsiSurface:
    t_values: np.ndarray
    s_values: np.ndarray
    psi: np.ndarray
    argmax: tuple
    hessian: np.ndarray
    residuals: tuple


def psi_surface(model: EnergyModel, v, t_range=(0.5, 1.5),
                s_range=(0.5, 1.5), n=41) -> PsiSurface:
    """Tabulate (t, s) -> I(t v+ + s v-) around a nodal-constraint field.
    The surface separates into part energies plus the bilinear t*s*C
    interface term, so the tabulation is exact, not resampled."""
    v = np.asarray(v, dtype=float)
    eb = energy(model, v)
    rp = abs(eb.nehari_plus) / max(eb.part_norm_plus ** 2, 1e-300)
    rm = abs(eb.nehari_minus) / max(eb.part_norm_minus ** 2, 1e-300)
    if rp > 1e-8 or rm > 1e-8:
        raise UsageError(f"field is not on the nodal constraint set "
                         f"(relative residuals {rp:g}, {rm:g})")

    vp = np.maximum(v, 0.0)
    vm = np.minimum(v, 0.0)
    A_p = model.inner_eps(vp, vp)
    A_m = model.inner_eps(vm, vm)
    C = dirichlet_form(model.grid, vp, vm)
    g = model.grid
    src = model.source

    def psi_p(t):
        return 0.5 * t * t * A_p - weighted_integral(g, src.G(t * vp))

    def psi_m(s):
        return 0.5 * s * s * A_m - weighted_integral(g, src.G(s * vm))

    ts = np.linspace(t_range[0], t_range[1], n)
    ss = np.linspace(s_range[0], s_range[1], n)
    col_p = np.array([psi_p(t) for t in ts])
    col_m = np.array([psi_m(s) for s in ss])
    psi = col_p[:, None] + col_m[None, :] + np.outer(ts, ss) * C

    i, j = np.unravel_index(int(np.argmax(psi)), psi.shape)

    def psi_at(t, s):
        return psi_p(t) + psi_m(s) + t * s * C

    d = 1e-4
    h00 = (psi_at(1 + d, 1) - 2 * psi_at(1, 1) + psi_at(1 - d, 1)) / d ** 2
    h11 = (psi_at(1, 1 + d) - 2 * psi_at(1, 1) + psi_at(1, 1 - d)) / d ** 2
    h01 = (psi_at(1 + d, 1 + d) - psi_at(1 + d, 1 - d)
           - psi_at(1 - d, 1 + d) + psi_at(1 - d, 1 - d)) / (4 * d ** 2)
    hess = np.array([[h00, h01], [h01, h11]])

    return PsiSurface(t_values=ts, s_values=ss, psi=psi,
                      argmax=(float(ts[i]), float(ss[j])), hessian=hess,
                      residuals=(eb.nehari_plus, eb.nehari_minus))


@dataclass(frozen=True)
class CoercivityReport:
    constant: float
    lhs: float
    rhs: float
    passed: bool
    skipped: bool
    message: str = ""


def coercivity_check(model: EnergyModel, v) -> CoercivityReport:
    """Verify I(v) >= C ||v||_eps^2 with the explicit constant
    C = (theta-2)/(2 theta) * (1 - eps^tau / V0) on constraint fields."""
    v = np.asarray(v, dtype=float)
    eb = energy(model, v)
    nsq = model.inner_eps(v, v)
    res = abs(eb.nehari_plus + eb.nehari_minus) / max(nsq, 1e-300)
    if res > 1e-8:
        raise UsageError(f"coercivity check needs a constraint field "
                         f"(relative residual {res:g})")
    cap = model.pn.cap_slope if model.pn is not None else 0.0
    if cap >= model.V0:
        return CoercivityReport(
            constant=float("nan"), lhs=eb.total, rhs=float("nan"),
            passed=False, skipped=True,
            message=f"skipped: eps^tau = {cap:g} >= V0 = {model.V0:g}, "
                    "the smallness hypothesis fails")
    const = (model.theta - 2.0) / (2.0 * model.theta) * (1.0 - cap / model.V0)
    rhs = const * nsq
    return CoercivityReport(constant=const, lhs=eb.total, rhs=rhs,
                            passed=bool(eb.total >= rhs), skipped=False)


@dataclass(frozen=True)
class PolishResult:
    values: np.ndarray
    residual: float
    steps: int
    improved: bool
    message: str = ""


def newton_polish(model: EnergyModel, v, target=None, basin=1e-3,
                  max_steps=30, riesz=None) -> PolishResult:
    """Quadratic cleanup of an approximate critical point.

    Solves the linearized equation with a conjugate-direction iteration in
    the weighted inner product (the Jacobian is symmetrized by the
    quadrature weights; at sign-changing saddles it is indefinite, which
    the minimum-residual variant tolerates), preconditioned by the inverse
    of the linear energy operator, and backtracks on the residual norm.
    Refuses fields outside the quadratic basin, and returns the input
    unchanged, flagged, when no step decreases the residual.
    """
    g = model.grid
    v = np.asarray(v, dtype=float).copy()
    scale = model.norm_eps(v)
    if target is None:
        target = 1e-10 * max(1.0, scale)
    res = residual_norm(model, v)
    if res > basin * max(1.0, scale):
        return PolishResult(values=v, residual=res, steps=0, improved=False,
                            message=f"outside quadratic basin: residual "
                                    f"{res:g} vs {basin * max(1.0, scale):g}")
    if riesz is None:
        riesz = make_energy_riesz_solver(model)

    w_full = np.broadcast_to(g.weight_row, g.shape)
    sqrt_w = np.sqrt(w_full)
    n = v.size

    def prec(z):
        u = (z.reshape(g.shape)) / sqrt_w
        return (riesz(u) * sqrt_w).reshape(n)

    Mop = LinearOperator((n, n), matvec=prec, dtype=float)
    improved = False
    steps = 0
    for steps in range(1, max_steps + 1):
        if res <= target:
            break
        diag = model.V - model.source.gprime(v)

        def matvec(z):
            u = (z.reshape(g.shape)) / sqrt_w
            Ju = apply_operator(g, diag, u)
            return (Ju * sqrt_w).reshape(n)

        op = LinearOperator((n, n), matvec=matvec, dtype=float)
        rhs = (-gradient(model, v) * sqrt_w).reshape(n)
        sol, _ = minres(op, rhs, M=Mop, rtol=1e-10, maxiter=2 * n)
        step = sol.reshape(g.shape) / sqrt_w

        lam = 1.0
        accepted = False
        while lam > 1e-8:
            trial = v + lam * step
            res_t = residual_norm(model, trial)
            if res_t <= (1.0 - 0.25 * lam) * res:
                v, res = trial, res_t
                accepted = True
                improved = True
                break
            lam *= 0.5
        if not accepted:
            return PolishResult(values=v, residual=res, steps=steps,
                                improved=improved,
                                message="no residual decrease; returning "
                                        "the best iterate")
    return PolishResult(values=v, residual=res, steps=steps,
                        improved=improved)


@dataclass(frozen=True)
class DescentReport:
    t: float
    s: float
    passed: bool
    skipped: bool
    message: str = ""


def descent_direction_check(model: EnergyModel, v) -> DescentReport:
    """For fields whose constraint residuals are both <= 0, the nodal
    projection must not scale any part up: t, s <= 1 (+1e-9 slack)."""
    eb = energy(model, v)
    slack_p = 1e-12 * max(eb.part_norm_plus ** 2, 1.0)
    slack_m = 1e-12 * max(eb.part_norm_minus ** 2, 1.0)
    if eb.nehari_plus > slack_p or eb.nehari_minus > slack_m:
        return DescentReport(t=float("nan"), s=float("nan"), passed=False,
                             skipped=True,
                             message="skipped: residuals not both <= 0")
    t, s, _ = nodal_nehari_project(model, v)
    ok = t <= 1.0 + 1e-9 and s <= 1.0 + 1e-9
    return DescentReport(t=t, s=s, passed=bool(ok), skipped=False)
