"""Power nonlinearity f(s) = |s|^(p-1) s and its penalized truncation.

Outside the localization region the nonlinearity is replaced by an odd C^1
function that agrees with f for |s| <= delta/2 and equals cap_slope * s for
|s| >= delta, where delta = eps^(tau/(nu-1)) and cap_slope = eps^tau.  The
transition band is built so that all of the following hold exactly:

  |f_capped(s)| <= cap_slope * |s|,
  0 <= f_capped'(s) <= 2 * cap_slope,
  s -> f_capped(s)/s nondecreasing for s > 0,
  2 * F_capped(s) <= f_capped(s) * s.

The band is parametrized through its derivative profile phi = f_capped'.
The mean of phi over the band is forced by the endpoint values of f_capped
to be 2*cap_slope - q0 with q0 = f(delta/2)/(delta/2), which is just below
the 2*cap_slope ceiling, so phi must hug the cap: it ramps linearly from
f'(delta/2) up to a plateau, stays there, and ramps down to cap_slope at
delta.  Ramp widths are chosen so the plateau sits at 2*cap_slope and the
integral matches; the construction is then verified on a dense sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PPoly

from .errors import ConstructionError, NumericError


def f_eval(s, p):
    """f(s) = |s|^(p-1) s, odd."""
    s = np.asarray(s, dtype=float)
    out = np.abs(s) ** (p - 1.0) * s
    return float(out) if out.ndim == 0 else out


def F_eval(s, p):
    """Primitive F(s) = |s|^(p+1)/(p+1), even, F(0) = 0."""
    s = np.asarray(s, dtype=float)
    out = np.abs(s) ** (p + 1.0) / (p + 1.0)
    return float(out) if out.ndim == 0 else out


def f_prime(s, p):
    """f'(s) = p |s|^(p-1), even."""
    s = np.asarray(s, dtype=float)
    out = p * np.abs(s) ** (p - 1.0)
    return float(out) if out.ndim == 0 else out


def compute_r_eps(eps, tau, p) -> float:
    """The positive amplitude where f(r)/r reaches eps^tau."""
    if eps <= 0:
        raise NumericError(f"need eps > 0, got {eps}")
    r = eps ** (tau / (p - 1.0))
    if abs(f_eval(r, p) / r - eps ** tau) >= 1e-12:
        raise NumericError("cap crossing verification failed "
                           f"(eps={eps}, tau={tau}, p={p})")
    return r


@dataclass(frozen=True)
class PenalizedNonlinearity:
    """The truncated nonlinearity for one eps, with its band interpolant.

    knots are the band abscissae (delta/2, end of up-ramp, start of
    down-ramp, delta); slopes the derivative values at those knots."""

    eps: float
    tau: float
    nu: float
    p: float
    delta: float
    r_eps: float
    cap_slope: float
    band_lo: float
    knots: tuple
    slopes: tuple
    _phi: PPoly = field(repr=False, compare=False)
    _f_band: PPoly = field(repr=False, compare=False)
    _F_band: PPoly = field(repr=False, compare=False)
    F_at_delta: float = 0.0


def _linear_ppoly(xs, ys) -> PPoly:
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    c = np.empty((2, len(xs) - 1))
    c[0] = np.diff(ys) / np.diff(xs)
    c[1] = ys[:-1]
    return PPoly(c, xs)


def _assemble(eps, tau, nu, p, delta, r_eps, knots, slopes) -> PenalizedNonlinearity:
    """Wire up the band polynomials from knot data.  No verification here;
    build_penalized verifies, and tests use this to make corrupted bands."""
    s0 = delta / 2.0
    phi = _linear_ppoly(knots, slopes)
    f_band = phi.antiderivative()
    f_band.c[-1, :] += s0 ** p
    F_band = f_band.antiderivative()
    F_band.c[-1, :] += F_eval(s0, p)
    return PenalizedNonlinearity(
        eps=eps, tau=tau, nu=nu, p=p, delta=delta, r_eps=r_eps,
        cap_slope=eps ** tau, band_lo=s0, knots=tuple(knots),
        slopes=tuple(slopes), _phi=phi, _f_band=f_band, _F_band=F_band,
        F_at_delta=float(F_band(delta)))


def build_penalized(eps, config) -> PenalizedNonlinearity:
    """Construct and verify the truncation for this eps."""
    tau, nu, p = config.tau, config.nu, config.p
    delta = eps ** (tau / (nu - 1.0))
    r_eps = compute_r_eps(eps, tau, p)
    cap = eps ** tau

    if delta > r_eps * (1.0 + 1e-12):
        raise ConstructionError(
            f"delta = {delta:g} exceeds the cap crossing {r_eps:g}; "
            "the truncation band does not fit (need p >= nu and eps <= 1)")
    if not delta ** (p - 1.0) < cap:
        raise ConstructionError(
            f"band precondition delta^(p-1) < eps^tau fails at eps={eps:g}; "
            "eps is not small enough for this (p, nu, tau)")

    s0 = delta / 2.0
    s1 = delta
    width = s0
    q0 = s0 ** (p - 1.0)
    pq0 = p * q0
    # integral of the derivative profile over the band is pinned by the
    # endpoint values of f_capped
    target = (2.0 * cap - q0) * width

    if pq0 >= 2.0 * cap:
        raise ConstructionError("derivative at band entry already exceeds "
                                "twice the cap slope")

    w_min = 1e-12 * width
    w1 = np.clip(q0 * width / (2.0 * cap - pq0), w_min, 0.499 * width)
    w2 = np.clip(q0 * width / cap, w_min, 0.499 * width)
    plateau = ((target - (w1 * pq0 + w2 * cap) / 2.0)
               / (width - (w1 + w2) / 2.0))

    if plateau > 2.0 * cap * (1.0 + 1e-12):
        raise ConstructionError(
            f"plateau slope {plateau:g} exceeds 2*eps^tau = {2 * cap:g}; "
            "eps is not small enough for this (p, nu, tau)")
    if plateau < max(pq0, cap) * (1.0 - 1e-12):
        raise ConstructionError("band derivative profile is not unimodal")

    knots = (s0, s0 + float(w1), s1 - float(w2), s1)
    slopes = (pq0, float(plateau), float(plateau), cap)
    pn = _assemble(eps, tau, nu, p, delta, r_eps, knots, slopes)

    for check in verify_penalization(pn, n_samples=10000):
        if check.max_violation > 1e-12:
            raise ConstructionError(
                f"penalization constraint {check.constraint!r} violated by "
                f"{check.max_violation:g} at s={check.arg_max:g}")
    return pn


def f_capped(pn: PenalizedNonlinearity, s):
    """The truncated nonlinearity itself, odd."""
    arr = np.asarray(s, dtype=float)
    t = np.abs(arr)
    low = t <= pn.band_lo
    high = t >= pn.delta
    band = ~(low | high)
    out = np.empty_like(t)
    out[low] = t[low] ** pn.p
    out[high] = pn.cap_slope * t[high]
    if band.any():
        out[band] = pn._f_band(t[band])
    out *= np.sign(arr)
    return float(out) if out.ndim == 0 else out


def F_capped(pn: PenalizedNonlinearity, s):
    """Primitive of f_capped with value 0 at 0, even."""
    arr = np.asarray(s, dtype=float)
    t = np.abs(arr)
    low = t <= pn.band_lo
    high = t >= pn.delta
    band = ~(low | high)
    out = np.empty_like(t)
    out[low] = t[low] ** (pn.p + 1.0) / (pn.p + 1.0)
    out[high] = pn.F_at_delta + 0.5 * pn.cap_slope * (t[high] ** 2 - pn.delta ** 2)
    if band.any():
        out[band] = pn._F_band(t[band])
    return float(out) if out.ndim == 0 else out


def f_capped_prime(pn: PenalizedNonlinearity, s):
    """Derivative of f_capped, even, within [0, 2*eps^tau]."""
    arr = np.asarray(s, dtype=float)
    t = np.abs(arr)
    low = t <= pn.band_lo
    high = t >= pn.delta
    band = ~(low | high)
    out = np.empty_like(t)
    out[low] = pn.p * t[low] ** (pn.p - 1.0)
    out[high] = pn.cap_slope
    if band.any():
        out[band] = pn._phi(t[band])
    return float(out) if out.ndim == 0 else out


def g_eval(point, s, pn: PenalizedNonlinearity, config):
    """Spatially switched nonlinearity at an unscaled reduced point:
    plain f inside the localization region, truncated outside."""
    if config.omega.contains_point(point):
        return f_eval(s, pn.p)
    return f_capped(pn, s)


def G_eval(point, s, pn: PenalizedNonlinearity, config):
    """Primitive of g_eval in s."""
    if config.omega.contains_point(point):
        return F_eval(s, pn.p)
    return F_capped(pn, s)


@dataclass(frozen=True)
class ConstraintCheck:
    constraint: str
    max_violation: float
    arg_max: float


def verify_penalization(pn: PenalizedNonlinearity, n_samples=10000,
                        theta=None) -> list:
    """Sample all truncation constraints on a log-spaced grid spanning
    [1e-3 * delta, 10 * r_eps]; returns one row per constraint with the
    worst violation (0 when satisfied).  Report-only."""
    if theta is None:
        theta = pn.p + 1.0
    s = np.geomspace(1e-3 * pn.delta, 10.0 * pn.r_eps, n_samples)

    fc = f_capped(pn, s)
    Fc = F_capped(pn, s)
    dfc = f_capped_prime(pn, s)
    rows = []

    def row(name, values, args):
        values = np.asarray(values)
        i = int(np.argmax(values))
        rows.append(ConstraintCheck(name, max(0.0, float(values[i])),
                                    float(args[i])))

    row("cap_bound", np.abs(fc) - pn.cap_slope * s, s)
    row("derivative_range",
        np.maximum(dfc - 2.0 * pn.cap_slope, -dfc), s)
    q = fc / s
    row("quotient_monotone", -np.diff(q), s[1:])
    row("halfquadratic_bound", 2.0 * Fc - fc * s, s)
    row("superquadratic_bound",
        theta * F_eval(s, pn.p) - f_eval(s, pn.p) * s, s)
    return rows


def corrupted_band(pn: PenalizedNonlinearity, slope_factor) -> PenalizedNonlinearity:
    """Rebuild the band with all derivative knots scaled; breaks the
    constraints on purpose.  Negative-control helper for tests."""
    bad = tuple(v * slope_factor for v in pn.slopes)
    return _assemble(pn.eps, pn.tau, pn.nu, pn.p, pn.delta, pn.r_eps,
                     pn.knots, bad)
