"""Post-solve diagnostics for the concentration laws.

Given converged nodal solutions at a sequence of decreasing eps, this
module checks the claims the solver is meant to exhibit:

  * peak admissibility: both peaks sit strictly inside the localization
    region and their amplitudes clear the threshold a with f(a)/a = V0/2;
  * energy scaling: eps^k times the reduced least energy approaches
    2 * omega_k * M0, where M0 is the minimum of the concentration weight;
  * peak migration: the rescaled peak locations approach the minimizer of
    the concentration weight, while the reduced-coordinate gap between the
    two peaks grows;
  * exponential decay: away from the peaks, log|v| falls off linearly in
    the sphere distance to the nearest peak, with a positive rate;
  * certification: when the solution is below delta/2 everywhere outside
    the localization region, the capped branch of the nonlinearity was
    never active and the field solves the uncapped equation verbatim.

All asymptotic statements are reported as trends along the eps sequence
rather than compared against fixed limits; the record and trend objects
carry the raw numbers so callers can apply their own tolerances.
"""

import math
from dataclasses import dataclass

import numpy as np

from .energy import EnergyModel, pure_power_source, residual_norm
from .errors import FitError, UsageError
from .geometry import SpherePoint, sphere_distance, unit_sphere_measure

__all__ = [
    "threshold_a", "PeakReport", "peak_admissibility",
    "DecayFit", "fit_exponential_decay", "decay_fit",
    "nearest_peak_distance",
    "CertificationReport", "certify_original",
    "EpsRecord", "build_record", "write_concentration_csv",
    "concentration_weight",
    "ScalingTrend", "energy_scaling",
    "MigrationTrend", "peak_migration",
    "CertificationTrend", "certification_trend",
    "SeedEnergyTrend", "seed_energy_slack",
    "trend_summary",
]

CONCENTRATION_COLUMNS = [
    "eps", "d_eps", "eps_k_d_eps", "target", "ratio", "P1", "P2",
    "peak_gap_rescaled", "abs_v_P1", "abs_v_P2", "a_threshold",
    "beta_fit", "outside_sup", "delta_half", "certified",
    "decay_r2", "converged",
]


def threshold_a(V0, p) -> float:
    """Peak amplitude threshold: the positive root of f(a)/a = V0/2.

    For the pure power f(s) = |s|^(p-1) s this is (V0/2)^(1/(p-1))."""
    if V0 <= 0:
        raise UsageError(f"threshold_a: V0 must be positive, got {V0}")
    return (0.5 * V0) ** (1.0 / (p - 1.0))


@dataclass(frozen=True)
class PeakReport:
    """Admissibility of the two peaks of a nodal solution."""

    threshold: float
    inside_plus: bool
    inside_minus: bool
    value_plus: float
    value_minus: float
    passed: bool


def peak_admissibility(sol, config) -> PeakReport:
    """Check both peaks lie strictly inside the localization region and
    clear the amplitude threshold: v(P1) >= a and v(P2) <= -a."""
    a = threshold_a(config.V0, config.p)
    inside_plus = config.omega.contains_point(sol.peak_plus)
    inside_minus = config.omega.contains_point(sol.peak_minus)
    value_plus = float(sol.peak_value_plus)
    value_minus = -float(sol.peak_value_minus)
    passed = (inside_plus and inside_minus
              and value_plus >= a and value_minus <= -a)
    return PeakReport(threshold=a, inside_plus=bool(inside_plus),
                      inside_minus=bool(inside_minus),
                      value_plus=value_plus, value_minus=value_minus,
                      passed=bool(passed))


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of log|v| against -(sphere distance to the
    nearest peak), in reduced coordinates.  beta is the decay rate."""

    beta: float
    log_amplitude: float
    r_squared: float
    n_points: int


def _distance_to_point(grid, point: SpherePoint) -> np.ndarray:
    """Sphere distance from every node to a reduced-coordinate point."""
    coords = grid.node_coords()
    if len(point.xprime) != grid.xprime_dim:
        raise UsageError("decay fit: peak has wrong x' dimension for grid")
    sq = (coords[-1] - point.r) ** 2
    for ax, c in zip(coords[:-1], point.xprime):
        sq = sq + (ax - c) ** 2
    return np.sqrt(sq)


def nearest_peak_distance(grid, peaks) -> np.ndarray:
    """Sphere distance from every node to the nearest of the given
    reduced-coordinate peaks."""
    if not peaks:
        raise UsageError("need at least one peak")
    dist = _distance_to_point(grid, peaks[0])
    for point in peaks[1:]:
        dist = np.minimum(dist, _distance_to_point(grid, point))
    return dist


def fit_exponential_decay(grid, values, peaks, exclusion_radius=3.0,
                          floor=1e-12, boundary_margin=2.0) -> DecayFit:
    """Fit log|v| ~ log C - beta * min_i d_k(x, peak_i) over usable nodes.

    Usable nodes have |v| above `floor` (log of smaller values is noise),
    lie further than `exclusion_radius` from every peak (the near-peak
    core is not in the asymptotic regime), and keep `boundary_margin`
    reduced-length units away from the artificial outer boundaries where
    the Dirichlet truncation distorts the tail.  Peaks are given in
    reduced coordinates.  Raises FitError when fewer than 10 nodes
    qualify."""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise UsageError("decay fit: field shape does not match grid")
    dist = nearest_peak_distance(grid, peaks)

    coords = grid.node_coords()
    mask = (np.abs(values) > floor) & (dist > exclusion_radius)
    mask &= coords[-1] < grid.R_outer - boundary_margin
    for ax_values, axis in zip(coords[:-1], grid.xprime_axes):
        lo, hi = axis[0], axis[-1]
        if hi - lo > 2.0 * boundary_margin:
            mask &= (ax_values > lo + boundary_margin)
            mask &= (ax_values < hi - boundary_margin)

    n = int(np.count_nonzero(mask))
    if n < 10:
        raise FitError(f"decay fit needs at least 10 usable nodes, got {n}")
    x = -dist[mask]
    y = np.log(np.abs(values[mask]))
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return DecayFit(beta=float(slope), log_amplitude=float(intercept),
                    r_squared=float(r2), n_points=n)


def decay_fit(sol, exclusion_radius=3.0, floor=1e-12,
              boundary_margin=2.0) -> DecayFit:
    """Decay fit for a nodal solution, using its two peaks (converted to
    reduced coordinates) as the centers."""
    peaks = [sol.peak_plus.scaled(1.0 / sol.eps),
             sol.peak_minus.scaled(1.0 / sol.eps)]
    return fit_exponential_decay(sol.model.grid, sol.values, peaks,
                                 exclusion_radius=exclusion_radius,
                                 floor=floor,
                                 boundary_margin=boundary_margin)


@dataclass(frozen=True)
class CertificationReport:
    """Whether the capped nonlinearity was provably inactive.

    outside_sup is the largest |v| over nodes outside the localization
    region.  When it does not exceed delta/2, the capped source agrees
    with the pure power at every node the solution touches, so the two
    residuals coincide and the field solves the uncapped equation."""

    outside_sup: float
    delta_half: float
    certified: bool
    margin: float
    residual_penalized: float
    residual_original: float


def certify_original(sol, config) -> CertificationReport:
    """Certify that a solution of the capped problem solves the original
    one: sup of |v| outside the localization region must be <= delta/2."""
    grid = sol.model.grid
    eps = sol.eps
    sprime, r = grid.sprime_r()
    outside = ~config.omega.contains(eps * sprime, eps * r)
    if np.any(outside):
        outside_sup = float(np.max(np.abs(sol.values[outside])))
    else:
        outside_sup = 0.0
    if sol.model.pn is not None:
        delta = sol.model.pn.delta
    else:
        delta = eps ** (config.tau / (config.nu - 1.0))
    delta_half = 0.5 * delta
    certified = outside_sup <= delta_half

    res_pen = residual_norm(sol.model, sol.values)
    original = EnergyModel(grid=grid, V=sol.model.V,
                           source=pure_power_source(config.p),
                           theta=sol.model.theta, V0=sol.model.V0)
    res_orig = residual_norm(original, sol.values)
    return CertificationReport(outside_sup=outside_sup,
                               delta_half=float(delta_half),
                               certified=bool(certified),
                               margin=float(delta_half - outside_sup),
                               residual_penalized=float(res_pen),
                               residual_original=float(res_orig))


@dataclass(frozen=True)
class EpsRecord:
    """One row of the concentration report, at a single eps."""

    eps: float
    d_eps: float
    eps_k_d_eps: float
    target: float
    ratio: float
    P1: SpherePoint
    P2: SpherePoint
    peak_gap_rescaled: float
    abs_v_P1: float
    abs_v_P2: float
    a_threshold: float
    beta_fit: float
    outside_sup: float
    delta_half: float
    certified: bool
    decay_r2: float
    converged: bool


def build_record(sol, config, aux) -> EpsRecord:
    """Assemble the per-eps record from a solved nodal problem and the
    concentration-weight map.  A failed decay fit records NaN for the
    rate and quality rather than aborting the whole report."""
    eps = sol.eps
    d_eps = float(sol.energy)
    scaled = eps ** config.k * d_eps
    target = 2.0 * unit_sphere_measure(config.k) * aux.M0
    try:
        fit = decay_fit(sol)
        beta, r2 = fit.beta, fit.r_squared
    except FitError:
        beta, r2 = float("nan"), float("nan")
    cert = certify_original(sol, config)
    gap = sphere_distance(sol.peak_plus.scaled(1.0 / eps),
                          sol.peak_minus.scaled(1.0 / eps))
    return EpsRecord(
        eps=float(eps), d_eps=d_eps, eps_k_d_eps=float(scaled),
        target=float(target), ratio=float(scaled / target),
        P1=sol.peak_plus, P2=sol.peak_minus,
        peak_gap_rescaled=float(gap),
        abs_v_P1=float(sol.peak_value_plus),
        abs_v_P2=float(sol.peak_value_minus),
        a_threshold=threshold_a(config.V0, config.p),
        beta_fit=float(beta), outside_sup=cert.outside_sup,
        delta_half=cert.delta_half, certified=cert.certified,
        decay_r2=float(r2), converged=bool(sol.converged))


def _format_cell(value) -> str:
    if isinstance(value, SpherePoint):
        return ";".join("%.12g" % c for c in value.to_list())
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.12g" % value
    return str(value)


def write_concentration_csv(records, path) -> None:
    """Write per-eps records with the pinned column order.  Peak cells
    hold semicolon-joined coordinates (x' components then radius)."""
    lines = [",".join(CONCENTRATION_COLUMNS)]
    for rec in records:
        lines.append(",".join(_format_cell(getattr(rec, name))
                              for name in CONCENTRATION_COLUMNS))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def concentration_weight(point: SpherePoint, aux, config) -> float:
    """Evaluate the concentration weight r^k * E(V) at an original-
    coordinate point, reusing the ground-energy data in the map."""
    V = config.potential.evaluate_point(point)
    return point.r ** config.k * aux.E1 * V ** aux.sigma


def _strictly_decreasing(seq) -> bool:
    return all(b < a for a, b in zip(seq, seq[1:]))


def _strictly_increasing(seq) -> bool:
    return all(b > a for a, b in zip(seq, seq[1:]))


@dataclass(frozen=True)
class ScalingTrend:
    """Energy-scaling law along the eps sequence: the ratio of
    eps^k * d_eps to the limit value 2 * omega_k * M0."""

    eps: tuple
    ratios: tuple
    deviations: tuple
    strictly_decreasing: bool
    loglog_slope: float
    target: float


def energy_scaling(records, M0, k) -> ScalingTrend:
    """Deviation |ratio - 1| per eps, whether it decreases strictly along
    the sequence, and the slope of log|ratio - 1| against log eps.  With
    fewer than 3 records the monotonicity verdict is not meaningful and
    is reported as False alongside a NaN slope."""
    recs = sorted(records, key=lambda r: -r.eps)
    target = 2.0 * unit_sphere_measure(k) * M0
    eps = tuple(r.eps for r in recs)
    ratios = tuple(r.eps_k_d_eps / target for r in recs)
    deviations = tuple(abs(q - 1.0) for q in ratios)
    if len(recs) >= 3:
        decreasing = _strictly_decreasing(deviations)
        positive = [(e, d) for e, d in zip(eps, deviations) if d > 0]
        if len(positive) >= 2:
            le = np.log([e for e, _ in positive])
            ld = np.log([d for _, d in positive])
            slope = float(np.polyfit(le, ld, 1)[0])
        else:
            slope = float("nan")
    else:
        decreasing = False
        slope = float("nan")
    return ScalingTrend(eps=eps, ratios=ratios, deviations=deviations,
                        strictly_decreasing=decreasing,
                        loglog_slope=slope, target=float(target))


@dataclass(frozen=True)
class MigrationTrend:
    """Peak migration toward the minimizer of the concentration weight,
    and growth of the reduced-coordinate gap between the peaks."""

    eps: tuple
    dist_plus: tuple
    dist_minus: tuple
    weight_excess_plus: tuple
    weight_excess_minus: tuple
    gaps: tuple
    dist_plus_decreasing: bool
    dist_minus_decreasing: bool
    excess_plus_decreasing: bool
    excess_minus_decreasing: bool
    gap_increasing: bool


def peak_migration(records, aux, config) -> MigrationTrend:
    """Distances of the original-coordinate peaks to the weight minimizer
    and their weight excess M(peak) - M0, per eps, with strict-trend
    verdicts, plus the rescaled peak-gap trend."""
    recs = sorted(records, key=lambda r: -r.eps)
    eps = tuple(r.eps for r in recs)
    dist_plus = tuple(sphere_distance(r.P1, aux.x0) for r in recs)
    dist_minus = tuple(sphere_distance(r.P2, aux.x0) for r in recs)
    excess_plus = tuple(concentration_weight(r.P1, aux, config) - aux.M0
                        for r in recs)
    excess_minus = tuple(concentration_weight(r.P2, aux, config) - aux.M0
                         for r in recs)
    gaps = tuple(r.peak_gap_rescaled for r in recs)
    return MigrationTrend(
        eps=eps, dist_plus=dist_plus, dist_minus=dist_minus,
        weight_excess_plus=excess_plus, weight_excess_minus=excess_minus,
        gaps=gaps,
        dist_plus_decreasing=_strictly_decreasing(dist_plus),
        dist_minus_decreasing=_strictly_decreasing(dist_minus),
        excess_plus_decreasing=_strictly_decreasing(excess_plus),
        excess_minus_decreasing=_strictly_decreasing(excess_minus),
        gap_increasing=_strictly_increasing(gaps))


@dataclass(frozen=True)
class CertificationTrend:
    """Certification flags along the sequence.  The threshold delta/2
    shrinks like a power of eps, so the informative margin is relative:
    (delta/2 - outside_sup) / (delta/2), which approaches 1 when the
    solution localizes faster than the threshold shrinks."""

    eps: tuple
    certified: tuple
    margins: tuple
    relative_margins: tuple
    tail_certified: bool
    margin_increasing: bool
    relative_margin_increasing: bool


def certification_trend(records) -> CertificationTrend:
    """Check the flags form a False...True suffix pattern (certified for
    all eps below some threshold) and that the margin delta/2 -
    outside_sup increases strictly as eps decreases.  The relative margin
    (margin over delta/2) is also tracked along the certified suffix."""
    recs = sorted(records, key=lambda r: -r.eps)
    eps = tuple(r.eps for r in recs)
    flags = tuple(bool(r.certified) for r in recs)
    margins = tuple(r.delta_half - r.outside_sup for r in recs)
    rel = tuple(m / r.delta_half for m, r in zip(margins, recs))
    first_true = next((i for i, f in enumerate(flags) if f), None)
    tail = (first_true is not None
            and all(flags[first_true:]))
    suffix_rel = rel[first_true:] if first_true is not None else ()
    rel_increasing = (len(suffix_rel) >= 1
                      and _strictly_increasing(suffix_rel))
    return CertificationTrend(eps=eps, certified=flags, margins=margins,
                              relative_margins=rel,
                              tail_certified=bool(tail),
                              margin_increasing=_strictly_increasing(margins),
                              relative_margin_increasing=bool(rel_increasing))


@dataclass(frozen=True)
class SeedEnergyTrend:
    """Slack of the scaled energy under the two-bump upper bound built
    from the initialization centers: eps^k * d_eps should not exceed
    2 * omega_k * (M(z1) + M(z2)) by more than a vanishing amount."""

    bound: float
    eps: tuple
    slacks: tuple
    decreasing: bool


def seed_energy_slack(records, aux, config, centers) -> SeedEnergyTrend:
    """Slack series eps^k * d_eps - 2 omega_k (M(z1) + M(z2)) for the
    initialization centers z1, z2, with a strict-decrease verdict."""
    recs = sorted(records, key=lambda r: -r.eps)
    z1, z2 = centers
    bound = 2.0 * unit_sphere_measure(config.k) * (
        concentration_weight(z1, aux, config)
        + concentration_weight(z2, aux, config))
    eps = tuple(r.eps for r in recs)
    slacks = tuple(r.eps_k_d_eps - bound for r in recs)
    return SeedEnergyTrend(bound=float(bound), eps=eps, slacks=slacks,
                           decreasing=_strictly_decreasing(slacks))


def _clean(value):
    """Make a value JSON-safe: tuples to lists, NaN to None."""
    if isinstance(value, tuple):
        return [_clean(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def trend_summary(records, aux, config, centers) -> dict:
    """JSON-ready dictionary of every trend verdict over the records."""
    scaling = energy_scaling(records, aux.M0, config.k)
    migration = peak_migration(records, aux, config)
    cert = certification_trend(records)
    slack = seed_energy_slack(records, aux, config, centers)
    out = {
        "energy_scaling": {
            "eps": scaling.eps, "ratios": scaling.ratios,
            "deviations": scaling.deviations,
            "strictly_decreasing": scaling.strictly_decreasing,
            "loglog_slope": scaling.loglog_slope,
            "target": scaling.target,
        },
        "peak_migration": {
            "eps": migration.eps,
            "dist_plus": migration.dist_plus,
            "dist_minus": migration.dist_minus,
            "weight_excess_plus": migration.weight_excess_plus,
            "weight_excess_minus": migration.weight_excess_minus,
            "gaps": migration.gaps,
            "dist_plus_decreasing": migration.dist_plus_decreasing,
            "dist_minus_decreasing": migration.dist_minus_decreasing,
            "excess_plus_decreasing": migration.excess_plus_decreasing,
            "excess_minus_decreasing": migration.excess_minus_decreasing,
            "gap_increasing": migration.gap_increasing,
        },
        "certification": {
            "eps": cert.eps, "certified": cert.certified,
            "margins": cert.margins,
            "relative_margins": cert.relative_margins,
            "tail_certified": cert.tail_certified,
            "margin_increasing": cert.margin_increasing,
            "relative_margin_increasing": cert.relative_margin_increasing,
        },
        "seed_energy": {
            "bound": slack.bound, "eps": slack.eps,
            "slacks": slack.slacks, "decreasing": slack.decreasing,
        },
    }
    return {section: {k: _clean(v) for k, v in body.items()}
            for section, body in out.items()}
