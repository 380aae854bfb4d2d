"""Tests for the post-solve diagnostics: amplitude thresholds, decay
fits, certification, per-eps records, and trend verdicts."""

import dataclasses
import json
import math
import types

import numpy as np
import pytest

from nodalsphere.diagnostics import (
    CONCENTRATION_COLUMNS, build_record, certification_trend,
    certify_original, concentration_weight, decay_fit, energy_scaling,
    fit_exponential_decay, peak_admissibility, peak_migration,
    seed_energy_slack, threshold_a, trend_summary, write_concentration_csv,
)
from nodalsphere.errors import FitError, UsageError
from nodalsphere.geometry import SpherePoint, parse_config_file
from nodalsphere.grid import build_radial_grid
from nodalsphere.limit_problem import aux_potential, soliton_1d
from nodalsphere.solver import build_model, default_centers, solve_nodal

CONFIG_PATH = "configs/default.cfg"


@pytest.fixture(scope="module")
def config():
    return parse_config_file(CONFIG_PATH)


@pytest.fixture(scope="module")
def aux(config):
    return aux_potential(config)


@pytest.fixture(scope="module")
def sol_03(config, aux):
    return solve_nodal(config, 0.3, aux=aux)


@pytest.fixture(scope="module")
def sol_01(config, aux):
    return solve_nodal(config, 0.1, aux=aux)


def test_threshold_a_values():
    assert abs(threshold_a(1.0, 3.0) - math.sqrt(0.5)) < 1e-15
    assert abs(threshold_a(2.0, 3.0) - 1.0) < 1e-15
    assert abs(threshold_a(1.0, 2.0) - 0.5) < 1e-15
    with pytest.raises(UsageError):
        threshold_a(0.0, 3.0)


def test_decay_fit_recovers_soliton_rate():
    # The 1d soliton sech(x) (p=3) decays like 2 e^{-x}, so the fitted
    # slope against distance from the origin must approach 1.
    grid = build_radial_grid(0, 20.0, 0.008)
    v = soliton_1d(grid.r_nodes, 1.0, 3.0)
    fit = fit_exponential_decay(grid, v, [SpherePoint((), 0.0)])
    print("soliton decay fit: beta=%.6f r2=%.6f n=%d"
          % (fit.beta, fit.r_squared, fit.n_points))
    assert abs(fit.beta - 1.0) < 0.05
    assert fit.r_squared > 0.99


def test_decay_fit_exact_exponential():
    grid = build_radial_grid(0, 30.0, 0.01)
    beta = 0.7
    center = SpherePoint((), 5.0)
    v = np.exp(-beta * np.abs(grid.r_nodes - 5.0))
    fit = fit_exponential_decay(grid, v, [center])
    assert abs(fit.beta - beta) < 1e-10
    assert fit.r_squared > 1.0 - 1e-12


def test_decay_fit_guards():
    grid = build_radial_grid(0, 20.0, 0.01)
    with pytest.raises(FitError):
        fit_exponential_decay(grid, np.zeros(grid.shape),
                              [SpherePoint((), 0.0)])
    tiny = np.full(grid.shape, 1e-13)
    with pytest.raises(FitError):
        fit_exponential_decay(grid, tiny, [SpherePoint((), 0.0)])
    with pytest.raises(UsageError):
        fit_exponential_decay(grid, np.ones(grid.shape), [])


def test_decay_fit_two_centers_uses_nearest():
    grid = build_radial_grid(0, 40.0, 0.01)
    centers = [SpherePoint((), 10.0), SpherePoint((), 25.0)]
    d = np.minimum(np.abs(grid.r_nodes - 10.0), np.abs(grid.r_nodes - 25.0))
    v = np.exp(-1.3 * d)
    fit = fit_exponential_decay(grid, v, centers)
    assert abs(fit.beta - 1.3) < 1e-10


def test_peak_admissibility_on_solution(sol_03, config):
    report = peak_admissibility(sol_03, config)
    print("peaks: +%.4f at r=%.4f, %.4f at r=%.4f, threshold %.4f"
          % (report.value_plus, sol_03.peak_plus.r,
             report.value_minus, sol_03.peak_minus.r, report.threshold))
    assert abs(report.threshold - 0.7071068) < 1e-6
    assert report.inside_plus and report.inside_minus
    assert report.value_plus >= report.threshold
    assert report.value_minus <= -report.threshold
    assert report.passed


def test_certification_uncertified_at_moderate_eps(sol_03, config):
    cert = certify_original(sol_03, config)
    assert cert.outside_sup > cert.delta_half
    assert not cert.certified
    assert cert.margin < 0
    assert cert.residual_original > 100 * cert.residual_penalized


def test_certification_certified_at_small_eps(sol_01, config):
    cert = certify_original(sol_01, config)
    print("eps=0.1 outside_sup=%.3e delta/2=%.3e margin=%.3e"
          % (cert.outside_sup, cert.delta_half, cert.margin))
    assert cert.certified
    assert cert.outside_sup <= cert.delta_half
    # With the cap never active the two sources agree at every node the
    # solution touches, so the residuals are the same number.
    assert abs(cert.residual_original - cert.residual_penalized) <= 1e-12


def test_trivially_certified_when_supported_inside(config):
    eps = 0.3
    model = build_model(config, eps)
    sprime, r = model.grid.sprime_r()
    v = np.where((r > 1.5 / eps) & (r < 2.5 / eps), 1e-3, 0.0)
    fake = types.SimpleNamespace(model=model, values=v, eps=eps)
    cert = certify_original(fake, config)
    assert cert.outside_sup == 0.0
    assert cert.certified


def test_record_fields_and_csv(sol_03, config, aux, tmp_path):
    rec = build_record(sol_03, config, aux)
    assert rec.eps == 0.3
    assert rec.d_eps == sol_03.energy
    assert abs(rec.eps_k_d_eps - 0.09 * sol_03.energy) < 1e-9
    assert rec.ratio > 0
    assert rec.converged
    assert rec.beta_fit > 0
    assert 0 < rec.decay_r2 <= 1
    assert rec.abs_v_P1 >= rec.a_threshold

    path = tmp_path / "concentration.csv"
    write_concentration_csv([rec], path)
    text = path.read_text().splitlines()
    assert text[0] == ",".join(CONCENTRATION_COLUMNS)
    cells = text[1].split(",")
    assert len(cells) == len(CONCENTRATION_COLUMNS)
    assert cells[0] == "0.3"
    assert cells[CONCENTRATION_COLUMNS.index("certified")] == "false"
    assert cells[CONCENTRATION_COLUMNS.index("converged")] == "true"
    p1 = cells[CONCENTRATION_COLUMNS.index("P1")]
    assert abs(float(p1) - sol_03.peak_plus.r) < 1e-12

    write_concentration_csv([rec], tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_text() == path.read_text()


def test_record_semicolon_cells_for_multiaxis_points(config, aux, tmp_path):
    rec = build_record_stub(eps=0.5, P1=SpherePoint((0.25,), 1.5),
                            P2=SpherePoint((-0.25,), 2.5))
    path = tmp_path / "c.csv"
    write_concentration_csv([rec], path)
    row = path.read_text().splitlines()[1].split(",")
    assert row[CONCENTRATION_COLUMNS.index("P1")] == "0.25;1.5"
    assert row[CONCENTRATION_COLUMNS.index("P2")] == "-0.25;2.5"


def build_record_stub(eps=0.5, ratio=2.0, P1=None, P2=None, gap=2.0,
                      certified=False, outside_sup=1.0, delta_half=0.1,
                      beta=2.0, r2=0.99, converged=True):
    """Hand-built record for trend-logic tests."""
    from nodalsphere.diagnostics import EpsRecord
    target = 129.4367
    if P1 is None:
        P1 = SpherePoint((), 1.8)
    if P2 is None:
        P2 = SpherePoint((), 2.1)
    return EpsRecord(eps=eps, d_eps=ratio * target / eps ** 2,
                     eps_k_d_eps=ratio * target, target=target, ratio=ratio,
                     P1=P1, P2=P2, peak_gap_rescaled=gap,
                     abs_v_P1=1.0, abs_v_P2=1.0, a_threshold=0.7071,
                     beta_fit=beta, outside_sup=outside_sup,
                     delta_half=delta_half, certified=certified,
                     decay_r2=r2, converged=converged)


def test_sign_flip_invariance(sol_03, config, aux):
    rec = build_record(sol_03, config, aux)
    flipped = dataclasses.replace(
        sol_03, values=-sol_03.values,
        peak_plus=sol_03.peak_minus, peak_minus=sol_03.peak_plus,
        peak_value_plus=sol_03.peak_value_minus,
        peak_value_minus=sol_03.peak_value_plus,
        nehari_plus=sol_03.nehari_minus, nehari_minus=sol_03.nehari_plus)
    rec2 = build_record(flipped, config, aux)
    assert rec2.eps_k_d_eps == rec.eps_k_d_eps
    assert rec2.peak_gap_rescaled == rec.peak_gap_rescaled
    assert rec2.P1 == rec.P2 and rec2.P2 == rec.P1
    assert rec2.abs_v_P1 == rec.abs_v_P2
    assert rec2.beta_fit == rec.beta_fit
    assert rec2.outside_sup == rec.outside_sup
    assert rec2.certified == rec.certified


def test_energy_scaling_trend_logic():
    # Stub records carry target=129.4367; pass the matching M0 so the
    # recomputed ratios equal the stub ratios.
    M0, k = 129.4367 / (8.0 * math.pi), 2
    recs = [build_record_stub(eps=e, ratio=q)
            for e, q in [(0.5, 3.0), (0.3, 2.0), (0.1, 1.2)]]
    trend = energy_scaling(recs, M0, k)
    assert trend.strictly_decreasing
    for got, want in zip(trend.deviations, (2.0, 1.0, 0.2)):
        assert abs(got - want) < 1e-9
    le = np.log([0.5, 0.3, 0.1])
    ld = np.log(trend.deviations)
    assert abs(trend.loglog_slope - np.polyfit(le, ld, 1)[0]) < 1e-12

    short = energy_scaling(recs[:2], M0, k)
    assert not short.strictly_decreasing
    assert math.isnan(short.loglog_slope)


def test_energy_scaling_not_decreasing_detected():
    recs = [build_record_stub(eps=e, ratio=q)
            for e, q in [(0.5, 1.5), (0.3, 1.6), (0.1, 1.2)]]
    trend = energy_scaling(recs, 5.15, 2)
    assert not trend.strictly_decreasing


def test_peak_migration_logic(config, aux):
    x0 = aux.x0
    recs = [
        build_record_stub(eps=0.5, P1=SpherePoint((), x0.r - 0.5),
                          P2=SpherePoint((), x0.r + 0.30), gap=1.5),
        build_record_stub(eps=0.3, P1=SpherePoint((), x0.r - 0.3),
                          P2=SpherePoint((), x0.r + 0.20), gap=2.5),
        build_record_stub(eps=0.1, P1=SpherePoint((), x0.r - 0.1),
                          P2=SpherePoint((), x0.r + 0.10), gap=3.5),
    ]
    trend = peak_migration(recs, aux, config)
    assert trend.dist_plus_decreasing and trend.dist_minus_decreasing
    assert trend.excess_plus_decreasing and trend.excess_minus_decreasing
    assert trend.gap_increasing
    assert all(e >= 0 for e in trend.weight_excess_plus)
    for got, want in zip(trend.dist_plus, (0.5, 0.3, 0.1)):
        assert abs(got - want) < 1e-12

    wobble = recs[:2] + [build_record_stub(
        eps=0.1, P1=SpherePoint((), x0.r - 0.4), gap=3.5)]
    trend2 = peak_migration(wobble, aux, config)
    assert not trend2.dist_plus_decreasing


def test_weight_excess_nonnegative_on_solution(sol_03, config, aux):
    rec = build_record(sol_03, config, aux)
    assert concentration_weight(rec.P1, aux, config) >= aux.M0
    assert concentration_weight(rec.P2, aux, config) >= aux.M0


def test_certification_trend_logic():
    recs = [
        build_record_stub(eps=0.5, certified=False, outside_sup=1.0,
                          delta_half=0.0625),
        build_record_stub(eps=0.3, certified=False, outside_sup=0.05,
                          delta_half=0.0135),
        build_record_stub(eps=0.1, certified=True, outside_sup=1e-5,
                          delta_half=5e-4),
    ]
    trend = certification_trend(recs)
    assert trend.certified == (False, False, True)
    assert trend.tail_certified
    assert trend.margin_increasing
    assert trend.relative_margin_increasing

    broken = [recs[0],
              build_record_stub(eps=0.3, certified=True, outside_sup=1e-5,
                                delta_half=0.0135),
              build_record_stub(eps=0.1, certified=False, outside_sup=1e-3,
                                delta_half=5e-4)]
    trend2 = certification_trend(broken)
    assert not trend2.tail_certified


def test_seed_energy_slack(config, aux):
    centers = default_centers(config, aux)
    recs = [build_record_stub(eps=0.5, ratio=3.5),
            build_record_stub(eps=0.3, ratio=2.5),
            build_record_stub(eps=0.1, ratio=1.4)]
    trend = seed_energy_slack(recs, aux, config, centers)
    expect = 8.0 * math.pi * (concentration_weight(centers[0], aux, config)
                              + concentration_weight(centers[1], aux, config))
    assert abs(trend.bound - expect) < 1e-9
    assert trend.decreasing
    assert trend.slacks[0] == recs[0].eps_k_d_eps - trend.bound


def test_trend_summary_is_json_ready(config, aux):
    centers = default_centers(config, aux)
    recs = [build_record_stub(eps=0.5, ratio=3.0),
            build_record_stub(eps=0.3, ratio=2.0, beta=float("nan")),
            build_record_stub(eps=0.1, ratio=1.2)]
    summary = trend_summary(recs, aux, config, centers)
    text = json.dumps(summary, sort_keys=True, allow_nan=False)
    assert set(summary) == {"energy_scaling", "peak_migration",
                            "certification", "seed_energy"}
    assert isinstance(summary["energy_scaling"]["ratios"], list)
    assert "margin_increasing" in summary["certification"]
    assert "certified" in text
