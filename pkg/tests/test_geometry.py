"""Config parsing, validation, and the sphere-distance geometry."""

import math
import os

import numpy as np
import pytest

from nodalsphere.errors import ConfigurationError, UsageError
from nodalsphere.geometry import (GridSpec, Omega, Potential, ProblemConfig,
                                  SpherePoint, parse_config_file,
                                  sphere_distance, split_coords,
                                  unit_sphere_measure, validate_config)

CFG = os.path.join(os.path.dirname(__file__), "..", "configs", "default.cfg")


def test_parse_default_config():
    cfg = parse_config_file(CFG)
    assert cfg.N == 3 and cfg.k == 2
    assert cfg.p == 3.0 and cfg.nu == 2.0 and cfg.theta == 4.0 and cfg.tau == 3.0
    assert cfg.potential.kind == "shifted_parabola"
    assert cfg.potential.params == (1.0, 5.0, 2.0, 0.0)
    assert cfg.omega.r_lo == 1.0 and cfg.omega.r_hi == 3.0
    assert cfg.grid.R_max == 6.0 and cfg.grid.h == 0.02
    assert cfg.m == 1 and cfg.xprime_dim == 0
    assert cfg.V0 == 1.0
    validate_config(cfg)


def test_parse_rejects_bad_files(tmp_path):
    base = open(CFG).read()

    bad = tmp_path / "dup.cfg"
    bad.write_text(base + "\nN = 4\n")
    with pytest.raises(UsageError, match="duplicate"):
        parse_config_file(str(bad))

    bad = tmp_path / "unknown.cfg"
    bad.write_text(base + "\nbogus.key = 1\n")
    with pytest.raises(UsageError, match="unknown"):
        parse_config_file(str(bad))

    bad = tmp_path / "missing.cfg"
    bad.write_text("\n".join(l for l in base.splitlines() if not l.startswith("tau")))
    with pytest.raises(UsageError, match="missing"):
        parse_config_file(str(bad))

    bad = tmp_path / "noval.cfg"
    bad.write_text(base + "\njust a broken line\n")
    with pytest.raises(UsageError):
        parse_config_file(str(bad))


def test_validate_rejects_supercritical_power():
    # N = 5, k = 1 makes the limit dimension m = 4, whose critical
    # exponent boundary is (m + 2)/(m - 2) = 3, so p = 3 must be refused
    cfg = parse_config_file(CFG)
    bad = ProblemConfig(N=5, k=1, p=3.0, nu=cfg.nu, tau=cfg.tau,
                        potential=cfg.potential, omega=cfg.omega,
                        grid=cfg.grid, theta=cfg.theta)
    with pytest.raises(ConfigurationError, match="config rejected"):
        validate_config(bad)


def test_validate_collects_multiple_violations():
    cfg = parse_config_file(CFG)
    bad = ProblemConfig(N=2, k=1, p=0.5, nu=0.5, tau=9.0,
                        potential=cfg.potential, omega=cfg.omega,
                        grid=cfg.grid, theta=1.0)
    with pytest.raises(ConfigurationError) as err:
        validate_config(bad)
    text = str(err.value)
    assert text.count("\n") >= 3


def test_theta_defaults_to_p_plus_one():
    cfg = parse_config_file(CFG)
    auto = ProblemConfig(N=cfg.N, k=cfg.k, p=cfg.p, nu=cfg.nu, tau=cfg.tau,
                         potential=cfg.potential, omega=cfg.omega,
                         grid=cfg.grid, theta=None)
    assert auto.theta == cfg.p + 1.0


def test_unit_sphere_measure():
    assert abs(unit_sphere_measure(1) - 2 * math.pi) < 1e-15
    assert abs(unit_sphere_measure(2) - 4 * math.pi) < 1e-15
    assert abs(unit_sphere_measure(3) - 2 * math.pi ** 2) < 1e-14
    with pytest.raises(ConfigurationError):
        unit_sphere_measure(0)


def test_sphere_distance_known_values():
    a = SpherePoint(xprime=(), r=1.0)
    b = SpherePoint(xprime=(), r=3.0)
    assert sphere_distance(a, b) == 2.0
    c = SpherePoint(xprime=(0.3,), r=1.0)
    d = SpherePoint(xprime=(0.0,), r=1.4)
    assert abs(sphere_distance(c, d) - 0.5) < 1e-15
    with pytest.raises(UsageError):
        sphere_distance(a, c)


def test_sphere_point_scaling():
    pt = SpherePoint(xprime=(0.2, -0.4), r=1.5)
    half = pt.scaled(0.5)
    assert half.xprime == (0.1, -0.2) and half.r == 0.75
    assert pt.to_list() == [0.2, -0.4, 1.5]


def test_split_coords():
    cfg = parse_config_file(CFG)
    pt = split_coords(np.array([0.3, 0.4, 1.2]), cfg)
    # k = 2 leaves no x' coordinates: all three axes fold into the radius
    assert pt.xprime == ()
    assert abs(pt.r - math.sqrt(0.09 + 0.16 + 1.44)) < 1e-15


def test_potential_evaluation():
    pot = Potential(kind="shifted_parabola", params=(1.0, 5.0, 2.0, 0.25))
    r = np.array([1.0, 2.0, 3.0])
    s = np.array([0.0, 2.0, 0.0])
    expected = 1.0 + 5.0 * (r - 2.0) ** 2 + 0.25 * s ** 2
    assert np.allclose(pot.evaluate(s, r), expected, rtol=0, atol=1e-15)
    assert pot.V0 == 1.0

    flat = Potential(kind="constant", params=(2.5,))
    assert np.all(flat.evaluate(s, r) == 2.5)
    with pytest.raises(ConfigurationError):
        Potential(kind="wiggly", params=(1.0,))


def test_omega_membership_is_strict():
    om = Omega(r_lo=1.0, r_hi=3.0, s_max=1.0)
    assert om.contains(np.array(0.0), np.array(2.0))
    assert not om.contains(np.array(0.0), np.array(1.0))
    assert not om.contains(np.array(0.0), np.array(3.0))
    assert not om.contains(np.array(1.0), np.array(2.0))
    with pytest.raises(ConfigurationError):
        Omega(r_lo=3.0, r_hi=1.0, s_max=1.0)


def test_canonical_text_is_stable():
    cfg = parse_config_file(CFG)
    text = cfg.canonical_text()
    assert text == parse_config_file(CFG).canonical_text()
    assert "shifted_parabola" in text and "grid.h" in text
