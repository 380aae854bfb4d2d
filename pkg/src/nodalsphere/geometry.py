"""Problem geometry and configuration.

Reduced coordinates: a point x in R^N is split as x = (x', x'') with
x' the first N-k-1 components and r = |x''|.  All quantities the solver
touches depend on x'' only through r, so fields live on (x', r) grids.

Hypothesis labels used in validation messages, stated self-contained:
  (f1) p > 1 (superlinear power nonlinearity),
  (f2) p < (N-k+2)/(N-k-2) when N-k >= 3 (subcritical in the reduced dim),
  (f3) 2 < theta <= p+1 (superquadratic potential well for the energy),
  (V1) V >= V0 > 0 everywhere on the computational box,
  (M1) the localization region is a product annulus, checked later against
       the auxiliary potential (interior infimum below boundary infimum).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UsageError


def _surface_measure(k: int) -> float:
    # 2 pi^((k+1)/2) / Gamma((k+1)/2); gives 2 at k=0 (two points of S^0),
    # which the limit-problem grids rely on.
    return 2.0 * math.pi ** ((k + 1) / 2.0) / math.gamma((k + 1) / 2.0)


def unit_sphere_measure(k) -> float:
    """Surface measure of the unit k-sphere: 2pi for k=1, 4pi for k=2."""
    if int(k) != k or k < 1:
        raise ConfigurationError(
            f"sphere dimension k must be an integer >= 1, got {k!r}")
    return _surface_measure(int(k))


@dataclass(frozen=True)
class SpherePoint:
    """Reduced coordinates (x', r) of a point; r >= 0."""

    xprime: tuple
    r: float

    def __post_init__(self):
        object.__setattr__(self, "xprime",
                           tuple(float(c) for c in self.xprime))
        object.__setattr__(self, "r", float(self.r))
        if self.r < 0:
            raise ConfigurationError(f"radius must be >= 0, got {self.r}")

    def to_list(self) -> list:
        return [*self.xprime, self.r]

    def scaled(self, factor: float) -> "SpherePoint":
        return SpherePoint(tuple(factor * c for c in self.xprime),
                           factor * self.r)


def sphere_distance(x: SpherePoint, y: SpherePoint) -> float:
    """Distance between the spheres through x and y:
    sqrt(|x'-y'|^2 + (r_x - r_y)^2).  Zero for distinct ambient points
    on the same sphere; a metric on reduced coordinates."""
    if len(x.xprime) != len(y.xprime):
        raise UsageError("sphere_distance: points have different x' dimension")
    s = sum((a - b) ** 2 for a, b in zip(x.xprime, y.xprime))
    return math.sqrt(s + (x.r - y.r) ** 2)


def split_coords(x, config) -> SpherePoint:
    """Split an ambient point into (x', |x''|) for this config."""
    x = np.asarray(x, dtype=float)
    if x.shape != (config.N,):
        raise ConfigurationError(
            f"split_coords: expected a point in R^{config.N}, got shape {x.shape}")
    d = config.xprime_dim
    return SpherePoint(tuple(x[:d]), float(np.linalg.norm(x[d:])))


@dataclass(frozen=True)
class Potential:
    """Cylindrically symmetric potential V(x', r).

    kinds:
      shifted_parabola: c0 + c1*(r - c2)^2 + c3*|x'|^2   (params c0,c1,c2,c3)
      constant:         c0                               (params c0)
    """

    kind: str
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params",
                           tuple(float(c) for c in self.params))
        n_expected = {"shifted_parabola": 4, "constant": 1}
        if self.kind not in n_expected:
            raise ConfigurationError(f"unknown potential kind {self.kind!r}")
        if len(self.params) != n_expected[self.kind]:
            raise ConfigurationError(
                f"potential {self.kind!r} takes {n_expected[self.kind]} "
                f"params, got {len(self.params)}")

    @property
    def V0(self) -> float:
        # both families attain their infimum c0 (for admissible c1, c3 >= 0)
        return self.params[0]

    def evaluate(self, sprime, r):
        """V at |x'| = sprime, |x''| = r.  Accepts arrays."""
        sprime = np.asarray(sprime, dtype=float)
        r = np.asarray(r, dtype=float)
        if self.kind == "constant":
            c0, = self.params
            return np.broadcast_to(c0, np.broadcast_shapes(sprime.shape, r.shape)).copy()
        c0, c1, c2, c3 = self.params
        return c0 + c1 * (r - c2) ** 2 + c3 * sprime ** 2

    def evaluate_point(self, point: SpherePoint) -> float:
        sp = math.sqrt(sum(c * c for c in point.xprime))
        return float(self.evaluate(sp, point.r))


@dataclass(frozen=True)
class Omega:
    """Open localization region {r_lo < r < r_hi, |x'| < s_max}.

    Rotation invariant in x'' by construction, as (M1) requires."""

    r_lo: float
    r_hi: float
    s_max: float

    def __post_init__(self):
        if not (0 <= self.r_lo < self.r_hi):
            raise ConfigurationError(
                f"need 0 <= r_lo < r_hi, got ({self.r_lo}, {self.r_hi})")
        if self.s_max <= 0:
            raise ConfigurationError(f"need s_max > 0, got {self.s_max}")

    def contains(self, sprime, r):
        """Strict membership; accepts arrays."""
        sprime = np.asarray(sprime, dtype=float)
        r = np.asarray(r, dtype=float)
        return (self.r_lo < r) & (r < self.r_hi) & (sprime < self.s_max)

    def contains_point(self, point: SpherePoint) -> bool:
        sp = math.sqrt(sum(c * c for c in point.xprime))
        return bool(self.contains(sp, point.r))


@dataclass(frozen=True)
class GridSpec:
    R_max: float
    h: float
    xprime_extent: float
    node_cap: int = 4_000_000

    def __post_init__(self):
        if self.h <= 0 or self.R_max <= 0 or self.xprime_extent <= 0:
            raise ConfigurationError("grid parameters must be positive")


@dataclass(frozen=True)
class ProblemConfig:
    """Full problem description.  theta defaults to p+1 when omitted,
    the equality case of (f3) for power nonlinearities."""

    N: int
    k: int
    p: float
    nu: float
    tau: float
    potential: Potential
    omega: Omega
    grid: GridSpec
    theta: float = None

    def __post_init__(self):
        if self.theta is None:
            object.__setattr__(self, "theta", self.p + 1.0)

    @property
    def m(self) -> int:
        """Dimension of the reduced problem, N - k."""
        return self.N - self.k

    @property
    def xprime_dim(self) -> int:
        return self.N - self.k - 1

    @property
    def V0(self) -> float:
        return self.potential.V0

    def canonical_text(self) -> str:
        """Normalized key=value rendering, used for cache keys."""
        items = [
            ("N", self.N), ("k", self.k), ("p", self.p), ("nu", self.nu),
            ("theta", self.theta), ("tau", self.tau),
            ("potential.kind", self.potential.kind),
            ("potential.params", ",".join(repr(c) for c in self.potential.params)),
            ("omega.r_lo", self.omega.r_lo), ("omega.r_hi", self.omega.r_hi),
            ("omega.s_max", self.omega.s_max),
            ("grid.R_max", self.grid.R_max), ("grid.h", self.grid.h),
            ("grid.xprime_extent", self.grid.xprime_extent),
        ]
        return "\n".join(f"{k} = {v!r}" for k, v in items)


_REQUIRED_KEYS = [
    "N", "k", "p", "nu", "theta", "tau",
    "potential.kind", "potential.params",
    "omega.r_lo", "omega.r_hi", "omega.s_max",
    "grid.R_max", "grid.h", "grid.xprime_extent",
]
_OPTIONAL_KEYS = ["grid.node_cap"]


def parse_config_file(path) -> ProblemConfig:
    """Parse a line-based `key = value` config file ('#' starts a comment)."""
    raw = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}")
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in raw:
                raise UsageError(f"{path}:{lineno}: duplicate key {key!r}")
            raw[key] = value

    known = set(_REQUIRED_KEYS) | set(_OPTIONAL_KEYS)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise UsageError(f"{path}: unknown config keys: {', '.join(unknown)}")
    missing = [key for key in _REQUIRED_KEYS if key not in raw]
    if missing:
        raise UsageError(f"{path}: missing config keys: {', '.join(missing)}")

    def as_int(key):
        try:
            return int(raw[key])
        except ValueError:
            raise UsageError(f"{path}: key {key!r} must be an integer") from None

    def as_float(key):
        try:
            return float(raw[key])
        except ValueError:
            raise UsageError(f"{path}: key {key!r} must be a number") from None

    try:
        params = tuple(float(tok) for tok in raw["potential.params"].split(",") if tok.strip())
    except ValueError:
        raise UsageError(f"{path}: potential.params must be comma-separated reals") from None

    grid_kwargs = {}
    if "grid.node_cap" in raw:
        grid_kwargs["node_cap"] = as_int("grid.node_cap")

    return ProblemConfig(
        N=as_int("N"), k=as_int("k"), p=as_float("p"), nu=as_float("nu"),
        theta=as_float("theta"), tau=as_float("tau"),
        potential=Potential(raw["potential.kind"], params),
        omega=Omega(as_float("omega.r_lo"), as_float("omega.r_hi"),
                    as_float("omega.s_max")),
        grid=GridSpec(as_float("grid.R_max"), as_float("grid.h"),
                      as_float("grid.xprime_extent"), **grid_kwargs),
    )


def validate_config(config: ProblemConfig) -> ProblemConfig:
    """Check every standing hypothesis; raise ConfigurationError naming all
    violated ones at once.  Returns the config unchanged on success."""
    bad = []

    if config.N < 3:
        bad.append(f"ambient dimension N must be >= 3, got {config.N}")
    if not (1 <= config.k <= config.N - 1):
        bad.append(f"sphere dimension k must satisfy 1 <= k <= N-1, got {config.k}")

    if config.p <= 1:
        bad.append(f"(f1) violated: need p > 1, got p={config.p}")
    m = config.m
    if m >= 3:
        p_crit = (m + 2) / (m - 2)
        if config.p >= p_crit:
            bad.append(f"(f2) violated: need p < (N-k+2)/(N-k-2) = {p_crit:g}, "
                       f"got p={config.p} (supercritical)")

    if config.nu <= 1:
        bad.append(f"penalization exponent nu must exceed 1, got {config.nu}")
    if not (2 < config.theta <= config.p + 1):
        bad.append(f"(f3) violated: need 2 < theta <= p+1 = {config.p + 1:g}, "
                   f"got theta={config.theta}")
    if not (2 < config.tau < config.theta):
        bad.append(f"penalization window violated: need 2 < tau < theta, "
                   f"got tau={config.tau}, theta={config.theta}")

    if config.potential.V0 <= 0:
        bad.append(f"(V1) violated: need V0 > 0, got V0={config.potential.V0}")
    else:
        # sample V over the computational box to confirm the lower bound
        r_sample = np.linspace(0.0, config.grid.R_max, 401)
        if config.xprime_dim > 0:
            s_sample = np.linspace(0.0, config.grid.xprime_extent
                                   * math.sqrt(config.xprime_dim), 101)
        else:
            s_sample = np.zeros(1)
        vmin = min(float(config.potential.evaluate(s, r_sample).min())
                   for s in s_sample)
        if vmin < config.potential.V0 - 1e-12:
            bad.append(f"(V1) violated: V drops to {vmin:g} < V0="
                       f"{config.potential.V0:g} on the grid")

    if config.omega.r_hi > config.grid.R_max:
        bad.append(f"localization region exceeds the box: r_hi="
                   f"{config.omega.r_hi} > R_max={config.grid.R_max}")
    if config.xprime_dim > 0 and config.omega.s_max > config.grid.xprime_extent:
        bad.append(f"localization region exceeds the box: s_max="
                   f"{config.omega.s_max} > xprime_extent={config.grid.xprime_extent}")

    if bad:
        raise ConfigurationError("config rejected:\n  " + "\n  ".join(bad))
    return config
