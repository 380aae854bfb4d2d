"""Cell-centered grids on the reduced domain with the cylindrical weight r^k.

The measure is omega_k * r^k dr dx'.  Radial cells use exact masses
m_j = (((j+1)h)^(k+1) - ((jh))^(k+1))/(k+1), so polynomial measure
identities (total mass, part masses) hold to rounding, not just O(h^2).

The Laplacian is discretized in divergence form through face fluxes; the
same face coefficients define the Dirichlet (gradient) bilinear form, which
makes discrete integration by parts an algebraic identity.  The face at
r = 0 carries coefficient 0, encoding the zero-flux regularity condition
there; outer boundaries are homogeneous Dirichlet through ghost cells.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConstructionError, ResourceLimitError, UsageError
from .geometry import _surface_measure


@dataclass(frozen=True)
class ReducedGrid:
    """Immutable grid metadata plus precomputed quadrature arrays."""

    k: int
    h: float
    eps: float
    omega_k: float
    r_nodes: np.ndarray = field(repr=False, compare=False)
    xprime_axes: tuple = field(repr=False, compare=False)
    cell_mass: np.ndarray = field(repr=False, compare=False)
    face_rk: np.ndarray = field(repr=False, compare=False)
    weight_row: np.ndarray = field(repr=False, compare=False)
    coeff_r: np.ndarray = field(repr=False, compare=False)
    coeff_x: np.ndarray = field(repr=False, compare=False)

    @property
    def xprime_dim(self) -> int:
        return len(self.xprime_axes)

    @property
    def shape(self) -> tuple:
        return tuple(len(ax) for ax in self.xprime_axes) + (len(self.r_nodes),)

    @property
    def R_outer(self) -> float:
        return len(self.r_nodes) * self.h

    def node_coords(self):
        """Meshgrid of node coordinates, ij-indexed, one array per axis
        (x' axes first, radius last)."""
        return np.meshgrid(*self.xprime_axes, self.r_nodes, indexing="ij")

    def sprime_r(self):
        """|x'| and r at every node, broadcast to the grid shape."""
        coords = self.node_coords()
        r = coords[-1]
        if self.xprime_dim == 0:
            return np.zeros_like(r), r
        sq = np.zeros_like(r)
        for ax in coords[:-1]:
            sq += ax ** 2
        return np.sqrt(sq), r


@dataclass(frozen=True)
class ReducedField:
    """Grid function; values must be finite and match the grid shape."""

    grid: ReducedGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise UsageError(f"field shape {self.values.shape} does not match "
                             f"grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ConstructionError("field contains non-finite values")


def _make_grid(k, h, eps, n_radial, xprime_axes, node_cap) -> ReducedGrid:
    total = n_radial
    for ax in xprime_axes:
        total *= len(ax)
    if total > node_cap:
        raise ResourceLimitError(
            f"grid would need {total} nodes (cap {node_cap}); "
            "increase h or eps, or raise grid.node_cap")

    d = len(xprime_axes)
    omega = _surface_measure(k)
    j = np.arange(n_radial + 1, dtype=float)
    faces = j * h
    face_rk = faces ** k
    face_rk[0] = 0.0  # zero flux at the axis, also fixes 0^0 for k=0
    cell_mass = np.diff(faces ** (k + 1)) / (k + 1)
    r_nodes = (np.arange(n_radial, dtype=float) + 0.5) * h

    weight_row = omega * cell_mass * h ** d
    coeff_r = omega * face_rk * h ** (d - 1)
    coeff_x = omega * cell_mass * h ** (d - 2) if d > 0 else np.zeros(0)

    for arr in (r_nodes, cell_mass, face_rk, weight_row, coeff_r, coeff_x):
        arr.setflags(write=False)
    return ReducedGrid(k=int(k), h=float(h), eps=float(eps), omega_k=omega,
                       r_nodes=r_nodes, xprime_axes=tuple(xprime_axes),
                       cell_mass=cell_mass, face_rk=face_rk,
                       weight_row=weight_row, coeff_r=coeff_r, coeff_x=coeff_x)


def build_grid(config, eps) -> ReducedGrid:
    """Grid for the rescaled problem at this eps: r in (0, R_max/eps],
    x' in [-L/eps, L/eps]^(N-k-1)."""
    h = config.grid.h
    n_radial = int(round(config.grid.R_max / (eps * h)))
    if n_radial < 8:
        raise ConstructionError(f"only {n_radial} radial cells at eps={eps}; "
                                "decrease h")
    axes = []
    for _ in range(config.xprime_dim):
        half = config.grid.xprime_extent / eps
        n = int(round(2.0 * half / h))
        axes.append((np.arange(n, dtype=float) + 0.5) * h - half)
    return _make_grid(config.k, h, eps, n_radial, axes,
                      config.grid.node_cap)


def build_radial_grid(k_weight, R, h, node_cap=4_000_000) -> ReducedGrid:
    """Pure radial grid with weight r^k_weight on (0, R]; used by the
    limit-problem solves (k_weight = m - 1, which may be 0)."""
    n_radial = int(round(R / h))
    return _make_grid(k_weight, h, 1.0, n_radial, (), node_cap)


def _check_field(grid, values):
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise UsageError(f"field shape {values.shape} does not match grid "
                         f"shape {grid.shape}")
    return values


def dirichlet_form(grid: ReducedGrid, u, w) -> float:
    """The gradient bilinear form a(u, w) = integral of grad u . grad w
    over the weighted measure, with Dirichlet ghosts on outer boundaries."""
    u = _check_field(grid, u)
    w = _check_field(grid, w)
    du = np.diff(u, axis=-1, prepend=0.0, append=0.0)
    dw = np.diff(w, axis=-1, prepend=0.0, append=0.0)
    total = float((grid.coeff_r * du * dw).sum())
    for axis in range(grid.xprime_dim):
        du = np.diff(u, axis=axis, prepend=0.0, append=0.0)
        dw = np.diff(w, axis=axis, prepend=0.0, append=0.0)
        total += float((grid.coeff_x * du * dw).sum())
    return total


def apply_dirichlet(grid: ReducedGrid, u):
    """Matrix action L u with <L u, w>_euclidean = dirichlet_form(u, w),
    exactly (same face fluxes, summed by parts)."""
    u = _check_field(grid, u)
    flux = grid.coeff_r * np.diff(u, axis=-1, prepend=0.0, append=0.0)
    out = -np.diff(flux, axis=-1)
    for axis in range(grid.xprime_dim):
        flux = grid.coeff_x * np.diff(u, axis=axis, prepend=0.0, append=0.0)
        out -= np.diff(flux, axis=axis)
    return out


def weighted_integral(grid: ReducedGrid, values) -> float:
    """Integral of a node expression over the weighted measure."""
    values = _check_field(grid, values)
    return float((values * grid.weight_row).sum())


def inner_product(grid: ReducedGrid, u, w) -> float:
    """Weighted L2 inner product."""
    u = _check_field(grid, u)
    w = _check_field(grid, w)
    return float((u * w * grid.weight_row).sum())


def norm_weighted(grid: ReducedGrid, u) -> float:
    return float(np.sqrt(max(inner_product(grid, u, u), 0.0)))


def inner_eps(grid: ReducedGrid, u, w, V) -> float:
    """The energy inner product a(u, w) + integral V u w."""
    return dirichlet_form(grid, u, w) + inner_product(grid, V * u, w)


def norm_eps(grid: ReducedGrid, v, V) -> float:
    """Energy norm: sqrt of a(v, v) + integral V v^2."""
    return float(np.sqrt(max(inner_eps(grid, v, v, V), 0.0)))


def apply_operator(grid: ReducedGrid, V, v, source=None):
    """The map v -> -Lap_reduced v + V v - g(v) at the nodes.  The linear
    part is the weighted-measure Riesz representative of the Dirichlet
    form, so it is self-adjoint in inner_product by construction."""
    v = _check_field(grid, v)
    out = apply_dirichlet(grid, v) / grid.weight_row + V * v
    if source is not None:
        out -= source.g(v)
    return out


def assemble_stiffness(grid: ReducedGrid) -> sparse.csr_matrix:
    """Sparse matrix K of apply_dirichlet in the flat node basis:
    (K u)_i = apply_dirichlet(u)_i, so u^T K w = dirichlet_form(u, w).
    Symmetric positive semidefinite by construction (strictly definite
    with the outer Dirichlet ghosts)."""
    shape = grid.shape
    n = int(np.prod(shape))
    idx = np.arange(n).reshape(shape)
    rows, cols, vals = [], [], []

    def add_axis(axis, face_coeff_interior, end_lo, end_hi):
        # face_coeff_interior: per-face coefficient array broadcastable to
        # the slab of faces between consecutive cells along `axis`
        left = np.moveaxis(idx, axis, -1)[..., :-1]
        right = np.moveaxis(idx, axis, -1)[..., 1:]
        c = np.broadcast_to(face_coeff_interior, left.shape).ravel()
        lf = left.ravel()
        rt = right.ravel()
        rows.extend([lf, rt, lf, rt])
        cols.extend([lf, rt, rt, lf])
        vals.extend([c, c, -c, -c])
        lo = np.moveaxis(idx, axis, -1)[..., 0]
        hi = np.moveaxis(idx, axis, -1)[..., -1]
        rows.extend([lo.ravel(), hi.ravel()])
        cols.extend([lo.ravel(), hi.ravel()])
        vals.extend([
            np.broadcast_to(end_lo, lo.shape).ravel().astype(float),
            np.broadcast_to(end_hi, hi.shape).ravel().astype(float)])

    last = len(shape) - 1
    add_axis(last, grid.coeff_r[1:-1], grid.coeff_r[0], grid.coeff_r[-1])
    for axis in range(grid.xprime_dim):
        # x' face coefficient depends only on the radial index; broadcast
        # the row to the full grid, then slice faces along this axis
        cx = np.broadcast_to(grid.coeff_x, shape)
        cx_faces = np.moveaxis(cx, axis, -1)[..., :-1]
        c_ends = np.moveaxis(cx, axis, -1)[..., 0]
        add_axis(axis, cx_faces, c_ends, c_ends)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    return sparse.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()


def write_field_csv(grid: ReducedGrid, values, path):
    """Plain CSV dump: one row per node, columns xprime..., r, value."""
    values = _check_field(grid, values)
    coords = grid.node_coords()
    cols = [c.reshape(-1) for c in coords] + [values.reshape(-1)]
    names = [f"x{i + 1}" for i in range(grid.xprime_dim)] + ["r", "value"]
    data = np.column_stack(cols)
    np.savetxt(path, data, fmt="%.12g", delimiter=",",
               header=",".join(names), comments="")


_MAGIC = b"NSF1"


def write_field_bin(grid: ReducedGrid, values, path):
    """Raw binary dump: header (magic, version, k, dims, h, eps) then
    row-major little-endian doubles."""
    values = _check_field(grid, values)
    dims = np.asarray(grid.shape, dtype="<u8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", _MAGIC, 1, grid.k, grid.xprime_dim))
        fh.write(dims.tobytes())
        fh.write(struct.pack("<dd", grid.h, grid.eps))
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def read_field_bin(path):
    """Read a binary field dump; returns (meta dict, values array)."""
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16:
            raise UsageError(f"{path}: truncated field file")
        magic, version, k, d = struct.unpack("<4sIII", head)
        if magic != _MAGIC:
            raise UsageError(f"{path}: not a field file (bad magic)")
        if version != 1:
            raise UsageError(f"{path}: unsupported field file version {version}")
        raw = fh.read(8 * (d + 1) + 16)
        if len(raw) < 8 * (d + 1) + 16:
            raise UsageError(f"{path}: truncated field file")
        dims = np.frombuffer(raw[:8 * (d + 1)], dtype="<u8").astype(int)
        h, eps = struct.unpack("<dd", raw[8 * (d + 1):])
        values = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    expected = int(np.prod(dims))
    if values.size != expected:
        raise UsageError(f"{path}: payload has {values.size} values, "
                         f"header promises {expected}")
    meta = {"k": int(k), "d": int(d), "dims": tuple(int(n) for n in dims),
            "h": float(h), "eps": float(eps)}
    return meta, values.reshape(meta["dims"])
