"""
Uniform grid on the closed unit square and the discrete calculus used by
every other module.

Grid functions are plain ``(n, n)`` numpy arrays indexed ``[ix, iy]`` so that
``values[i, j]`` is the sample at ``(x, y) = (i*h, j*h)``.  Fields are stored
complex unless they are coefficient data.

Boundary nodes are enumerated counter-clockwise starting from the origin:
bottom edge (y = 0), right edge (x = 1), top edge (y = 1), left edge (x = 0).
The k-th boundary node sits at arclength ``s = k*h``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MIN_NODES = 9

EDGES = ("bottom", "right", "top", "left")
_EDGE_NORMALS = {
    "bottom": (0.0, -1.0),
    "right": (1.0, 0.0),
    "top": (0.0, 1.0),
    "left": (-1.0, 0.0),
}


class GridError(ValueError):
    """Raised for invalid grid sizes or fields that do not live on a grid."""


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Uniform lattice on [0, 1]^2 with a fixed boundary enumeration."""

    n: int
    h: float
    coords: np.ndarray
    boundary_nodes: np.ndarray  # (M, 2) integer (i, j) pairs, ccw order
    normals: np.ndarray  # (M, 2) outward unit normals
    is_corner: np.ndarray  # (M,) bool
    interior_mask: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def num_nodes(self) -> int:
        return self.n * self.n

    @property
    def num_boundary(self) -> int:
        return len(self.boundary_nodes)

    @property
    def X(self) -> np.ndarray:
        return np.broadcast_to(self.coords[:, None], self.shape)

    @property
    def Y(self) -> np.ndarray:
        return np.broadcast_to(self.coords[None, :], self.shape)

    @property
    def arclength(self) -> np.ndarray:
        return self.h * np.arange(self.num_boundary)

    @property
    def boundary_points(self) -> np.ndarray:
        return self.boundary_nodes * self.h

    @property
    def non_corner(self) -> np.ndarray:
        """Indices (into the boundary enumeration) of the non-corner nodes."""
        return np.flatnonzero(~self.is_corner)

    def boundary_values(self, values: np.ndarray) -> np.ndarray:
        check_field(values, self)
        return values[self.boundary_nodes[:, 0], self.boundary_nodes[:, 1]]

    def with_boundary(self, values: np.ndarray, trace) -> np.ndarray:
        """Return a copy of ``values`` whose boundary samples are ``trace``."""
        out = np.array(values, dtype=np.result_type(values, np.asarray(trace)))
        out[self.boundary_nodes[:, 0], self.boundary_nodes[:, 1]] = trace
        return out

    def extend_trace(self, trace, interior=0.0) -> np.ndarray:
        """Grid function equal to ``trace`` on the boundary, ``interior`` inside."""
        trace = np.asarray(trace)
        out = np.full(self.shape, interior, dtype=np.result_type(trace, float))
        out[self.boundary_nodes[:, 0], self.boundary_nodes[:, 1]] = trace
        return out

    def node_index(self, x: float, y: float) -> tuple[int, int]:
        """Grid indices of the node at ``(x, y)``; the point must be a node."""
        i = int(round(x / self.h))
        j = int(round(y / self.h))
        if not (0 <= i < self.n and 0 <= j < self.n) or max(
            abs(i * self.h - x), abs(j * self.h - y)
        ) > 1e-9:
            raise GridError(f"({x}, {y}) is not a node of the {self.n}x{self.n} grid")
        return i, j

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(x, y)`` on the grid."""
        return np.asarray(func(self.X, self.Y)) + np.zeros(self.shape)

    def same_as(self, other: "GridSpec") -> bool:
        return self.n == other.n


def build_grid(n_per_side: int) -> GridSpec:
    """Build the uniform grid with ``n_per_side`` nodes per axis."""
    n = int(n_per_side)
    if n != n_per_side or n < MIN_NODES:
        raise GridError(f"grid too coarse: n_per_side={n_per_side} (need >= {MIN_NODES})")
    h = 1.0 / (n - 1)
    last = n - 1
    ks = np.arange(last)
    bottom = np.stack([ks, np.zeros_like(ks)], axis=1)
    right = np.stack([np.full_like(ks, last), ks], axis=1)
    top = np.stack([last - ks, np.full_like(ks, last)], axis=1)
    left = np.stack([np.zeros_like(ks), last - ks], axis=1)
    nodes = np.concatenate([bottom, right, top, left])

    normals = np.concatenate(
        [np.tile(_EDGE_NORMALS[e], (last, 1)) for e in EDGES]
    ).astype(float)
    is_corner = np.zeros(len(nodes), dtype=bool)
    is_corner[ks[0] + last * np.arange(4)] = True
    # corners: normalized average of the two adjacent edge normals
    for k in np.flatnonzero(is_corner):
        i, j = nodes[k]
        nu = np.array([1.0 if i == last else -1.0, 1.0 if j == last else -1.0])
        normals[k] = nu / np.sqrt(2.0)

    interior = np.zeros((n, n), dtype=bool)
    interior[1:-1, 1:-1] = True
    return GridSpec(
        n=n,
        h=h,
        coords=np.linspace(0.0, 1.0, n),
        boundary_nodes=nodes,
        normals=normals,
        is_corner=is_corner,
        interior_mask=interior,
    )


def check_field(values: np.ndarray, grid: GridSpec) -> None:
    if np.shape(values) != grid.shape:
        raise GridError(f"field of shape {np.shape(values)} does not live on {grid.shape} grid")


@dataclass
class Field:
    """A grid function together with its grid, used for serialization."""

    values: np.ndarray
    grid: GridSpec
    real: bool = False

    def __post_init__(self):
        check_field(self.values, self.grid)
        self.values = np.asarray(self.values, dtype=complex)
        if self.real and np.any(self.values.imag != 0.0):
            raise GridError("field flagged real has nonzero imaginary part")


# --------------------------------------------------------------------------
# differences


def _d1(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Centered first difference inside; at the ends, a centered difference
    against a ghost value from cubic extrapolation.

    The end stencil shares the interior truncation error ``h^2 f'''/6`` so
    centered differences of derived fields (e.g. ``div`` of a gradient) stay
    second order at the first interior layer.
    """
    f = np.moveaxis(np.asarray(f), axis, 0)
    out = np.empty(f.shape, dtype=np.result_type(f, float))
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    out[0] = (-4.0 * f[0] + 7.0 * f[1] - 4.0 * f[2] + f[3]) / (2.0 * h)
    out[-1] = (4.0 * f[-1] - 7.0 * f[-2] + 4.0 * f[-3] - f[-4]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def _d2(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    f = np.moveaxis(f, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h**2
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h**2
    out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def gradient(f: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Second-order gradient on every node (centered inside, one-sided on the boundary)."""
    check_field(f, grid)
    return _d1(f, grid.h, 0), _d1(f, grid.h, 1)


def divergence(vx: np.ndarray, vy: np.ndarray, grid: GridSpec) -> np.ndarray:
    return _d1(vx, grid.h, 0) + _d1(vy, grid.h, 1)


def laplacian(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Five-point Laplacian inside; one-sided second differences on the boundary."""
    check_field(f, grid)
    return _d2(f, grid.h, 0) + _d2(f, grid.h, 1)


def divergence_form(a: np.ndarray, f: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Discrete ``div(a grad f)``.

    Interior nodes use the conservative flux stencil with face values of ``a``
    taken as the arithmetic mean of the two adjacent nodes.  Boundary nodes,
    where no flux stencil fits, use the expanded form ``a lap f + grad a . grad f``
    with one-sided differences.
    """
    check_field(a, grid)
    check_field(f, grid)
    h2 = grid.h**2
    ax = 0.5 * (a[1:, :] + a[:-1, :])
    ay = 0.5 * (a[:, 1:] + a[:, :-1])
    fx = ax * (f[1:, :] - f[:-1, :])
    fy = ay * (f[:, 1:] - f[:, :-1])
    ax_, ay_ = gradient(a, grid)
    fx_, fy_ = gradient(f, grid)
    out = a * laplacian(f, grid) + ax_ * fx_ + ay_ * fy_
    out[1:-1, 1:-1] = (
        (fx[1:, 1:-1] - fx[:-1, 1:-1]) + (fy[1:-1, 1:] - fy[1:-1, :-1])
    ) / h2
    return out


def _one_sided(f: np.ndarray, h: float, axis: int, end: int) -> np.ndarray:
    """Derivative along ``axis`` at index 0 (end=0) or -1 (end=-1), 3-point."""
    f = np.moveaxis(f, axis, 0)
    if end == 0:
        return (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
    return (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)


def normal_derivative(f: np.ndarray, grid: GridSpec, at=None) -> np.ndarray:
    """Outward normal derivative at boundary nodes via one-sided 3-point stencils.

    Returns values in the boundary enumeration order.  Corner values use the
    diagonal corner normal and are excluded from every reported metric.  With
    ``at=(i, j)`` a single node is evaluated; interior nodes are rejected.
    """
    check_field(f, grid)
    h, last = grid.h, grid.n - 1
    dx_lo = _one_sided(f, h, 0, 0)  # along y, at x = 0
    dx_hi = _one_sided(f, h, 0, -1)
    dy_lo = _one_sided(f, h, 1, 0)  # along x, at y = 0
    dy_hi = _one_sided(f, h, 1, -1)

    def at_node(i, j, nu):
        val = 0.0
        if nu[0] != 0.0:
            val = val + nu[0] * (dx_hi[j] if i == last else dx_lo[j])
        if nu[1] != 0.0:
            val = val + nu[1] * (dy_hi[i] if j == last else dy_lo[i])
        return val

    if at is not None:
        i, j = at
        if 0 < i < last and 0 < j < last:
            raise GridError(f"normal derivative requested at interior node ({i}, {j})")
        k = np.flatnonzero((grid.boundary_nodes[:, 0] == i) & (grid.boundary_nodes[:, 1] == j))
        return at_node(i, j, grid.normals[k[0]])

    out = np.empty(grid.num_boundary, dtype=np.result_type(f, float))
    for k, ((i, j), nu) in enumerate(zip(grid.boundary_nodes, grid.normals)):
        out[k] = at_node(i, j, nu)
    return out


def edge_normal_derivatives(f: np.ndarray, grid: GridSpec) -> dict[str, np.ndarray]:
    """Normal derivative along each full edge (corners included) using that edge's normal.

    Edge arrays are ordered by increasing x (bottom/top) or y (left/right).
    """
    check_field(f, grid)
    h = grid.h
    return {
        "bottom": -_one_sided(f, h, 1, 0),
        "right": _one_sided(f, h, 0, -1),
        "top": _one_sided(f, h, 1, -1),
        "left": -_one_sided(f, h, 0, 0),
    }


def edge_values(f: np.ndarray) -> dict[str, np.ndarray]:
    """Samples of ``f`` along each full edge, same ordering as :func:`edge_normal_derivatives`."""
    return {"bottom": f[:, 0], "right": f[-1, :], "top": f[:, -1], "left": f[0, :]}


# --------------------------------------------------------------------------
# quadrature


def trapezoid_weights(grid: GridSpec) -> np.ndarray:
    w1 = np.full(grid.n, grid.h)
    w1[[0, -1]] = 0.5 * grid.h
    return np.outer(w1, w1)


def integrate(f: np.ndarray, grid: GridSpec, region: str = "interior"):
    """Trapezoid quadrature over the square (``interior``) or its perimeter (``boundary``).

    For ``boundary`` the argument may be a full grid function or an array of
    samples in boundary enumeration order.
    """
    if region == "interior":
        check_field(f, grid)
        return np.sum(trapezoid_weights(grid) * f)
    if region == "boundary":
        vals = np.asarray(f)
        if vals.shape == grid.shape:
            vals = grid.boundary_values(vals)
        if vals.shape != (grid.num_boundary,):
            raise GridError("boundary samples do not match the boundary node count")
        # closed loop: every node carries weight h
        return grid.h * np.sum(vals)
    raise ValueError(f"unknown region {region!r}")


def integrate_edges(edge_arrays: dict[str, np.ndarray], grid: GridSpec):
    """Composite trapezoid rule applied edge by edge and summed."""
    total = 0.0
    for vals in edge_arrays.values():
        total = total + grid.h * (np.sum(vals) - 0.5 * (vals[0] + vals[-1]))
    return total


def boundary_flux(g: np.ndarray, f: np.ndarray, grid: GridSpec):
    """Second-order approximation of the boundary integral of ``g * d_nu f``."""
    dn = edge_normal_derivatives(f, grid)
    gv = edge_values(g)
    return integrate_edges({e: gv[e] * dn[e] for e in EDGES}, grid)


# --------------------------------------------------------------------------
# CSV serialization


def write_field_csv(path, values: np.ndarray, grid: GridSpec) -> None:
    """Write a grid function as CSV with columns x, y, re, im (row-major)."""
    check_field(values, grid)
    values = np.asarray(values, dtype=complex)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "re", "im"])
        for i in range(grid.n):
            for j in range(grid.n):
                v = values[i, j]
                writer.writerow(
                    [f"{grid.coords[i]:.17g}", f"{grid.coords[j]:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}"]
                )


def read_field_csv(path) -> tuple[np.ndarray, GridSpec]:
    """Read a grid function written by :func:`write_field_csv`."""
    rows = []
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"x", "y", "re", "im"} - set(reader.fieldnames or ())
        if missing:
            raise GridError(f"field CSV {path} lacks columns {sorted(missing)}")
        for row in reader:
            rows.append([float(row["x"]), float(row["y"]), float(row["re"]), float(row["im"])])
    data = np.array(rows)
    n = int(round(np.sqrt(len(data))))
    if n * n != len(data):
        raise GridError(f"field CSV {path} has {len(data)} rows, not a square grid")
    grid = build_grid(n)
    values = np.zeros(grid.shape, dtype=complex)
    ii = np.rint(data[:, 0] / grid.h).astype(int)
    jj = np.rint(data[:, 1] / grid.h).astype(int)
    values[ii, jj] = data[:, 2] + 1j * data[:, 3]
    return values, grid
