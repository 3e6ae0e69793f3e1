"""
Finite-difference Dirichlet solver for ``div(a grad v) + b . grad v + c v = g``.

Every linearized, adjoint, magnetic and CGO solve in the package goes through
:func:`solve_dirichlet`.  Dirichlet values are eliminated into the right-hand
side, so the assembled matrix acts on interior unknowns only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import GridError, GridSpec, check_field, divergence

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    """Linear solve missed its residual target."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class EllipticProblem:
    """Coefficients, source and Dirichlet trace of one linear problem.

    ``b`` is the pair ``(bx, by)``.  ``trace`` holds values at boundary nodes in
    the grid's boundary enumeration order.
    """

    grid: GridSpec
    a: np.ndarray
    b: tuple[np.ndarray, np.ndarray]
    c: np.ndarray
    rhs: np.ndarray
    trace: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("a", "c", "rhs"):
            check_field(getattr(self, name), self.grid)
        check_field(self.b[0], self.grid)
        check_field(self.b[1], self.grid)
        if np.shape(self.trace) != (self.grid.num_boundary,):
            raise GridError("Dirichlet trace does not match the boundary node count")

    def with_data(self, rhs=None, trace=None) -> "EllipticProblem":
        return replace(
            self,
            rhs=self.rhs if rhs is None else np.asarray(rhs),
            trace=self.trace if trace is None else np.asarray(trace),
        )

    @property
    def is_maximum_principle(self) -> bool:
        """Real instance with ``a`` positive and ``c <= 0`` everywhere."""
        arrays = (self.a, self.b[0], self.b[1], self.c)
        if any(np.iscomplexobj(x) and np.any(np.imag(x) != 0) for x in arrays):
            return False
        return bool(np.min(np.real(self.a)) > 0 and np.max(np.real(self.c)) <= 0)


def make_problem(grid, a, b=None, c=None, rhs=None, trace=None, **meta) -> EllipticProblem:
    """Convenience constructor accepting scalars for any coefficient."""
    full = lambda v: np.zeros(grid.shape) + v  # noqa: E731
    if b is None:
        b = (0.0, 0.0)
    return EllipticProblem(
        grid=grid,
        a=full(a),
        b=(full(b[0]), full(b[1])),
        c=full(0.0 if c is None else c),
        rhs=full(0.0 if rhs is None else rhs),
        trace=np.zeros(grid.num_boundary) + (0.0 if trace is None else np.asarray(trace)),
        meta=meta,
    )


def formal_adjoint(problem: EllipticProblem, rhs=None, trace=None) -> EllipticProblem:
    """Hermitian formal adjoint ``div(a* grad) - b* . grad + (c - div b)*``."""
    grid = problem.grid
    bx, by = problem.b
    div_b = divergence(bx, by, grid)
    return EllipticProblem(
        grid=grid,
        a=np.conj(problem.a),
        b=(-np.conj(bx), -np.conj(by)),
        c=np.conj(problem.c - div_b),
        rhs=problem.rhs if rhs is None else rhs,
        trace=problem.trace if trace is None else trace,
        meta=dict(problem.meta),
    )


@dataclass(frozen=True, eq=False)
class LinearSystem:
    matrix: sp.csc_matrix  # interior x interior
    rhs: np.ndarray
    operator: sp.csr_matrix  # interior rows x all nodes
    interior: np.ndarray  # flat indices
    boundary: np.ndarray  # flat indices, boundary enumeration order


def _interior_index(grid: GridSpec):
    n = grid.n
    ii, jj = np.meshgrid(np.arange(1, n - 1), np.arange(1, n - 1), indexing="ij")
    return ii.ravel(), jj.ravel()


def stencil_matrix(grid: GridSpec, coeffs: dict) -> sp.csr_matrix:
    """Sparse matrix with one row per interior node.

    ``coeffs`` maps an offset ``(di, dj)`` to an ``(n, n)`` array (or scalar)
    holding the weight that the row of node ``(i, j)`` puts on node
    ``(i+di, j+dj)``.
    """
    n = grid.n
    ii, jj = _interior_index(grid)
    rows, cols, vals = [], [], []
    row = np.arange(len(ii))
    for (di, dj), w in coeffs.items():
        w = np.zeros(grid.shape, dtype=np.result_type(w, float)) + w
        rows.append(row)
        cols.append((ii + di) * n + (jj + dj))
        vals.append(w[ii, jj])
    dtype = np.result_type(*vals)
    return sp.csr_matrix(
        (np.concatenate(vals).astype(dtype), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(ii), n * n),
    )


def operator_matrix(problem: EllipticProblem) -> sp.csr_matrix:
    """Full-width operator: interior rows, columns over every grid node."""
    grid = problem.grid
    h = grid.h
    a = problem.a
    bx, by = problem.b
    # arithmetic-mean face coefficients, indexed at the lower node
    ae = np.zeros(grid.shape, dtype=a.dtype)
    an = np.zeros(grid.shape, dtype=a.dtype)
    ae[:-1, :] = 0.5 * (a[1:, :] + a[:-1, :])
    an[:, :-1] = 0.5 * (a[:, 1:] + a[:, :-1])
    aw = np.roll(ae, 1, axis=0)
    as_ = np.roll(an, 1, axis=1)
    h2 = h * h
    coeffs = {
        (1, 0): ae / h2 + bx / (2 * h),
        (-1, 0): aw / h2 - bx / (2 * h),
        (0, 1): an / h2 + by / (2 * h),
        (0, -1): as_ / h2 - by / (2 * h),
        (0, 0): -(ae + aw + an + as_) / h2 + problem.c,
    }
    return stencil_matrix(grid, coeffs)


def assemble(problem: EllipticProblem) -> LinearSystem:
    grid = problem.grid
    K = operator_matrix(problem)
    bnd = grid.boundary_nodes[:, 0] * grid.n + grid.boundary_nodes[:, 1]
    ii, jj = _interior_index(grid)
    inner = ii * grid.n + jj
    K_csc = K.tocsc()
    A_ii = K_csc[:, inner]
    A_ib = K_csc[:, bnd]
    rhs = problem.rhs[ii, jj] - A_ib @ problem.trace
    return LinearSystem(matrix=A_ii.tocsc(), rhs=rhs, operator=K, interior=inner, boundary=bnd)


def apply_operator(problem: EllipticProblem, v: np.ndarray) -> np.ndarray:
    """Apply the discrete operator to a full grid function; boundary entries are zero."""
    check_field(v, problem.grid)
    K = operator_matrix(problem)
    out = np.zeros(problem.grid.shape, dtype=np.result_type(K.dtype, v))
    out[1:-1, 1:-1] = (K @ v.ravel()).reshape(problem.grid.n - 2, problem.grid.n - 2)
    return out


def solve_linear_system(A: sp.spmatrix, rhs: np.ndarray, tol: float = DEFAULT_TOL, refine: int = 3):
    """Sparse LU solve with iterative refinement; raises :class:`SolverError` if ``tol`` is missed."""
    scale = np.linalg.norm(rhs)
    if scale == 0.0:
        return np.zeros(A.shape[1], dtype=np.result_type(A.dtype, rhs)), 0.0
    dtype = np.result_type(A.dtype, rhs)
    A = A.astype(dtype).tocsc()
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:  # exactly singular factor
        raise SolverError(f"factorization failed: {exc}", np.inf) from exc
    x = lu.solve(rhs.astype(dtype))
    res = np.linalg.norm(A @ x - rhs) / scale
    for _ in range(refine):
        if res <= tol:
            break
        x = x + lu.solve(rhs - A @ x)
        res = np.linalg.norm(A @ x - rhs) / scale
    if not np.isfinite(res) or res > tol:
        raise SolverError("linear system residual target unmet", float(res))
    return x, float(res)


def solve_dirichlet(problem: EllipticProblem, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Solve the Dirichlet problem and return the full grid solution."""
    system = assemble(problem)
    x, _ = solve_linear_system(system.matrix, system.rhs, tol)
    grid = problem.grid
    dtype = np.result_type(x, problem.trace)
    v = np.zeros(grid.shape, dtype=dtype)
    v.ravel()[system.interior] = x
    v.ravel()[system.boundary] = problem.trace
    return v
