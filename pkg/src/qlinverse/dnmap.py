"""
Discrete Dirichlet-to-Neumann maps and their finite-difference linearizations.

DN samples are one-sided normal derivatives at the non-corner boundary nodes.
Boundary data are expanded in a real Fourier basis along the arclength of the
boundary loop.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import elliptic, forward
from .elliptic import EllipticProblem
from .forward import CoefficientSet, ForwardError
from .mesh import GridSpec, boundary_flux, gradient, integrate, laplacian, normal_derivative

EPS_RANGE = (1e-5, 1e-1)
DEFAULT_EPS = 1e-3
AGREEMENT_FACTOR = 10.0


# --------------------------------------------------------------------------
# boundary basis


@dataclass(frozen=True, eq=False)
class BoundaryBasis:
    """Orthonormal real Fourier modes on the boundary loop.

    The loop has length 4 and node ``k`` sits at arclength ``k h``; the
    discrete inner product gives every node the weight ``h``.
    """

    grid: GridSpec
    modes: np.ndarray  # (num_modes, num_boundary)
    names: tuple[str, ...]
    k_max: int

    def __len__(self):
        return len(self.names)

    def __getitem__(self, j) -> np.ndarray:
        return self.modes[j]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def gram(self) -> np.ndarray:
        return self.grid.h * self.modes @ self.modes.T


def fourier_basis(grid: GridSpec, k_max: int | None = None) -> BoundaryBasis:
    """Constant mode plus ``cos``/``sin`` pairs up to frequency ``k_max`` (default ``n // 4``)."""
    if k_max is None:
        k_max = grid.n // 4
    m = grid.num_boundary
    if not 0 <= k_max < m // 2:
        raise ValueError(f"k_max={k_max} not resolvable with {m} boundary nodes")
    theta = 2.0 * np.pi * np.arange(m) / m
    modes = [np.full(m, 0.5)]
    names = ["const"]
    for k in range(1, k_max + 1):
        modes.append(np.cos(k * theta) / np.sqrt(2.0))
        modes.append(np.sin(k * theta) / np.sqrt(2.0))
        names += [f"cos{k}", f"sin{k}"]
    return BoundaryBasis(grid, np.array(modes), tuple(names), k_max)


# --------------------------------------------------------------------------
# DN matrices


@dataclass(frozen=True, eq=False)
class DNMatrix:
    """Columns of normal-derivative samples (non-corner nodes), one per mode."""

    entries: np.ndarray
    names: tuple[str, ...]
    grid: GridSpec
    base_point: tuple | None = None  # (f0, u0) for linearizations
    floor: float = 0.0
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return self.entries[:, self.names.index(name)]

    def max_gap(self, other: "DNMatrix") -> float:
        if self.entries.shape != other.entries.shape:
            raise ValueError("DN matrices have different shapes")
        return float(np.max(np.abs(self.entries - other.entries)))

    def to_csv(self, path) -> None:
        pts = self.grid.boundary_points[self.grid.non_corner]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", *self.names])
            for p, row in zip(pts, self.entries):
                w.writerow([f"{p[0]:.17g}", f"{p[1]:.17g}", *(f"{v:.17g}" for v in np.real(row))])


def dn_floor(grid: GridSpec, tol: float, scale: float = 1.0, order: int = 0, eps: float = 1.0) -> float:
    """Noise level of DN samples from a solve converged to ``tol``.

    Solver error of size ``tol * scale`` is amplified by ``~4/h`` in the
    one-sided stencil and by ``eps^-order`` in an FD linearization stencil.
    """
    return 4.0 * tol * max(1.0, scale) / grid.h / eps**order


def _dn_samples(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    return normal_derivative(u, grid)[grid.non_corner]


def dn_apply(cset: CoefficientSet, f, guess=None, tol: float = forward.DEFAULT_TOL, full: bool = False):
    """``f -> d_nu u_f`` at non-corner boundary nodes.

    With ``full=True`` the forward solution is returned as well.
    """
    sol = forward.solve_quasilinear(cset, f=np.asarray(f, dtype=float), guess=guess, tol=tol)
    dn = _dn_samples(sol.u0, cset.grid)
    return (dn, sol) if full else dn


def dn_matrix(
    cset: CoefficientSet,
    basis: BoundaryBasis,
    f0=None,
    amplitude: float = 1.0,
    tol: float = forward.DEFAULT_TOL,
) -> DNMatrix:
    """Nonlinear DN data ``Lambda(f0 + amplitude * mode_j)`` for every basis mode."""
    f0 = cset.f0 if f0 is None else np.asarray(f0, dtype=float)
    base = forward.solve_quasilinear(cset, f=f0, tol=tol)
    cols, scale = [], np.max(np.abs(base.u0))
    for mode in basis.modes:
        dn, sol = dn_apply(cset, f0 + amplitude * mode, guess=base.u0, tol=tol, full=True)
        cols.append(dn)
        scale = max(scale, float(np.max(np.abs(sol.u0))))
    return DNMatrix(
        entries=np.array(cols).T,
        names=basis.names,
        grid=cset.grid,
        floor=dn_floor(cset.grid, tol, scale),
        meta={"kind": "nonlinear", "amplitude": amplitude},
    )


def check_eps(eps: float) -> float:
    eps = float(eps)
    lo, hi = EPS_RANGE
    if not lo <= eps <= hi:
        raise ValueError(f"eps={eps:g} outside [{lo:g}, {hi:g}]")
    return eps


@dataclass(frozen=True, eq=False)
class SecondLinearization:
    """Mixed FD second derivatives of the DN map for requested mode pairs."""

    values: dict  # (j, k) -> samples at non-corner nodes
    eps: float
    floor: float
    names: tuple[str, ...]


def fd_linearize(
    cset: CoefficientSet,
    f0,
    basis: BoundaryBasis,
    order: int = 1,
    eps: float = DEFAULT_EPS,
    pairs=None,
    modes=None,
    tol: float = forward.DEFAULT_TOL,
):
    """Central finite-difference linearization of the DN map at ``f0``.

    ``order=1`` returns a :class:`DNMatrix` whose column ``j`` is
    ``(Lambda(f0 + eps f_j) - Lambda(f0 - eps f_j)) / (2 eps)`` for the modes
    listed in ``modes`` (default: all).  ``order=2`` returns a
    :class:`SecondLinearization` with the four-point mixed stencil for each
    ``(j, k)`` in ``pairs`` (default: all pairs ``j <= k`` of ``modes``).
    Every perturbed solve is warm-started from the base solution.
    """
    eps = check_eps(eps)
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    grid = cset.grid
    f0 = cset.f0 if f0 is None else np.asarray(f0, dtype=float)
    base = forward.solve_quasilinear(cset, f=f0, tol=tol)
    u0 = base.u0
    scale = float(np.max(np.abs(u0)))
    idx = list(range(len(basis))) if modes is None else [basis.index(m) if isinstance(m, str) else int(m) for m in modes]

    def lam(trace):
        try:
            return dn_apply(cset, trace, guess=u0, tol=tol)
        except ForwardError as exc:
            raise ForwardError(f"forward solve failed inside the eps-box (eps={eps:g}): {exc}", exc.history) from exc

    if order == 1:
        cols = [(lam(f0 + eps * basis[j]) - lam(f0 - eps * basis[j])) / (2 * eps) for j in idx]
        return DNMatrix(
            entries=np.array(cols).T,
            names=tuple(basis.names[j] for j in idx),
            grid=grid,
            base_point=(f0, u0),
            floor=dn_floor(grid, tol, scale, order=1, eps=eps),
            meta={"kind": "fd1", "eps": eps, "eps_box": eps},
        )

    if pairs is None:
        pairs = [(j, k) for j, k in itertools.combinations_with_replacement(idx, 2)]
    values = {}
    for j, k in pairs:
        fj, fk = eps * basis[j], eps * basis[k]
        values[(j, k)] = (lam(f0 + fj + fk) - lam(f0 + fj - fk) - lam(f0 - fj + fk) + lam(f0 - fj - fk)) / (
            4 * eps * eps
        )
    return SecondLinearization(values, eps, dn_floor(grid, tol, scale, order=2, eps=eps), basis.names)


# --------------------------------------------------------------------------
# linearized solves


def solve_linearized(L: EllipticProblem, f, tol: float = elliptic.DEFAULT_TOL) -> np.ndarray:
    """``L V = 0`` in the interior, ``V = f`` on the boundary."""
    zero = np.zeros(L.grid.shape, dtype=np.result_type(np.asarray(f), float))
    return elliptic.solve_dirichlet(L.with_data(rhs=zero, trace=np.asarray(f)), tol=tol)


def second_source(q: np.ndarray, V1: np.ndarray, V2: np.ndarray, grid: GridSpec) -> np.ndarray:
    """``div(q V1 grad V2) + div(q V2 grad V1)``.

    Evaluated in the same expanded form as the forward residual, so the
    result is the exact second derivative of the discrete scheme.
    """
    g1, g2 = gradient(V1, grid), gradient(V2, grid)
    qx, qy = gradient(q, grid)
    return (
        q * (V1 * laplacian(V2, grid) + V2 * laplacian(V1, grid))
        + 2.0 * q * (g1[0] * g2[0] + g1[1] * g2[1])
        + qx * (V1 * g2[0] + V2 * g1[0])
        + qy * (V1 * g2[1] + V2 * g1[1])
    )


def solve_second(L: EllipticProblem, V1, V2, q=None, tol: float = elliptic.DEFAULT_TOL) -> np.ndarray:
    """``L w = -(div(q V1 grad V2) + div(q V2 grad V1))``, ``w = 0`` on the boundary.

    ``q`` defaults to the nonlinearity stored on ``L`` by
    :func:`qlinverse.linops.build_linearized`.
    """
    q = L.meta.get("q") if q is None else q
    if q is None:
        raise ValueError("solve_second needs q (not recorded on this operator)")
    grid = L.grid
    src = -second_source(np.asarray(q), V1, V2, grid)
    trace = np.zeros(grid.num_boundary, dtype=src.dtype)
    if not np.any(src[1:-1, 1:-1]):
        return np.zeros(grid.shape, dtype=src.dtype)
    return elliptic.solve_dirichlet(L.with_data(rhs=src, trace=trace), tol=tol)


@dataclass(frozen=True)
class IdentityGap:
    lhs: complex
    rhs: complex
    terms: tuple  # the three boundary integrals
    gap: float
    scale: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.gap <= self.threshold


def verify_second_identity(cset: CoefficientSet, u0, V0, V1, V2, w, C: float = 10.0) -> IdentityGap:
    """Compare ``-int V0 S`` with its boundary form, ``S`` the second-order source.

    Green's formula for ``L`` against ``L* V0 = 0`` gives

        int V0 L w = int_bdry V0 Theta d_nu w + int_bdry V0 q w d_nu u0 - int_bdry w Theta d_nu V0

    and ``L w = -S``.  The last two terms vanish for ``w = 0`` on the boundary
    but are evaluated anyway.  PASS iff the gap is below ``C h`` times the
    input scale.
    """
    grid = cset.grid
    q = cset.q
    theta = cset.sigma + q * u0
    src = second_source(q, V1, V2, grid)
    lhs = -integrate(V0 * src, grid)
    t1 = boundary_flux(V0 * theta, w, grid)
    t2 = boundary_flux(V0 * q * w, u0, grid)
    t3 = -boundary_flux(w * theta, V0, grid)
    rhs = t1 + t2 + t3
    scale = float(
        np.max(np.abs(V0)) * np.max(np.abs(V1)) * np.max(np.abs(V2)) * max(1.0, float(np.max(np.abs(q))))
    )
    gap = float(abs(lhs - rhs))
    return IdentityGap(lhs, rhs, (t1, t2, t3), gap, scale, C * grid.h * scale)


def basis_matrix(dn: DNMatrix, basis: BoundaryBasis) -> np.ndarray:
    """Galerkin matrix ``G[j, k] = h sum m_j Lambda(m_k)`` over non-corner nodes."""
    modes = basis.modes[:, dn.grid.non_corner]
    return dn.grid.h * modes @ dn.entries


def dn_symmetry_gap(dn: DNMatrix, basis: BoundaryBasis) -> float:
    """``max |G - G^T| / max |G|``; small for self-adjoint linear problems."""
    G = basis_matrix(dn, basis)
    return float(np.max(np.abs(G - G.T)) / np.max(np.abs(G)))
