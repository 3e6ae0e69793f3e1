"""
Linearized operator, its adjoint, and the magnetic Schrödinger form.

The linearization of ``div((sigma + q u) grad u)`` at ``u0`` is

    L v  = div(Theta grad v) + q grad u0 . grad v + div(q grad u0) v
    L* v = div(Theta grad v) - q grad u0 . grad v

with ``Theta = sigma + q u0``.  Dividing ``L`` by ``-Theta`` gives the magnetic
operator ``-sum (d_j + i A_j)^2 + Q``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import elliptic
from .elliptic import EllipticProblem
from .forward import CoefficientSet, EllipticityError, frozen_coefficients
from .mesh import GridSpec, divergence, gradient, laplacian, trapezoid_weights


@dataclass(frozen=True, eq=False)
class MagneticData:
    grid: GridSpec
    X: tuple[np.ndarray, np.ndarray]
    R: np.ndarray
    A: tuple[np.ndarray, np.ndarray]
    Q: np.ndarray
    Z: tuple[np.ndarray, np.ndarray]
    Theta: np.ndarray
    Q_expanded: np.ndarray  # closed-form evaluation of Q, independent route


def _require_elliptic(theta, grid):
    k = int(np.argmin(theta))
    if theta.flat[k] <= 0:
        i, j = np.unravel_index(k, theta.shape)
        raise EllipticityError(
            f"Theta = sigma + q u0 = {theta.flat[k]:.3e} <= 0 at node ({i}, {j})", node=(int(i), int(j))
        )


def build_linearized(cset: CoefficientSet, u0: np.ndarray) -> tuple[EllipticProblem, EllipticProblem]:
    """Return ``(L, L*)`` as elliptic triples with zero data."""
    grid = cset.grid
    a, (bx, by), c = frozen_coefficients(cset, u0)
    _require_elliptic(a, grid)
    zero = np.zeros(grid.shape)
    trace = np.zeros(grid.num_boundary)
    L = EllipticProblem(grid, a, (bx, by), c, zero, trace, meta={"kind": "L", "q": cset.q})
    Lstar = EllipticProblem(grid, a, (-bx, -by), zero, zero, trace, meta={"kind": "L*", "q": cset.q})
    return L, Lstar


def build_magnetic(cset: CoefficientSet, u0: np.ndarray) -> MagneticData:
    """Fields ``X, R, A, Q, Z, Theta`` of the magnetic reduction at ``u0``."""
    grid = cset.grid
    sigma, q = cset.sigma, cset.q
    theta = sigma + q * u0
    _require_elliptic(theta, grid)

    sx, sy = gradient(sigma, grid)
    qx, qy = gradient(q, grid)
    ux, uy = gradient(u0, grid)
    # product rule keeps grad Theta consistent with the boundary algebra in recon
    tx = sx + q * ux + u0 * qx
    ty = sy + q * uy + u0 * qy
    lap_u = laplacian(u0, grid)

    Xx = -(tx + q * ux) / theta
    Xy = -(ty + q * uy) / theta
    R = -(qx * ux + qy * uy + q * lap_u) / theta
    Q = 0.25 * (Xx * Xx + Xy * Xy) - 0.5 * divergence(Xx, Xy, grid) + R

    lap_t = laplacian(theta, grid)
    Q_expanded = (
        (lap_t - q * lap_u) / (2 * theta)
        - (qx * ux + qy * uy) / (2 * theta)
        + (q**2 * (ux**2 + uy**2) - (tx**2 + ty**2)) / (4 * theta**2)
    )
    Zx = -(sx + u0 * qx) / theta
    Zy = -(sy + u0 * qy) / theta
    return MagneticData(
        grid=grid,
        X=(Xx, Xy),
        R=R,
        A=(0.5j * Xx, 0.5j * Xy),
        Q=Q,
        Z=(Zx, Zy),
        Theta=theta,
        Q_expanded=Q_expanded,
    )


def magnetic_problem(grid, A, Q, rhs=None, trace=None) -> EllipticProblem:
    """``-lap v - 2i A . grad v + (-i div A + A . A + Q) v`` as an elliptic triple."""
    Ax, Ay = A
    c = -1j * divergence(Ax, Ay, grid) + Ax * Ax + Ay * Ay + Q
    return elliptic.EllipticProblem(
        grid,
        a=-np.ones(grid.shape),
        b=(-2j * Ax, -2j * Ay),
        c=c,
        rhs=np.zeros(grid.shape, dtype=complex) if rhs is None else rhs,
        trace=np.zeros(grid.num_boundary, dtype=complex) if trace is None else np.asarray(trace),
        meta={"kind": "magnetic"},
    )


def apply_magnetic(grid, A, Q, v) -> np.ndarray:
    return elliptic.apply_operator(magnetic_problem(grid, A, Q), v)


# --------------------------------------------------------------------------
# identity checks


@dataclass(frozen=True)
class IdentityReport:
    name: str
    value: float
    samples: tuple = ()

    def passed(self, threshold: float) -> bool:
        return self.value <= threshold


def random_zero_trace_fields(grid: GridSpec, count: int, seed: int, modes: int = 3) -> list[np.ndarray]:
    """Smooth random complex fields vanishing on the boundary.

    The random coefficients depend only on ``seed`` so the same fields are
    sampled on every grid.
    """
    rng = np.random.default_rng(seed)
    X, Y = grid.X, grid.Y
    out = []
    for _ in range(count):
        coef = rng.standard_normal((modes, modes)) + 1j * rng.standard_normal((modes, modes))
        f = np.zeros(grid.shape, dtype=complex)
        for k in range(modes):
            for m in range(modes):
                f += coef[k, m] * np.sin((k + 1) * np.pi * X) * np.sin((m + 1) * np.pi * Y)
        out.append(f)
    return out


def inner(f, g, grid) -> complex:
    """Hermitian pairing ``<f, g> = int conj(f) g`` with trapezoid weights."""
    return np.sum(trapezoid_weights(grid) * np.conj(f) * g)


def l2_norm(f, grid) -> float:
    return float(np.sqrt(np.real(inner(f, f, grid))))


def adjoint_gap(L: EllipticProblem, Lstar: EllipticProblem, f, g) -> float:
    grid = L.grid
    nf, ng = l2_norm(f, grid), l2_norm(g, grid)
    if nf == 0.0 or ng == 0.0:
        return 0.0
    lhs = inner(f, elliptic.apply_operator(L, g), grid)
    rhs = inner(elliptic.apply_operator(Lstar, f), g, grid)
    return float(abs(lhs - rhs) / (nf * ng))


def verify_adjoint_pairing(L: EllipticProblem, trials: int = 20, seed: int = 7, Lstar=None) -> IdentityReport:
    """Largest relative gap ``|<f, Lg> - <L* f, g>| / (|f| |g|)`` over random zero-trace pairs.

    ``Lstar`` defaults to the formal adjoint of ``L``.
    """
    if Lstar is None:
        Lstar = elliptic.formal_adjoint(L)
    fields = random_zero_trace_fields(L.grid, 2 * trials, seed)
    gaps = [adjoint_gap(L, Lstar, fields[2 * t], fields[2 * t + 1]) for t in range(trials)]
    return IdentityReport("adjoint_pairing_gap", max(gaps), tuple(gaps))


def verify_gauge_conjugation(mag: MagneticData, phi: np.ndarray, v: np.ndarray) -> IdentityReport:
    """Relative residual of ``L_{A+grad phi, Q}(e^{-i phi} v) = e^{-i phi} L_{A,Q} v`` on interior nodes."""
    grid = mag.grid
    px, py = gradient(phi, grid)
    shifted = (mag.A[0] + px, mag.A[1] + py)
    gauge = np.exp(-1j * phi)
    lhs = apply_magnetic(grid, shifted, mag.Q, gauge * v)
    rhs = gauge * apply_magnetic(grid, mag.A, mag.Q, v)
    r = (lhs - rhs)[1:-1, 1:-1]
    scale = np.max(np.abs(v))
    value = float(np.max(np.abs(r)) / scale) if scale > 0 else 0.0
    return IdentityReport("gauge_conjugation_residual", value)


def magnetic_consistency(L: EllipticProblem, mag: MagneticData, v: np.ndarray) -> IdentityReport:
    """Relative gap between ``L_{A,Q} v`` and ``-(1/Theta) L v`` on interior nodes."""
    grid = mag.grid
    lhs = apply_magnetic(grid, mag.A, mag.Q, v)
    rhs = -elliptic.apply_operator(L, v) / mag.Theta
    r = (lhs - rhs)[1:-1, 1:-1]
    return IdentityReport("magnetic_consistency", float(np.max(np.abs(r)) / np.max(np.abs(v))))


def q_route_gap(mag: MagneticData) -> IdentityReport:
    """Interior max gap between the substitution route and the closed form of Q."""
    r = (mag.Q - mag.Q_expanded)[1:-1, 1:-1]
    return IdentityReport("q_two_route_gap", float(np.max(np.abs(r))))


def structure_field(cset: CoefficientSet, mag: MagneticData):
    """``q Z + grad q`` (probe direction field) and its closed form ``-q^2 grad(sigma/q) / Theta``."""
    grid = cset.grid
    qx, qy = gradient(cset.q, grid)
    probe = (cset.q * mag.Z[0] + qx, cset.q * mag.Z[1] + qy)
    with np.errstate(divide="ignore", invalid="ignore"):
        rx, ry = gradient(cset.sigma / cset.q, grid)
    closed = (-(cset.q**2) * rx / mag.Theta, -(cset.q**2) * ry / mag.Theta)
    return probe, closed
